"""The shipped exact batteries: oracle graphs, two-annulus attachment
enumeration, cluster-exit instances, and the arm-decomposition certificates.

Exact values quoted below were computed from the closed forms where one
exists (series/parallel identities) and otherwise frozen from the
enumeration itself after independent spot-checks.
"""

from fractions import Fraction

import pytest

from percolab.battery import (
    arm_decomposition_instances,
    attachment_pairs,
    decompose_arm_exact,
    enumerate_y_geometry,
    oracle_battery,
    run_nofurther_battery,
    run_oracle_battery,
    y_geometries,
)


# ---------------------------------------------------------------------------
# Oracle graph battery


def test_battery_has_thirty_distinct_graphs():
    bat = oracle_battery()
    assert len(bat) == 30
    assert len({g.name for g in bat}) == 30
    assert all(len(g.edges) <= 12 for g in bat)  # keeps enumeration instant
    kinds = {g.kind for g in bat}
    assert kinds == {"connect", "cluster_ge"}


def test_battery_exact_closed_forms():
    vals = {g.name: g.exact() for g in oracle_battery()}
    # chains: p^length
    assert vals["path1-p0.4"] == Fraction(2, 5)
    assert vals["path5-p0.6"] == Fraction(3, 5) ** 5
    # two vertex-disjoint 2-step routes: 1 - (1 - p^2)^2
    assert vals["parallel2x2-p0.5"] == Fraction(7, 16)
    # antipodal points of an 8-ring: two disjoint 4-paths
    assert vals["ring8-sides-p0.5"] == 1 - (1 - Fraction(1, 2) ** 4) ** 2
    assert vals["grid3x3-corners-p0.5"] == Fraction(1135, 4096)
    assert vals["cube-diag-p0.5"] == Fraction(135, 256)
    assert vals["spread2-p0.5"] == Fraction(101, 128)


def test_battery_exact_values_in_unit_interval():
    for g in oracle_battery():
        v = g.exact()
        assert 0 < v < 1, g.name


def test_oracle_scorecard_on_subset():
    graphs = oracle_battery()[:6]
    rep = run_oracle_battery(n_samples=4000, n_groups=20, seed=9,
                             graphs=graphs)
    assert len(rep.cells) == 6 * 20
    assert rep.pass_fraction >= 0.95
    assert rep.max_abs_z < 6.0
    for cell in rep.cells[:5]:
        assert cell.ok == (abs(cell.z) <= 4.0)


# ---------------------------------------------------------------------------
# Two-annulus attachment battery


def test_y_geometries_shape_budget():
    geoms = y_geometries()
    assert len(geoms) >= 5
    names = [g.name for g in geoms]
    assert len(set(names)) == len(names)
    for g in geoms:
        assert len(g.closed_edges) + len(g.free_edges) <= 22
        assert not (set(g.c_vertices) & set(g.d_vertices))


FROZEN_Y_COUNTS = {
    "single-corridor": {0: 7, 1: 1},
    "twin-corridors": {0: 50, 1: 14},
    "branching-exit": {0: 26, 1: 6},
    "decoy-outside-mid": {0: 28, 1: 4},
    "ring-crosslink": {0: 102, 1: 26},
    "chorded-corridor": {0: 27, 1: 5},
}


def test_y_enumeration_frozen_counts_and_uniqueness():
    for geom in y_geometries():
        res = enumerate_y_geometry(geom)
        assert res.max_pairs <= 1, geom.name
        assert res.violations == [], geom.name
        assert dict(res.counts) == FROZEN_Y_COUNTS[geom.name], geom.name
        if 1 in res.counts:
            assert res.witness_mask is not None


def test_y_witness_masks_reproduce_single_pair():
    for geom in y_geometries():
        res = enumerate_y_geometry(geom)
        if res.witness_mask is None:
            continue
        assert len(attachment_pairs(geom, res.witness_mask)) == 1


def test_attachment_pairs_empty_when_mid_disconnected():
    geom = y_geometries()[0]  # single-corridor
    assert attachment_pairs(geom, 0) == []


# ---------------------------------------------------------------------------
# Cluster-exit battery


def test_nofurther_battery_all_hold():
    rep = run_nofurther_battery(n_instances=60, seed=7)
    assert rep.n_held == 60
    assert rep.all_hold
    assert rep.worst_margin >= 0
    # at least one instance should be tight (equality is achievable)
    assert rep.worst_margin == 0


def test_nofurther_battery_deterministic():
    a = run_nofurther_battery(n_instances=25, seed=3)
    b = run_nofurther_battery(n_instances=25, seed=3)
    assert a.worst_margin == b.worst_margin
    assert a.n_held == b.n_held


# ---------------------------------------------------------------------------
# Arm-decomposition certificates


FROZEN_DECOMP = {
    "diamond": dict(lhs=Fraction(91, 512), rhs=Fraction(5, 32),
                    defect=Fraction(11, 512), max_labels=1),
    "twin-outer-obstacle": dict(lhs=Fraction(47, 256),
                                rhs=Fraction(159, 1024),
                                defect=Fraction(29, 1024), max_labels=2),
    "split-annulus": dict(lhs=Fraction(94689, 390625),
                          rhs=Fraction(324, 3125),
                          defect=Fraction(54189, 390625), max_labels=2),
}


def test_arm_decomposition_frozen_rationals():
    insts = arm_decomposition_instances()
    assert [i.name for i in insts] == list(FROZEN_DECOMP)
    for inst in insts:
        rep = decompose_arm_exact(inst)
        want = FROZEN_DECOMP[inst.name]
        assert rep.lhs == want["lhs"], inst.name
        assert rep.rhs == want["rhs"], inst.name
        assert rep.defect == want["defect"], inst.name
        assert rep.lhs - rep.rhs == rep.defect
        assert rep.max_labels_per_config == want["max_labels"]


def test_arm_decomposition_certificates():
    for inst in arm_decomposition_instances():
        rep = decompose_arm_exact(inst)
        assert rep.factorization_exact, inst.name
        assert rep.union_equals_sum, inst.name
        assert rep.uniqueness_violations == 0, inst.name
        assert rep.containment_ok, inst.name
        lo, hi = rep.band()
        assert lo <= rep.ratio <= hi, inst.name
        assert rep.rhs_cyl <= rep.lhs_cyl  # cylinder variant also contained


def test_arm_decomposition_obstacle_strictly_binds():
    # the outer obstacle must remove probability mass from the arm event
    reps = {i.name: decompose_arm_exact(i)
            for i in arm_decomposition_instances()}
    twin = reps["twin-outer-obstacle"]
    assert twin.lhs < Fraction(209, 1024)  # same geometry without obstacle
