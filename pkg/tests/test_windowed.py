"""The vectorised window sampler against its site-by-site twin.

Both paths must produce bit-identical edge states from the same seed; any
divergence means the two samplers no longer speak the same hash.
"""

import numpy as np

from percolab.engine import PercolationConfig, edge_state, explore_cluster, spanning_clusters
from percolab.lattice import LatticeSpec, annulus, box, edge_count_box
from percolab.windowed import (
    build_window,
    component_labels,
    component_rows,
    connection_indicator,
    sample_open_edges,
    shell_rows,
    spanning_cluster_sets,
)

SPEC2 = LatticeSpec(d=2)
SPEC3 = LatticeSpec(d=3)


def test_window_layout_counts():
    win = build_window(SPEC2, seed=1, outer=3)
    assert win.n_sites == 49
    assert win.member.all()
    assert win.n_edges == edge_count_box(SPEC2, 3)
    for row, site in enumerate(win.sites):
        assert win.row_of(tuple(site)) == row


def test_annular_window_membership():
    win = build_window(SPEC2, seed=1, outer=4, inner=1)
    norms = win.norms()
    assert (win.member == (norms > 1)).all()
    assert set(norms[shell_rows(win, 3)]) == {3}


def test_open_edges_bit_exact_against_scalar_sampler():
    for spec, outer in [(SPEC2, 4), (SPEC3, 2)]:
        win = build_window(spec, seed=77, outer=outer)
        cfg = PercolationConfig(spec=spec, p=0.45, seed=77)
        for sid in range(6):
            bits = sample_open_edges(win, cfg, sid)
            c = cfg.with_sample(sid)
            for k in range(win.n_edges):
                a = tuple(int(v) for v in win.sites[win.edge_rows[k, 0]])
                b = tuple(int(v) for v in win.sites[win.edge_rows[k, 1]])
                assert bool(bits[k]) == bool(edge_state(c, (a, b)))


def test_component_labels_match_exploration():
    win = build_window(SPEC2, seed=5, outer=4)
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=5)
    region = box((0, 0), 4)
    origin = win.row_of((0, 0))
    for sid in range(25):
        labels = component_labels(win, sample_open_edges(win, cfg, sid))
        rows = component_rows(labels, origin)
        sites = {tuple(win.sites[r]) for r in rows}
        rec = explore_cluster(cfg.with_sample(sid), (0, 0), region)
        assert sites == set(rec.vertices)


def test_spanning_sets_match_engine_enumeration():
    win = build_window(SPEC2, seed=9, outer=6, inner=2)
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=9)
    ann = annulus((0, 0), 2, 6)
    for sid in range(25):
        fast = {frozenset(s) for s in spanning_cluster_sets(win, cfg, sid)}
        recs, truncated = spanning_clusters(cfg.with_sample(sid), ann)
        assert not truncated
        slow = {frozenset(r.vertices) for r in recs}
        assert fast == slow


def test_connection_indicator_consistent_with_labels():
    win = build_window(SPEC2, seed=2, outer=3)
    cfg = PercolationConfig(spec=SPEC2, p=0.6, seed=2)
    origin = win.row_of((0, 0))
    targets = shell_rows(win, 3)
    for sid in range(40):
        labels = component_labels(win, sample_open_edges(win, cfg, sid))
        hit = connection_indicator(labels, origin, targets)
        assert hit == bool((labels[targets] == labels[origin]).any())
