"""Edge-state hashing, cluster exploration, and the exact tiny-graph tier.

The hash vectors below were computed once from the reference implementation
and frozen; any change to the mixing constants or the key layout is a
determinism break and must fail here.
"""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from percolab.engine import (
    MAX_EXACT_EDGES,
    PercolationConfig,
    TinyGraph,
    connect_sets,
    edge_key,
    edge_state,
    enumerate_exact,
    exact_event_table,
    explore_cluster,
    mix64,
    open_threshold,
    raw_edge_state,
    sample_key,
    sample_masks,
    spanning_clusters,
    states_over_samples,
)
from percolab.lattice import LatticeSpec, annulus, box, canonical_edge, neighbours

SPEC2 = LatticeSpec(d=2)


# ---------------------------------------------------------------------------
# Hashing


def test_mix64_frozen_vectors():
    assert mix64(0) == 0
    assert mix64(1) == 0x5692161D100B05E5
    assert mix64(2**64 - 1) == 0xB4D055FCF2CBBD7B


def test_key_frozen_vectors():
    assert sample_key(0) == 0xF2EE2134306FF565
    assert edge_key(2024, ((0, 0), (1, 0))) == 0x4918F738DC513113
    assert edge_key(7, ((-3, 5, 2), (-3, 5, 3))) == 0x24C9910D5ED874E4


def test_open_threshold_exact():
    assert open_threshold(Fraction(1, 2)) == 1 << 63
    assert open_threshold(Fraction(1, 3)) == 6148914691236517205
    assert open_threshold(0) == 0
    assert open_threshold(1) == 1 << 64


@given(st.integers(0, 2**63), st.tuples(st.integers(-9, 9), st.integers(-9, 9)))
def test_edge_state_orientation_invariant(seed, x):
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=seed)
    for y in neighbours(SPEC2, x):
        assert (edge_state(cfg, canonical_edge(SPEC2, x, y))
                == edge_state(cfg, canonical_edge(SPEC2, y, x)))


def test_edge_state_rejects_reversed_orientation():
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=99)
    with pytest.raises(ValueError):
        edge_state(cfg, ((1, 0), (0, 0)))


def test_raw_edge_state_is_threshold_on_mixed_key():
    cfg = PercolationConfig(spec=SPEC2, p=Fraction(1, 2), seed=99)
    thr = open_threshold(Fraction(1, 2))
    for k in range(50):
        e = ((k, 0), (k, 1))
        h = mix64(edge_key(99, e) ^ sample_key(0))
        assert raw_edge_state(cfg, e) == int(h < thr)


def test_edge_marginal_frequency():
    # law check: across many distinct edges the open fraction is ~p
    cfg = PercolationConfig(spec=SPEC2, p=0.3, seed=5)
    n = 20_000
    hits = sum(edge_state(cfg, ((k, 0), (k + 1, 0))) for k in range(0, 2 * n, 2))
    se = (0.3 * 0.7 / n) ** 0.5
    assert abs(hits / n - 0.3) < 4 * se


def test_states_over_samples_matches_loop():
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=3)
    e = ((0, 0), (1, 0))
    bulk = states_over_samples(edge_key(3, e), np.arange(64), cfg.threshold)
    loop = [edge_state(cfg.with_sample(s), e) for s in range(64)]
    assert bulk.tolist() == loop


# ---------------------------------------------------------------------------
# Exploration


def test_explore_cluster_full_box_at_p_one():
    cfg = PercolationConfig(spec=SPEC2, p=1.0, seed=1)
    rec = explore_cluster(cfg, (0, 0), box((0, 0), 1))
    assert len(rec.vertices) == 9
    assert not rec.truncated
    assert len(rec.boundary_in) == 0
    assert len(rec.boundary_out) == 8  # every norm-1 vertex sits on the rim


def test_explore_cluster_isolated_at_p_zero():
    cfg = PercolationConfig(spec=SPEC2, p=0.0, seed=1)
    rec = explore_cluster(cfg, (0, 0), box((0, 0), 3))
    assert rec.vertices == frozenset({(0, 0)})


@given(st.integers(0, 400))
def test_explore_order_does_not_change_cluster(sid):
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=17, sample_id=sid)
    region = box((0, 0), 3)
    bfs = explore_cluster(cfg, (0, 0), region, order="bfs")
    dfs = explore_cluster(cfg, (0, 0), region, order="dfs")
    assert bfs.vertices == dfs.vertices
    assert bfs.open_edges == dfs.open_edges


def test_connect_sets_dense_and_empty():
    region = box((0, 0), 4)
    cfg = PercolationConfig(spec=SPEC2, p=1.0, seed=2)
    assert connect_sets(cfg, [(-4, 0)], {(4, 0)}, region)
    cfg0 = PercolationConfig(spec=SPEC2, p=0.0, seed=2)
    assert not connect_sets(cfg0, [(-4, 0)], {(4, 0)}, region)
    # sources that already meet targets connect regardless of edges
    assert connect_sets(cfg0, [(1, 1)], {(1, 1)}, region)


def test_spanning_clusters_degenerate_densities():
    ann = annulus((0, 0), 1, 2)
    recs, truncated = spanning_clusters(
        PercolationConfig(spec=SPEC2, p=1.0, seed=4), ann)
    assert not truncated
    assert len(recs) == 1
    assert len(recs[0].vertices) == 16  # the full norm-2 shell
    # a thickness-1 shell lets singletons span; thickness 2 does not
    recs0, _ = spanning_clusters(
        PercolationConfig(spec=SPEC2, p=0.0, seed=4), annulus((0, 0), 1, 3))
    assert recs0 == []


# ---------------------------------------------------------------------------
# Exact tiny-graph tier


def test_tiny_graph_components_and_connectivity():
    tg = TinyGraph([("a", "b"), ("b", "c"), ("d", "e")])
    comps = tg.components(0b111)
    assert {frozenset(c) for c in comps} >= {frozenset("abc"), frozenset("de")}
    assert tg.connected(0b011, {"a"}, {"c"})
    assert not tg.connected(0b001, {"a"}, {"c"})
    assert not tg.connected(0b111, {"a"}, {"e"})


def test_enumerate_exact_hand_values():
    p = Fraction(2, 5)
    tg1 = TinyGraph([("a", "b")])
    assert enumerate_exact([("a", "b")], p,
                           lambda m: tg1.connected(m, {"a"}, {"b"})) == p

    series = [("a", "m"), ("m", "b")]
    tg2 = TinyGraph(series)
    assert enumerate_exact(series, p,
                           lambda m: tg2.connected(m, {"a"}, {"b"})) == p * p

    # two vertex-disjoint 2-step routes: 1 - (1 - p^2)^2
    par = [("a", "u"), ("u", "b"), ("a", "v"), ("v", "b")]
    tgp = TinyGraph(par)
    assert enumerate_exact(par, p, lambda m: tgp.connected(m, {"a"}, {"b"})) \
        == 1 - (1 - p * p) ** 2

    # direct edge in parallel with a 2-step route: p + p^2 - p^3
    mix = [("a", "b"), ("a", "w"), ("w", "b")]
    tgm = TinyGraph(mix)
    assert enumerate_exact(mix, p, lambda m: tgm.connected(m, {"a"}, {"b"})) \
        == p + p * p - p ** 3


@given(st.integers(1, 6), st.integers(1, 7))
def test_enumerate_exact_total_mass(n_edges, pden):
    edges = [(i, i + 1) for i in range(n_edges)]
    p = Fraction(1, pden + 1)
    assert enumerate_exact(edges, p, lambda m: True) == 1
    tg = TinyGraph(edges)
    ev = lambda m: tg.connected(m, {0}, {n_edges})
    assert (enumerate_exact(edges, p, ev)
            + enumerate_exact(edges, p, lambda m: not ev(m))) == 1


def test_enumerate_exact_rejects_large_instances():
    edges = [(i, i + 1) for i in range(MAX_EXACT_EDGES + 1)]
    with pytest.raises(ValueError):
        enumerate_exact(edges, Fraction(1, 2), lambda m: True)


def test_exact_event_table_matches_query():
    edges = [("a", "b"), ("b", "c"), ("a", "c")]
    tg = TinyGraph(edges)
    q = lambda m: tg.connected(m, {"a"}, {"c"})
    table = exact_event_table(len(edges), q)
    assert len(table) == 8
    for mask in range(8):
        assert bool(table[mask]) == q(mask)


def test_sample_masks_bits_match_edge_states():
    cfg = PercolationConfig(spec=SPEC2, p=0.5, seed=12)
    edges = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((0, 0), (0, 1))]
    sids = np.arange(40)
    masks = sample_masks(cfg, edges, sids)
    assert masks.ndim == 1
    for i, sid in enumerate(sids):
        c = cfg.with_sample(int(sid))
        for k, e in enumerate(edges):
            assert (int(masks[i]) >> k) & 1 == edge_state(c, e)
