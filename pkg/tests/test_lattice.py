"""Geometry layer: norms, adjacency, regions, boundaries, edge counts."""

import pytest
from hypothesis import given, strategies as st

from percolab.lattice import (
    LatticeSpec,
    annulus,
    box,
    canonical_edge,
    contains,
    edge_count_box,
    edges_within,
    is_edge,
    min_norm_of_sites,
    neighbours,
    norm_1,
    norm_inf,
    region_boundaries,
    region_sites,
    site_count,
)

SPEC2 = LatticeSpec(d=2)
SPEC3 = LatticeSpec(d=3)
SPREAD2 = LatticeSpec(d=2, edge_mode="spread_out", lam=2)

sites2 = st.tuples(st.integers(-20, 20), st.integers(-20, 20))


def test_norm_hand_values():
    assert norm_inf((3, -5)) == 5
    assert norm_1((3, -5)) == 8
    assert norm_inf((0, 0)) == 0
    assert norm_inf((-7, 2, 7)) == 7


def test_nearest_neighbour_counts():
    assert len(neighbours(SPEC2, (0, 0))) == 4
    assert len(neighbours(SPEC3, (1, -2, 3))) == 6
    for y in neighbours(SPEC2, (4, 4)):
        assert norm_1(tuple(a - b for a, b in zip(y, (4, 4)))) == 1


def test_spread_out_counts():
    # range-2 box adjacency: (2*2+1)^2 - 1 sites, translation invariant
    assert len(neighbours(SPREAD2, (0, 0))) == 24
    assert len(neighbours(SPREAD2, (3, 3))) == 24
    assert is_edge(SPREAD2, (0, 0), (2, 2))
    assert not is_edge(SPREAD2, (0, 0), (3, 0))
    assert not is_edge(SPEC2, (0, 0), (1, 1))


@given(sites2)
def test_canonical_edge_orientation(x):
    for y in neighbours(SPEC2, x):
        assert canonical_edge(SPEC2, x, y) == canonical_edge(SPEC2, y, x)
        assert is_edge(SPEC2, x, y)


def test_canonical_edge_rejects_non_edges():
    with pytest.raises(ValueError):
        canonical_edge(SPEC2, (0, 0), (1, 1))


def test_box_membership_and_count():
    b = box((0, 0), 2)
    assert contains(b, (2, -2))
    assert not contains(b, (3, 0))
    assert site_count(b, d=2) == 25
    assert len(list(region_sites(b))) == 25


def test_annulus_membership_and_count():
    a = annulus((0, 0), 1, 3)
    assert not contains(a, (1, 0))  # hole is closed: |x| <= 1 excluded
    assert contains(a, (2, 0))
    assert contains(a, (3, 3))
    assert not contains(a, (4, 0))
    assert site_count(a, d=2) == 49 - 9


@given(st.integers(0, 3), st.integers(1, 5))
def test_annulus_count_matches_enumeration(r, gap):
    s = r + gap
    a = annulus((0, 0), r, s)
    assert site_count(a, d=2) == len(list(region_sites(a)))


def test_region_boundaries_annulus():
    # inner: norm-2 sites with a neighbour in the hole (corners excluded
    # because their neighbours all have norm >= 2), outer: all norm-3 sites
    inner, outer = region_boundaries(SPEC2, annulus((0, 0), 1, 3))
    assert len(inner) == 12
    assert len(outer) == 24
    assert all(norm_inf(x) == 2 for x in inner)
    assert all(norm_inf(x) == 3 for x in outer)
    assert (2, 2) not in inner


def test_edge_count_box_matches_enumeration():
    for spec, r in [(SPEC2, 2), (SPEC2, 3), (SPEC3, 1), (SPREAD2, 2)]:
        b = box((0,) * spec.d, r)
        assert edge_count_box(spec, r) == len(list(edges_within(spec, b)))


def test_edges_within_are_canonical_and_inside():
    b = box((0, 0), 2)
    seen = set()
    for e in edges_within(SPEC2, b):
        assert e == canonical_edge(SPEC2, *e)
        assert contains(b, e[0]) and contains(b, e[1])
        assert e not in seen
        seen.add(e)


def test_min_norm_of_sites():
    assert min_norm_of_sites([(3, 0), (1, 2), (-2, -2)]) == 2
    assert min_norm_of_sites([(0, 0)]) == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec(d=0)
    with pytest.raises(ValueError):
        LatticeSpec(d=2, edge_mode="nearest_neighbour", lam=2)
