"""Geometry of Z^d: edge sets, boxes, annuli, and their boundaries.

Conventions used throughout the package:

* Sites are integer coordinate tuples of length ``d``.
* ``B(x; r)`` is the closed l-infinity ball ``x + [-r, r]^d``; ``B(x; -1)``
  is empty, so an annulus with inner radius ``-1`` degenerates to a box and
  ``annulus(x, -1, 0)`` is the singleton ``{x}``.
* Two edge modes: nearest-neighbour (``{x, y}`` with ``|x - y|_1 = 1``) and
  spread-out (``0 < |x - y|_inf <= lam``).
* The inner boundary of the annulus ``A = B(x; s) \\ B(x; r)`` is the set of
  sites of ``A`` with an edge into ``B(x; r)``; the outer boundary is the set
  of sites of ``A`` with an edge out of ``B(x; s)``.
* ``norm_power(x, a)`` maps ``0`` to ``1`` when ``a <= 0`` so that reciprocal
  distance weights never divide by zero.

Everything here is deterministic and purely combinatorial; randomness enters
only in :mod:`percolab.engine`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Tuple

Site = Tuple[int, ...]
Edge = Tuple[Site, Site]

NEAREST_NEIGHBOUR = "nearest_neighbour"
SPREAD_OUT = "spread_out"

#: Hard guard against accidentally materialising an astronomically large
#: region (faithful-mode radii are powers of two with multi-million digit
#: exponents and must stay symbolic).
MATERIALISE_LIMIT = 80_000_000


@dataclass(frozen=True)
class LatticeSpec:
    """Dimension plus edge-set choice.

    ``lam`` is the spread-out range and must be >= 1 in spread-out mode; it is
    forced to 0 in nearest-neighbour mode so that boundary-gap arithmetic
    (which uses ``2 * lam + 1``) works uniformly.
    """

    d: int
    edge_mode: str = NEAREST_NEIGHBOUR
    lam: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.edge_mode not in (NEAREST_NEIGHBOUR, SPREAD_OUT):
            raise ValueError(f"unknown edge_mode {self.edge_mode!r}")
        if self.edge_mode == SPREAD_OUT and self.lam < 1:
            raise ValueError("spread-out mode needs lam >= 1")
        if self.edge_mode == NEAREST_NEIGHBOUR and self.lam != 0:
            raise ValueError("nearest-neighbour mode forces lam = 0")

    @property
    def degree(self) -> int:
        """Number of neighbours of any site (translation invariant)."""
        if self.edge_mode == NEAREST_NEIGHBOUR:
            return 2 * self.d
        return (2 * self.lam + 1) ** self.d - 1

    def offsets(self) -> Tuple[Site, ...]:
        """Neighbour offsets in a fixed lexicographic order."""
        if self.edge_mode == NEAREST_NEIGHBOUR:
            offs = []
            for i in range(self.d):
                for sgn in (-1, 1):
                    v = [0] * self.d
                    v[i] = sgn
                    offs.append(tuple(v))
            return tuple(sorted(offs))
        rng = range(-self.lam, self.lam + 1)
        return tuple(
            v for v in itertools.product(rng, repeat=self.d) if any(c != 0 for c in v)
        )


def norm_inf(x: Site) -> int:
    return max(abs(c) for c in x)


def norm_1(x: Site) -> int:
    return sum(abs(c) for c in x)


def norm_euclid(x: Site) -> float:
    return math.sqrt(sum(c * c for c in x))


def norm_power(x: Site, a: float, norm: str = "euclid") -> float:
    """``|x|^a`` with the convention ``|0|^a = 1`` for ``a <= 0``.

    The convention keeps reciprocal-distance sums such as
    ``sum_z |z - x|^{a-d} |z - y|^{b-d}`` finite at ``z = x`` without special
    casing at every call site.
    """
    if norm == "euclid":
        n = norm_euclid(x)
    elif norm == "inf":
        n = float(norm_inf(x))
    elif norm == "l1":
        n = float(norm_1(x))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if n == 0.0:
        return 1.0 if a <= 0 else 0.0
    return n**a


def is_edge(spec: LatticeSpec, x: Site, y: Site) -> bool:
    if len(x) != spec.d or len(y) != spec.d:
        return False
    if spec.edge_mode == NEAREST_NEIGHBOUR:
        return sum(abs(a - b) for a, b in zip(x, y)) == 1
    dist = max(abs(a - b) for a, b in zip(x, y))
    return 0 < dist <= spec.lam


def canonical_edge(spec: LatticeSpec, x: Site, y: Site) -> Edge:
    """Order the endpoints lexicographically; reject non-edges."""
    if not is_edge(spec, x, y):
        raise ValueError(f"{x}-{y} is not an edge of the {spec.edge_mode} lattice")
    return (x, y) if x < y else (y, x)


def neighbours(spec: LatticeSpec, x: Site) -> Tuple[Site, ...]:
    """All lattice neighbours of ``x`` in a fixed deterministic order."""
    return tuple(tuple(a + b for a, b in zip(x, v)) for v in spec.offsets())


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """A box, an annulus, or an explicit finite site set.

    Boxes are annuli with ``inner == -1``.  Explicit regions may carry caller
    supplied boundary lists (used by the abstract oracle geometries, where
    "annulus" structure is declared rather than derived from radii).
    """

    kind: str  # "annulus" | "explicit"
    center: Optional[Site] = None
    inner: int = -1
    outer: int = -1
    sites: Optional[frozenset] = None
    boundary_in: Optional[Tuple[Site, ...]] = None
    boundary_out: Optional[Tuple[Site, ...]] = None

    def __post_init__(self):
        if self.kind == "annulus":
            if self.center is None:
                raise ValueError("annulus region needs a center")
            if self.inner < -1:
                raise ValueError("inner radius must be >= -1")
            if self.outer <= self.inner:
                raise ValueError(
                    f"outer radius must exceed inner radius, got {self.inner}, {self.outer}"
                )
        elif self.kind == "explicit":
            if self.sites is None:
                raise ValueError("explicit region needs sites")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @property
    def is_box(self) -> bool:
        return self.kind == "annulus" and self.inner == -1


def box(center: Site, r: int) -> Region:
    """``B(center; r)`` as a region (annulus with empty inner hole)."""
    if r < 0:
        raise ValueError("box radius must be >= 0")
    return Region(kind="annulus", center=tuple(center), inner=-1, outer=r)


def annulus(center: Site, r: int, s: int) -> Region:
    """``B(center; s) \\ B(center; r)``; ``r = -1`` gives the full box."""
    return Region(kind="annulus", center=tuple(center), inner=r, outer=s)


def explicit_region(
    sites: Iterable[Site],
    boundary_in: Sequence[Site] = (),
    boundary_out: Sequence[Site] = (),
) -> Region:
    fs = frozenset(tuple(s) for s in sites)
    bi = tuple(tuple(s) for s in boundary_in)
    bo = tuple(tuple(s) for s in boundary_out)
    for b in bi + bo:
        if b not in fs:
            raise ValueError(f"boundary site {b} not in region")
    return Region(kind="explicit", sites=fs, boundary_in=bi, boundary_out=bo)


def contains(region: Region, x: Site) -> bool:
    if region.kind == "explicit":
        return tuple(x) in region.sites
    n = max(abs(a - c) for a, c in zip(x, region.center))
    return region.inner < n <= region.outer


def site_count(region: Region, d: Optional[int] = None) -> int:
    """Exact cardinality; closed form for annuli (safe for huge radii)."""
    if region.kind == "explicit":
        return len(region.sites)
    if d is None:
        d = len(region.center)
    outer = (2 * region.outer + 1) ** d
    inner = 0 if region.inner < 0 else (2 * region.inner + 1) ** d
    return outer - inner


def region_sites(region: Region, limit: int = MATERIALISE_LIMIT) -> Iterator[Site]:
    """Iterate the sites of a finite region in lexicographic order.

    Refuses to run when the cardinality exceeds ``limit``: faithful-mode
    annuli are meant to be reasoned about symbolically, never enumerated.
    """
    if region.kind == "explicit":
        yield from sorted(region.sites)
        return
    if site_count(region) > limit:
        raise ValueError(
            f"region with {site_count(region)} sites exceeds materialisation limit {limit}"
        )
    c = region.center
    s = region.outer
    r = region.inner
    rng = range(-s, s + 1)
    for off in itertools.product(rng, repeat=len(c)):
        if max(abs(o) for o in off) > r:
            yield tuple(a + o for a, o in zip(c, off))


def region_boundaries(spec: LatticeSpec, region: Region) -> Tuple[Tuple[Site, ...], Tuple[Site, ...]]:
    """Inner and outer boundary of an annulus ``B(x;s) \\ B(x;r)``.

    Inner boundary: sites of the region with an edge into ``B(x; r)``.
    Outer boundary: sites of the region with an edge out of ``B(x; s)``.
    For explicit regions the caller-declared boundaries are returned and it is
    an error not to have declared them.
    """
    if region.kind == "explicit":
        if region.boundary_in is None or region.boundary_out is None:
            raise ValueError("explicit region lacks declared boundaries")
        return region.boundary_in, region.boundary_out
    c = region.center
    d = spec.d
    r, s = region.inner, region.outer
    if site_count(region, d) > MATERIALISE_LIMIT:
        raise ValueError("refusing to enumerate boundaries of a huge region")

    inner: list = []
    outer: list = []
    if spec.edge_mode == NEAREST_NEIGHBOUR:
        # A single +-e_i step into B(x;r) exists iff exactly one coordinate
        # attains modulus r+1 and the rest are <= r.
        if r >= 0:
            for y in region_sites(region):
                off = tuple(a - b for a, b in zip(y, c))
                if max(abs(o) for o in off) != r + 1:
                    continue
                if sum(1 for o in off if abs(o) == r + 1) == 1:
                    inner.append(y)
        for y in region_sites(region):
            off = tuple(a - b for a, b in zip(y, c))
            if max(abs(o) for o in off) == s:
                outer.append(y)
    else:
        lam = spec.lam
        # Clamping y onto B(x;r) realises the l-infinity distance, so a site of
        # the region has an edge into the hole iff its norm is <= r + lam.
        for y in region_sites(region):
            n = max(abs(a - b) for a, b in zip(y, c))
            if r >= 0 and r < n <= r + lam:
                inner.append(y)
            if n >= s - lam + 1:
                outer.append(y)
    return tuple(sorted(inner)), tuple(sorted(outer))


def edges_within(spec: LatticeSpec, region: Region) -> Iterator[Edge]:
    """Canonical edges with *both* endpoints in the region (sorted order)."""
    if region.kind == "explicit":
        sites = sorted(region.sites)
        sset = region.sites
    else:
        sites = list(region_sites(region))
        sset = set(sites)
    for x in sites:
        for y in neighbours(spec, x):
            if y > x and y in sset:
                yield (x, y)


def edge_count_box(spec: LatticeSpec, r: int) -> int:
    """Exact ``|E(B(0; r))|`` via closed form (arbitrary precision).

    Nearest neighbour: ``d * (N - 1) * N^{d-1}`` with ``N = 2r + 1``.
    Spread-out: each offset ``v`` contributes ``prod_j (N - |v_j|)`` ordered
    pairs, summed over nonzero ``|v|_inf <= lam`` and halved.
    """
    n = 2 * r + 1
    d = spec.d
    if spec.edge_mode == NEAREST_NEIGHBOUR:
        return d * (n - 1) * n ** (d - 1)
    total = 0
    rng = range(-spec.lam, spec.lam + 1)
    for v in itertools.product(rng, repeat=d):
        if all(c == 0 for c in v):
            continue
        prod = 1
        for c in v:
            prod *= n - abs(c)
        total += prod
    assert total % 2 == 0
    return total // 2


def min_norm_of_sites(sites: Iterable[Site]) -> int:
    """Smallest l-infinity norm over a nonempty site collection."""
    it = iter(sites)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("empty site collection") from None
    m = norm_inf(first)
    for s in it:
        n = norm_inf(s)
        if n < m:
            m = n
    return m
