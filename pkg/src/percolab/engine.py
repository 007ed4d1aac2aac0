"""Seed-deterministic Bernoulli bond percolation with lazy edge states.

The state of an edge is a pure function of ``(seed, sample_id, edge, p)``:
nothing is ever stored, so exploring a cluster costs O(cluster size) memory
in any dimension.  The bit is derived from a counter-based 64-bit hash:

1. an *edge key* ``K(seed, e)`` absorbs the seed and the canonical edge
   encoding (endpoint coordinate tuples in lexicographic order), one
   avalanche round per absorbed word;
2. a *sample key* ``S = mix(sample_id ^ 0x5851F42D4C957F2D)``;
3. the edge is open iff ``mix(K ^ S) < floor(p * 2^64)``.

``mix`` is the splitmix64 finalizer.  Because the edge key does not depend
on the sample, bulk samplers can hash a whole window's edges once and then
produce any number of samples with a single avalanche pass per sample.  The
construction is frozen by the test vectors in ``tests/test_engine.py``;
changing it is a format break.

Exploration primitives query only edges with both endpoints inside the
allowed region and support hard caps with *tri-state* results: ``True`` /
``False`` are certain, ``None`` means the cap censored the answer.  An
optional ``edge_log`` records every (edge, bit) queried, which the tests use
to prove measurability claims (e.g. spanning-cluster detection never touches
an edge outside the annulus).

``enumerate_exact`` is the oracle twin: exhaustive rational-arithmetic
enumeration over explicit graphs of at most 24 edges.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .lattice import Edge, LatticeSpec, Region, Site, contains, is_edge, neighbours

MASK64 = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15
_SAMPLE_SALT = 0x5851F42D4C957F2D
_COORD_SALT_A = 0xD1B54A32D192ED03
_COORD_SALT_B = 0x8CB92BA72F3D8DD7

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def edge_key(seed: int, e: Edge) -> int:
    """Sample-independent 64-bit key of a canonical edge."""
    h = mix64((seed & MASK64) ^ _PHI)
    a, b = e
    for c in a:
        h = mix64(h ^ (c & MASK64) ^ _COORD_SALT_A)
    for c in b:
        h = mix64(h ^ (c & MASK64) ^ _COORD_SALT_B)
    return h


def sample_key(sample_id: int) -> int:
    return mix64((sample_id & MASK64) ^ _SAMPLE_SALT)


def open_threshold(p: Union[float, Fraction]) -> int:
    """``floor(p * 2^64)``, computed exactly; ``p = 1`` maps to ``2^64``."""
    frac = Fraction(p)
    if not 0 <= frac <= 1:
        raise ValueError(f"probability {p} outside [0, 1]")
    return math.floor(frac * (1 << 64))


@dataclass(frozen=True)
class PercolationConfig:
    spec: LatticeSpec
    p: float
    seed: int
    sample_id: int = 0

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"p = {self.p} outside [0, 1]")

    @property
    def threshold(self) -> int:
        return open_threshold(self.p)

    def with_sample(self, sample_id: int) -> "PercolationConfig":
        return PercolationConfig(self.spec, self.p, self.seed, sample_id)


def edge_state(cfg: PercolationConfig, e: Edge) -> int:
    """Deterministic Bernoulli(p) bit for a canonical edge.

    Validates the edge against the lattice; exploration loops use the
    unvalidated :func:`raw_edge_state` on edges built from ``neighbours``.
    """
    a, b = e
    if not (a < b and is_edge(cfg.spec, a, b)):
        raise ValueError(f"{e} is not a canonical edge for this lattice")
    return raw_edge_state(cfg, e)


def raw_edge_state(cfg: PercolationConfig, e: Edge) -> int:
    h = mix64(edge_key(cfg.seed, e) ^ sample_key(cfg.sample_id))
    return 1 if h < cfg.threshold else 0


def edge_keys_bulk(seed: int, a_coords: np.ndarray, b_coords: np.ndarray) -> np.ndarray:
    """Vectorised :func:`edge_key` over arrays of endpoint coordinates.

    ``a_coords``/``b_coords`` are ``(m, d)`` signed integer arrays with the
    canonical (lexicographic) endpoint order already applied.
    """
    a = np.asarray(a_coords, dtype=np.int64).astype(np.uint64)
    b = np.asarray(b_coords, dtype=np.int64).astype(np.uint64)
    m, d = a.shape
    h = np.full(m, mix64((seed & MASK64) ^ _PHI), dtype=np.uint64)
    for j in range(d):
        h = _mix64_np(h ^ a[:, j] ^ np.uint64(_COORD_SALT_A))
    for j in range(d):
        h = _mix64_np(h ^ b[:, j] ^ np.uint64(_COORD_SALT_B))
    return h


def states_from_keys(
    keys: np.ndarray, sample_id: int, threshold: int
) -> np.ndarray:
    """Edge bits for one sample given precomputed edge keys."""
    if threshold >= 1 << 64:
        return np.ones(len(keys), dtype=np.uint8)
    h = _mix64_np(keys ^ np.uint64(sample_key(sample_id)))
    return (h < np.uint64(threshold)).astype(np.uint8)


def states_over_samples(
    key: int, sample_ids: np.ndarray, threshold: int
) -> np.ndarray:
    """Bits of one edge across many samples (vectorised over sample_id)."""
    ids = np.asarray(sample_ids, dtype=np.uint64)
    s = _mix64_np(ids ^ np.uint64(_SAMPLE_SALT))
    if threshold >= 1 << 64:
        return np.ones(len(ids), dtype=np.uint8)
    h = _mix64_np(np.uint64(key) ^ s)
    return (h < np.uint64(threshold)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Cluster exploration
# ---------------------------------------------------------------------------

RegionLike = Union[Region, FrozenSet[Site], Callable[[Site], bool]]


def region_member(region: RegionLike, x: Site) -> bool:
    if isinstance(region, Region):
        return contains(region, x)
    if isinstance(region, (frozenset, set)):
        return x in region
    return bool(region(x))


@dataclass(frozen=True)
class ClusterRecord:
    """The explored open cluster of ``root`` restricted to ``region``.

    ``boundary_in``/``boundary_out`` are the intersections of the vertex set
    with the region's boundaries (annulus/explicit regions only; empty
    otherwise).  ``truncated`` means the vertex cap censored the closure, so
    the vertex set is a subset of the true restricted cluster.
    """

    root: Site
    region: RegionLike
    vertices: FrozenSet[Site]
    open_edges: FrozenSet[Edge]
    boundary_in: Tuple[Site, ...]
    boundary_out: Tuple[Site, ...]
    truncated: bool

    @property
    def min_vertex(self) -> Site:
        return min(self.vertices)

    @property
    def spans(self) -> bool:
        return bool(self.boundary_in) and bool(self.boundary_out)


def _boundary_membership(spec: LatticeSpec, region: RegionLike, y: Site) -> Tuple[bool, bool]:
    """(in inner boundary, in outer boundary) by arithmetic, no shell lists."""
    if isinstance(region, Region):
        if region.kind == "explicit":
            bi = region.boundary_in or ()
            bo = region.boundary_out or ()
            return (y in bi, y in bo)
        r, s = region.inner, region.outer
        off = [abs(a - c) for a, c in zip(y, region.center)]
        n = max(off)
        if spec.edge_mode == "nearest_neighbour":
            inner = r >= 0 and n == r + 1 and sum(1 for o in off if o == r + 1) == 1
            outer = n == s
        else:
            inner = r >= 0 and r < n <= r + spec.lam
            outer = n >= s - spec.lam + 1
        return (inner, outer)
    return (False, False)


def explore_cluster(
    cfg: PercolationConfig,
    x: Site,
    region: RegionLike,
    cap: int = 1_000_000,
    edge_log: Optional[list] = None,
    order: str = "bfs",
) -> ClusterRecord:
    """Closure of ``x`` under open edges with both endpoints in ``region``.

    Breadth-first by default (``order="dfs"`` exists to let tests prove
    traversal-order independence).  Only edges with both endpoints inside
    the region are ever hashed.  ``truncated`` is set iff the vertex cap was
    hit before the closure stabilised.
    """
    if not region_member(region, x):
        raise ValueError(f"root {x} not in region")
    spec = cfg.spec
    visited: Set[Site] = {x}
    frontier: "deque[Site]" = deque([x])
    open_edges: Set[Edge] = set()
    seen_edges: Dict[Edge, int] = {}
    truncated = False
    while frontier:
        y = frontier.popleft() if order == "bfs" else frontier.pop()
        for z in neighbours(spec, y):
            if not region_member(region, z):
                continue
            e = (y, z) if y < z else (z, y)
            bit = seen_edges.get(e)
            if bit is None:
                bit = raw_edge_state(cfg, e)
                seen_edges[e] = bit
                if edge_log is not None:
                    edge_log.append((e, bit))
            if not bit:
                continue
            open_edges.add(e)
            if z not in visited:
                if len(visited) >= cap:
                    truncated = True
                    continue
                visited.add(z)
                frontier.append(z)
    b_in: List[Site] = []
    b_out: List[Site] = []
    for v in visited:
        bi, bo = _boundary_membership(spec, region, v)
        if bi:
            b_in.append(v)
        if bo:
            b_out.append(v)
    # Keep only open edges internal to the visited set (when truncated, edges
    # to unvisited vertices are dropped to honour the record invariant).
    kept = frozenset(e for e in open_edges if e[0] in visited and e[1] in visited)
    return ClusterRecord(
        root=x,
        region=region,
        vertices=frozenset(visited),
        open_edges=kept,
        boundary_in=tuple(sorted(b_in)),
        boundary_out=tuple(sorted(b_out)),
        truncated=truncated,
    )


def connect_sets(
    cfg: PercolationConfig,
    sources: Iterable[Site],
    targets: Union[Iterable[Site], RegionLike],
    region: RegionLike,
    cap: int = 1_000_000,
    edge_log: Optional[list] = None,
) -> Optional[bool]:
    """Tri-state: is some source joined to some target by an open path in
    ``region``?  ``True``/``False`` are certain; ``None`` means the cap was
    hit before a decision.

    Sources outside the region are skipped (their other lattice locations
    are irrelevant to a restricted connection); a source that *is* a target
    decides immediately.
    """
    spec = cfg.spec
    if isinstance(targets, (Region, frozenset, set)) or callable(targets):
        tmember = lambda y: region_member(targets, y)  # noqa: E731
    else:
        tset = frozenset(tuple(t) for t in targets)
        tmember = lambda y: y in tset  # noqa: E731
    visited: Set[Site] = set()
    frontier: List[Site] = []
    for s in sources:
        s = tuple(s)
        if not region_member(region, s):
            continue
        if tmember(s):
            return True
        if s not in visited:
            visited.add(s)
            frontier.append(s)
    truncated = False
    head = 0
    while head < len(frontier):
        y = frontier[head]
        head += 1
        for z in neighbours(spec, y):
            if z in visited or not region_member(region, z):
                continue
            e = (y, z) if y < z else (z, y)
            bit = raw_edge_state(cfg, e)
            if edge_log is not None:
                edge_log.append((e, bit))
            if not bit:
                continue
            if tmember(z):
                return True
            if len(visited) >= cap:
                truncated = True
                continue
            visited.add(z)
            frontier.append(z)
    return None if truncated else False


def restricted_connect(
    cfg: PercolationConfig,
    x: Site,
    targets: Union[Iterable[Site], RegionLike],
    region: RegionLike,
    cap: int = 1_000_000,
) -> Optional[bool]:
    """Tri-state connection of a single site to a target set inside a region."""
    if not region_member(region, x):
        raise ValueError(f"source {x} not in region")
    return connect_sets(cfg, [x], targets, region, cap)


def spanning_clusters(
    cfg: PercolationConfig,
    ann: Region,
    cap: int = 1_000_000,
    edge_log: Optional[list] = None,
) -> Tuple[List[ClusterRecord], bool]:
    """All open clusters of an annulus touching both of its boundaries.

    Explores from every inner-boundary site, deduplicates by membership, and
    returns records sorted by minimal contained vertex.  The second return
    value flags cap exhaustion (enumeration incomplete).  Only edges with
    both endpoints in the annulus are sampled, which the optional
    ``edge_log`` lets tests verify.
    """
    from .lattice import region_boundaries

    spec = cfg.spec
    b_in, _ = region_boundaries(spec, ann)
    seen: Set[Site] = set()
    out: List[ClusterRecord] = []
    incomplete = False
    for start in b_in:
        if start in seen:
            continue
        rec = explore_cluster(cfg, start, ann, cap=cap, edge_log=edge_log)
        seen |= rec.vertices
        if rec.truncated:
            incomplete = True
        if rec.spans and not rec.truncated:
            out.append(rec)
    out.sort(key=lambda r: r.min_vertex)
    return out, incomplete


# ---------------------------------------------------------------------------
# Exact enumeration oracle
# ---------------------------------------------------------------------------

MAX_EXACT_EDGES = 24


class TinyGraph:
    """An explicit finite graph whose configurations are integer bitmasks.

    Edge ``j`` of ``self.edges`` is open in configuration ``mask`` iff bit
    ``j`` of ``mask`` is set.  Vertices may be any hashable labels.
    """

    def __init__(self, edges: Iterable[Tuple]):
        edges = list(edges)
        if len(edges) > MAX_EXACT_EDGES:
            raise ValueError(f"{len(edges)} edges exceeds exact-enumeration cap {MAX_EXACT_EDGES}")
        canon = []
        seen = set()
        for a, b in edges:
            if a == b:
                raise ValueError("self-loops not allowed")
            canon.append((a, b))
            key = frozenset((a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {a}-{b}")
            seen.add(key)
        self.edges: List[Tuple] = canon
        verts = []
        for a, b in canon:
            for v in (a, b):
                if v not in verts:
                    verts.append(v)
        self.vertices: List = verts
        self._vidx = {v: i for i, v in enumerate(verts)}
        self._eidx = [(self._vidx[a], self._vidx[b]) for a, b in canon]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self, a, b) -> int:
        for j, (x, y) in enumerate(self.edges):
            if (x, y) == (a, b) or (x, y) == (b, a):
                return j
        raise KeyError(f"no edge {a}-{b}")

    def components(self, mask: int, allowed: Optional[Iterable] = None) -> List[Set]:
        """Connected components of the open subgraph (optionally restricted
        to an allowed vertex set; edges touching a disallowed vertex are
        ignored and disallowed vertices do not appear)."""
        n = len(self.vertices)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        if allowed is None:
            amask = None
        else:
            amask = {self._vidx[v] for v in allowed if v in self._vidx}
        for j, (ia, ib) in enumerate(self._eidx):
            if not (mask >> j) & 1:
                continue
            if amask is not None and (ia not in amask or ib not in amask):
                continue
            ra, rb = find(ia), find(ib)
            if ra != rb:
                parent[ra] = rb
        comps: Dict[int, Set] = {}
        idxs = range(n) if amask is None else sorted(amask)
        for i in idxs:
            comps.setdefault(find(i), set()).add(self.vertices[i])
        return list(comps.values())

    def component_of(self, mask: int, v, allowed: Optional[Iterable] = None) -> Set:
        for comp in self.components(mask, allowed):
            if v in comp:
                return comp
        return {v}

    def connected(self, mask: int, sources: Iterable, targets: Iterable,
                  allowed: Optional[Iterable] = None) -> bool:
        """Open path inside ``allowed`` from some source to some target.

        Sources/targets outside ``allowed`` are ignored, except that a
        source that is also a target connects trivially."""
        src = set(sources)
        tgt = set(targets)
        if allowed is not None:
            al = set(allowed)
            if src & tgt & al:
                return True
            src &= al
            tgt &= al
        if src & tgt:
            return True
        if not src or not tgt:
            return False
        for comp in self.components(mask, allowed):
            if comp & src and comp & tgt:
                return True
        return False


def enumerate_exact(
    edges: Sequence[Tuple],
    p: Union[float, Fraction, str],
    query: Callable[[int], bool],
) -> Fraction:
    """Exact probability of ``query`` under i.i.d. Bernoulli(p) edge states.

    ``query`` receives the configuration bitmask.  The sum
    ``sum_masks p^{#open} (1-p)^{#closed} 1{query}`` is accumulated as an
    integer numerator over the common denominator ``den(p)^m``, so the result
    is an exact rational for rational ``p`` (floats are taken at their exact
    binary value).
    """
    g_edges = list(edges)
    m = len(g_edges)
    if m > MAX_EXACT_EDGES:
        raise ValueError(f"{m} edges exceeds exact-enumeration cap {MAX_EXACT_EDGES}")
    pf = Fraction(p)
    if not 0 <= pf <= 1:
        raise ValueError("p outside [0, 1]")
    a, b = pf.numerator, pf.denominator
    c = b - a  # numerator of 1-p over the same denominator
    # popcount-indexed weights: a^k * c^(m-k)
    wts = [a**k * c ** (m - k) for k in range(m + 1)]
    num = 0
    for mask in range(1 << m):
        if query(mask):
            num += wts[bin(mask).count("1")]
    return Fraction(num, b**m)


def exact_event_table(n_edges: int, query: Callable[[int], bool]) -> np.ndarray:
    """Indicator of ``query`` over all ``2^m`` masks (for vectorised lookups)."""
    if n_edges > MAX_EXACT_EDGES:
        raise ValueError("too many edges")
    out = np.zeros(1 << n_edges, dtype=np.uint8)
    for mask in range(1 << n_edges):
        if query(mask):
            out[mask] = 1
    return out


def sample_masks(
    cfg: PercolationConfig, edges: Sequence[Edge], sample_ids: np.ndarray
) -> np.ndarray:
    """Configuration bitmasks of an explicit lattice-edge list across samples.

    Edge ``j`` contributes bit ``j``; uses the same hash as every other
    sampler, vectorised over ``sample_ids``.
    """
    if len(edges) > 63:
        raise ValueError("mask sampler limited to 63 edges")
    ids = np.asarray(sample_ids, dtype=np.uint64)
    masks = np.zeros(len(ids), dtype=np.uint64)
    thr = cfg.threshold
    for j, e in enumerate(edges):
        bits = states_over_samples(edge_key(cfg.seed, e), ids, thr)
        masks |= bits.astype(np.uint64) << np.uint64(j)
    return masks
