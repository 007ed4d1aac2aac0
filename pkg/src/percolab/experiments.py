"""Top-level experiment orchestration.

Builds on the sampling engine and window machinery to run the four headline
experiments:

* empirical extraction of the one-step transition kernels (the localized
  origin-to-cluster step and the onward-arm weights) from certified good
  spanning sets, with the per-sample uniqueness of the localized transition
  asserted as it is tabulated;
* matrix-product reconstruction of conditioned arm probabilities from the
  extracted kernels;
* conditional-measure convergence across conditioning families (the
  incipient-infinite-cluster limit at desk scale), by rejection sampling;
* the supercritical sweep (conditioning on a large-radius escape as a proxy
  for the infinite-cluster conditioning) against the critical value.

Everything is seed-deterministic: a fixed config and sample range produce
identical numbers on every run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .clusters import (
    GoodSpanningParams,
    RegularityParams,
    SpanningSetRecord,
    scan_good_spanning,
)
from .engine import PercolationConfig, connect_sets, edge_state
from .estimators import Estimate, combine_gap_sigma
from .lattice import Edge, LatticeSpec, Site, canonical_edge, norm_inf
from .scales import (
    ScaleIndex,
    ScaleParams,
    conditioning_horizon,
    likelihood_ratio_horizon,
    scale_sequence,
)
from .windowed import (
    Window,
    build_window,
    component_labels,
    connection_indicator,
    sample_open_edges,
)

__all__ = [
    "ConditioningFamily",
    "box_boundary_family",
    "single_vertex_family",
    "obstacle_family",
    "halfspace_family",
    "interleaved_family",
    "CylinderEvent",
    "two_east_edges_event",
    "sure_event",
    "KernelExtraction",
    "extract_kernels",
    "ReconstructionReport",
    "matrix_reconstruction",
    "IICPoint",
    "iic_conditional",
    "iic_series",
    "ConvergenceReport",
    "convergence_diagnostic",
    "SweepPoint",
    "supercritical_sweep",
    "SupercriticalReport",
    "supercritical_report",
]


# ---------------------------------------------------------------------------
# Conditioning families
# ---------------------------------------------------------------------------

_FAMILY_KINDS = (
    "box_boundary",
    "single_vertex",
    "vertex_set_with_obstacle",
    "halfspace_target",
    "interleaved",
)


@dataclass(frozen=True)
class ConditioningFamily:
    """A rule producing, per scale ``n``, the arm target set ``V_n``, the
    obstacle set ``D_n``, and its finite simulation window.

    Every kind keeps ``(V_n u D_n) n B(n)`` empty.  ``box_boundary`` and
    ``vertex_set_with_obstacle`` put the targets on a full shell, so the arm
    event is decided exactly inside the window (a path cannot leave without
    first hitting the target shell); ``single_vertex`` and
    ``halfspace_target`` are genuinely unbounded and use a padded window
    whose truncation bias is documented rather than eliminated.

    ``interleaved`` alternates two sub-families along its ``n_list``
    (even positions from the first, odd from the second).
    """

    kind: str
    n_list: Tuple[int, ...]
    sub: Optional[Tuple["ConditioningFamily", "ConditioningFamily"]] = None

    def __post_init__(self):
        if self.kind not in _FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if any(n < 2 for n in self.n_list):
            raise ValueError("family scales must be >= 2")
        if (self.kind == "interleaved") != (self.sub is not None):
            raise ValueError("sub-families exactly when kind is interleaved")

    # -- delegation for the interleaved kind -------------------------------
    def member_for(self, n: int) -> "ConditioningFamily":
        if self.kind != "interleaved":
            return self
        try:
            pos = self.n_list.index(n)
        except ValueError:
            raise ValueError(f"{n} not in the interleaved n_list") from None
        return self.sub[pos % 2]

    # -- geometry ----------------------------------------------------------
    def obstacle_sites(self, spec: LatticeSpec, n: int) -> FrozenSet[Site]:
        fam = self.member_for(n)
        if fam.kind != "vertex_set_with_obstacle":
            return frozenset()
        sites = []
        for x in _shell_sites(spec.d, n + 1):
            if x[0] <= 0:
                sites.append(x)
        return frozenset(sites)

    def window_outer(self, n: int) -> int:
        fam = self.member_for(n)
        if fam.kind == "box_boundary":
            return n + 1
        if fam.kind == "vertex_set_with_obstacle":
            return n + 2
        # unbounded-target kinds: pad by half a scale
        return n + 1 + (n + 1) // 2

    def exact_window(self, n: int) -> bool:
        """True when the arm event is decided exactly within the window."""
        return self.member_for(n).kind in ("box_boundary", "vertex_set_with_obstacle")

    def min_data_norm(self, n: int) -> int:
        """Smallest sup-norm over ``V_n u D_n`` (exact, window-free)."""
        return n + 1

    def target_rows(self, win: Window, spec: LatticeSpec, n: int) -> np.ndarray:
        fam = self.member_for(n)
        norms = win.norms()
        if fam.kind in ("box_boundary", "vertex_set_with_obstacle"):
            radius = n + 1 if fam.kind == "box_boundary" else n + 2
            return np.nonzero(norms == radius)[0]
        if fam.kind == "single_vertex":
            target = (n + 1,) + (0,) * (spec.d - 1)
            return np.asarray([win.row_of(target)], dtype=np.int64)
        if fam.kind == "halfspace_target":
            return np.nonzero(win.sites[:, 0] == n + 1)[0]
        raise AssertionError(fam.kind)

    def target_sites(self, spec: LatticeSpec, n: int) -> FrozenSet[Site]:
        """The target set, materialized within the family's own window."""
        fam = self.member_for(n)
        if fam.kind == "box_boundary":
            return frozenset(_shell_sites(spec.d, n + 1))
        if fam.kind == "vertex_set_with_obstacle":
            return frozenset(_shell_sites(spec.d, n + 2))
        if fam.kind == "single_vertex":
            return frozenset({(n + 1,) + (0,) * (spec.d - 1)})
        if fam.kind == "halfspace_target":
            outer = self.window_outer(n)
            rng = range(-outer, outer + 1)
            return frozenset(
                (n + 1,) + rest
                for rest in _product_sites(spec.d - 1, rng)
            )
        raise AssertionError(fam.kind)

    def validate(self, spec: LatticeSpec, n: int, win: Optional[Window] = None) -> None:
        """Family invariants: data clear of ``B(n)``; arm feasible at p=1."""
        fam = self.member_for(n)
        obstacles = self.obstacle_sites(spec, n)
        for x in obstacles:
            if norm_inf(x) <= n:
                raise ValueError(f"obstacle {x} intrudes into B({n})")
        if self.min_data_norm(n) <= n:
            raise ValueError("targets intrude into B(n)")
        if win is not None:
            labels = component_labels(
                win,
                np.ones(win.n_edges, dtype=bool),
                blocked_rows=win.rows_of(sorted(obstacles)) if obstacles else None,
            )
            origin = win.row_of((0,) * spec.d)
            if not connection_indicator(labels, np.asarray([origin]),
                                        self.target_rows(win, spec, n)):
                raise ValueError(
                    f"{fam.kind}: no obstacle-avoiding route from 0 to V_{n}"
                )


def _shell_sites(d: int, radius: int):
    """All sites at sup-norm exactly ``radius``."""
    out = []
    rng = range(-radius, radius + 1)
    for x in _product_sites(d, rng):
        if max(abs(c) for c in x) == radius:
            out.append(x)
    return out


def _product_sites(d: int, rng) -> List[Tuple[int, ...]]:
    sites = [()]
    for _ in range(d):
        sites = [s + (c,) for s in sites for c in rng]
    return sites


def box_boundary_family(n_list: Sequence[int]) -> ConditioningFamily:
    return ConditioningFamily("box_boundary", tuple(n_list))


def single_vertex_family(n_list: Sequence[int]) -> ConditioningFamily:
    return ConditioningFamily("single_vertex", tuple(n_list))


def obstacle_family(n_list: Sequence[int]) -> ConditioningFamily:
    return ConditioningFamily("vertex_set_with_obstacle", tuple(n_list))


def halfspace_family(n_list: Sequence[int]) -> ConditioningFamily:
    return ConditioningFamily("halfspace_target", tuple(n_list))


def interleaved_family(a: ConditioningFamily, b: ConditioningFamily,
                       n_list: Sequence[int]) -> ConditioningFamily:
    """Alternate two families along ``n_list`` (even positions a, odd b)."""
    return ConditioningFamily("interleaved", tuple(n_list), sub=(a, b))


# ---------------------------------------------------------------------------
# Cylinder events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CylinderEvent:
    """An event measurable w.r.t. the edges inside ``B(2^L)``.

    Either an explicit edge-state ``pattern`` (every listed edge must match
    the required state) or a ``predicate`` over a sample-bound config whose
    support the caller promises stays inside the ball.
    """

    name: str
    L: int
    pattern: Tuple[Tuple[Edge, bool], ...] = ()
    predicate: Optional[Callable[[PercolationConfig], bool]] = None

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.pattern and self.predicate is not None:
            raise ValueError("give a pattern or a predicate, not both")
        radius = 2**self.L
        for (a, b), _ in self.pattern:
            if max(norm_inf(a), norm_inf(b)) > radius:
                raise ValueError(f"edge {a}-{b} leaves B(2^{self.L})")

    def evaluate(self, cfg: PercolationConfig) -> bool:
        if self.predicate is not None:
            return bool(self.predicate(cfg))
        return all(edge_state(cfg, canonical_edge(cfg.spec, a, b)) == want
                   for (a, b), want in self.pattern)


def two_east_edges_event(spec: LatticeSpec) -> CylinderEvent:
    """Both edges east of the origin open; supported in ``B(2)``, L = 1."""
    zeros = (0,) * (spec.d - 1)
    e1 = ((0,) + zeros, (1,) + zeros)
    e2 = ((1,) + zeros, (2,) + zeros)
    return CylinderEvent("two-east-edges", 1, ((e1, True), (e2, True)))


def sure_event() -> CylinderEvent:
    return CylinderEvent("sure", 0, ())


# ---------------------------------------------------------------------------
# Kernel extraction
# ---------------------------------------------------------------------------

Label = Tuple[Site, ...]  # canonical good-set encoding: sorted vertex tuple

_ORIGIN_LABEL: Label = ()


def _gate_level(
    params: ScaleParams,
    spec: LatticeSpec,
    level_needed: int,
    family: ConditioningFamily,
    n: int,
    p: float,
    p_c_ref: float,
    out_warnings: List[str],
) -> None:
    """Honour the horizon hypotheses: refuse in faithful mode, warn in toy."""
    target_probe = [(family.min_data_norm(n),) + (0,) * (spec.d - 1)]
    q_n = conditioning_horizon(params, target_probe,
                               family.obstacle_sites(spec, n))
    try:
        beta = likelihood_ratio_horizon(params, spec, p, p_c_ref)
    except ValueError:
        beta = math.inf  # subcritical p: the ratio gate is vacuous here
    gate = min(q_n, beta)
    if level_needed < 0 or level_needed + 1 >= gate:
        msg = (
            f"level j={level_needed + 1} outside 1 <= j < min(Q(n)={q_n}, "
            f"beta(p)={beta}); the product error band is not guaranteed"
        )
        if params.mode == "faithful":
            raise ValueError(msg)
        out_warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


@dataclass
class KernelExtraction:
    """Empirical one-step kernels tabulated from certified good sets.

    ``d_labels`` are the level i+1 good spanning sets seen across the
    sample range (sorted-vertex canonical encoding, deduplicated);
    ``c_labels`` likewise at level i, with the single pseudo-label ``()``
    standing for the origin when i = 0.  ``m_hat[(ci, di)]`` estimates the
    localized-transition kernel entry (the event-free variant at i = 0);
    ``m_event`` additionally intersects the cylinder event (i = 0 only);
    ``gamma[di]`` estimates the onward-arm weight conditional on the label's
    occurrence.  ``g_violations`` counts samples realising the localized
    transition for two distinct labels simultaneously — any nonzero count is
    an invariant violation.
    """

    level: int
    c_labels: List[Label]
    d_labels: List[Label]
    label_counts: Dict[Label, int]
    label_q: Dict[Label, int]
    m_hat: Dict[Tuple[int, int], Estimate]
    m_event: Dict[Tuple[int, int], Estimate]
    gamma: Dict[int, Estimate]
    n_samples: int
    seed: int
    sample_range: Tuple[int, int]
    g_violations: int
    f_containment_failures: int
    warnings: List[str] = field(default_factory=list)

    @property
    def zero_count_cells(self) -> List[Tuple[int, int]]:
        return [key for key, est in self.m_hat.items() if est.value == 0.0]

    def summary(self) -> dict:
        return {
            "level": self.level,
            "n_c_labels": len(self.c_labels),
            "n_d_labels": len(self.d_labels),
            "n_samples": self.n_samples,
            "g_violations": self.g_violations,
            "f_containment_failures": self.f_containment_failures,
            "n_zero_cells": len(self.zero_count_cells),
            "warnings": list(self.warnings),
        }


def _sep_box_pred(sep_radius: int) -> Callable[[Site], bool]:
    return lambda x: norm_inf(x) <= sep_radius


def _shell_pred(radius: int) -> Callable[[Site], bool]:
    return lambda x: norm_inf(x) == radius


def extract_kernels(
    cfg: PercolationConfig,
    params: ScaleParams,
    level: int,
    n_samples: int,
    family: ConditioningFamily,
    n: int,
    event: Optional[CylinderEvent] = None,
    good: Optional[GoodSpanningParams] = None,
    reg: Optional[RegularityParams] = None,
    q_list: Optional[Sequence[int]] = None,
    sample_start: int = 0,
    p_c_ref: float = 0.5,
    cap: int = 1_000_000,
) -> KernelExtraction:
    """Tabulate the level-``level`` transition kernel from simulation.

    Per sample: certify the good spanning sets of the level and
    level+1 annuli; for each certified pair evaluate the localized
    transition (connection off the inner separation box, no escape to the
    outer separation shell avoiding the target set) and the onward arm.
    Conditional frequencies become kernel entries keyed by canonical labels.

    The per-sample uniqueness of the localized transition and its
    containment in the relaxed transition are asserted sample by sample and
    reported as violation counts (both must be zero).
    """
    spec = cfg.spec
    warns: List[str] = []
    _gate_level(params, spec, level, family, n, cfg.p, p_c_ref, warns)
    if good is None:
        good = GoodSpanningParams()
    if reg is None:
        reg = RegularityParams()
    ladder = scale_sequence(params, level + 1)
    idx_d: ScaleIndex = ladder[level + 1]
    idx_c: Optional[ScaleIndex] = ladder[level] if level >= 1 else None
    # Escape shell = boundary of the level+1 separation box.  At level 0 the
    # level-0 separation box degenerates to the origin's immediate ball, so
    # the inward link is evaluated inside the level-1 box instead.
    sep_out_radius = 2 ** idx_d.ell
    sep_in = 2 ** idx_c.ell if idx_c is not None else None
    window_outer = family.window_outer(n)
    obstacles = family.obstacle_sites(spec, n)
    targets = family.target_sites(spec, n)
    origin = (0,) * spec.d

    family.validate(spec, n)

    counts: Dict[Label, int] = {}
    label_q: Dict[Label, int] = {}
    c_counts: Dict[Label, int] = {}
    core_hits: Dict[Tuple[Label, Label], int] = {}
    event_hits: Dict[Tuple[Label, Label], int] = {}
    gamma_hits: Dict[Label, int] = {}
    g_violations = 0
    f_failures = 0

    if level == 0:
        c_counts[_ORIGIN_LABEL] = 0

    def arm_region(x: Site) -> bool:
        return (
            norm_inf(x) <= window_outer
            and norm_inf(x) > sep_out_radius
            and x not in obstacles
        )

    for sid in range(sample_start, sample_start + n_samples):
        c = cfg.with_sample(sid)
        d_records = [r for r in scan_good_spanning(c, idx_d, params, good, reg, q_list)
                     if r.good]
        if level == 0:
            c_records: List[Optional[SpanningSetRecord]] = [None]
            c_counts[_ORIGIN_LABEL] += 1
        else:
            c_records = [r for r in scan_good_spanning(c, idx_c, params, good, reg, q_list)
                         if r.good]
            for crec in c_records:
                clab = tuple(sorted(crec.cluster.vertices))
                c_counts[clab] = c_counts.get(clab, 0) + 1

        ev_ok = event.evaluate(c) if event is not None else True

        d_info = []
        for drec in d_records:
            dlab = tuple(sorted(drec.cluster.vertices))
            counts[dlab] = counts.get(dlab, 0) + 1
            label_q[dlab] = drec.q
            dverts = drec.cluster.vertices
            arm_src = [x for x in dverts if norm_inf(x) > sep_out_radius]
            arm = connect_sets(c, arm_src, targets, arm_region, cap=cap)
            if arm is None:
                raise RuntimeError("arm query hit the exploration cap")
            if arm:
                gamma_hits[dlab] = gamma_hits.get(dlab, 0) + 1
            d_info.append((drec, dlab, arm))

        for crec in c_records:
            if crec is None:
                clab = _ORIGIN_LABEL
                c_sites: Tuple[Site, ...] = (origin,)
            else:
                clab = tuple(sorted(crec.cluster.vertices))
                c_sites = tuple(crec.cluster.vertices)
            n_g = 0
            g_label = None
            for drec, dlab, arm in d_info:
                dverts = drec.cluster.vertices
                if clab == dlab:
                    continue
                if level == 0:
                    link = connect_sets(
                        c, [origin], dverts, _sep_box_pred(sep_out_radius), cap=cap
                    )
                    leak = connect_sets(
                        c, [origin],
                        _shell_pred(sep_out_radius),
                        lambda x, dv=dverts: norm_inf(x) <= sep_out_radius
                        and x not in dv,
                        cap=cap,
                    )
                else:
                    link = connect_sets(
                        c,
                        [x for x in c_sites if norm_inf(x) > sep_in],
                        dverts,
                        lambda x: sep_in < norm_inf(x) <= window_outer,
                        cap=cap,
                    )
                    leak = connect_sets(
                        c, c_sites,
                        _shell_pred(sep_out_radius),
                        lambda x, dv=dverts: norm_inf(x) <= sep_out_radius and x not in dv,
                        cap=cap,
                    )
                if link is None or leak is None:
                    raise RuntimeError("kernel query hit the exploration cap")
                core = bool(link) and not bool(leak)
                if core:
                    key = (clab, dlab)
                    core_hits[key] = core_hits.get(key, 0) + 1
                    if ev_ok:
                        event_hits[key] = event_hits.get(key, 0) + 1
                    if arm:
                        n_g += 1
                        g_label = (dlab, dverts)
            if n_g > 1:
                g_violations += 1
            if n_g >= 1 and level == 0:
                # G => F: the origin must reach the realised label avoiding
                # the obstacle set (the relaxed transition's connection).
                dlab, dverts = g_label
                f_conn = connect_sets(
                    c, [origin], dverts,
                    lambda x: norm_inf(x) <= window_outer and x not in obstacles,
                    cap=cap,
                )
                if not f_conn:
                    f_failures += 1

    c_labels = sorted(c_counts)
    d_labels = sorted(counts)
    c_index = {lab: i for i, lab in enumerate(c_labels)}
    d_index = {lab: i for i, lab in enumerate(d_labels)}
    srange = (sample_start, sample_start + n_samples)

    m_hat: Dict[Tuple[int, int], Estimate] = {}
    m_event: Dict[Tuple[int, int], Estimate] = {}
    for clab, ci in c_index.items():
        denom = n_samples if level == 0 else c_counts[clab]
        for dlab, di in d_index.items():
            if clab == dlab:
                continue
            hits = core_hits.get((clab, dlab), 0)
            if denom > 0:
                m_hat[(ci, di)] = Estimate.from_counts(
                    hits, denom, seed=cfg.seed, sample_range=srange
                )
                if level == 0 and event is not None:
                    m_event[(ci, di)] = Estimate.from_counts(
                        event_hits.get((clab, dlab), 0), denom,
                        seed=cfg.seed, sample_range=srange,
                    )
    gamma = {
        d_index[lab]: Estimate.from_counts(
            gamma_hits.get(lab, 0), counts[lab], seed=cfg.seed, sample_range=srange
        )
        for lab in d_labels
    }

    if not d_labels:
        warns.append(f"no certified good spanning sets at level {level + 1}")

    return KernelExtraction(
        level=level,
        c_labels=c_labels,
        d_labels=d_labels,
        label_counts=counts,
        label_q=label_q,
        m_hat=m_hat,
        m_event=m_event,
        gamma=gamma,
        n_samples=n_samples,
        seed=cfg.seed,
        sample_range=srange,
        g_violations=g_violations,
        f_containment_failures=f_failures,
        warnings=warns,
    )


# ---------------------------------------------------------------------------
# Matrix reconstruction
# ---------------------------------------------------------------------------


@dataclass
class ReconstructionReport:
    j: int
    lhs: Estimate
    rhs: float
    rhs_stderr: float
    extractions: List[KernelExtraction]
    n: int
    family_kind: str
    event_name: str

    @property
    def ratio(self) -> Optional[float]:
        return None if self.rhs == 0.0 else self.lhs.value / self.rhs

    @property
    def ratio_stderr(self) -> Optional[float]:
        if self.rhs == 0.0 or self.lhs.value == 0.0:
            return None
        rel = math.hypot(
            self.lhs.stderr / self.lhs.value, self.rhs_stderr / self.rhs
        )
        return abs(self.ratio) * rel

    def summary(self) -> dict:
        return {
            "j": self.j,
            "n": self.n,
            "family": self.family_kind,
            "event": self.event_name,
            "lhs": self.lhs.value,
            "lhs_stderr": self.lhs.stderr,
            "rhs": self.rhs,
            "rhs_stderr": self.rhs_stderr,
            "ratio": self.ratio,
            "ratio_stderr": self.ratio_stderr,
            "g_violations": sum(e.g_violations for e in self.extractions),
        }


def matrix_reconstruction(
    cfg: PercolationConfig,
    j: int,
    family: ConditioningFamily,
    n: int,
    n_samples: int,
    params: ScaleParams,
    event: Optional[CylinderEvent] = None,
    good: Optional[GoodSpanningParams] = None,
    reg: Optional[RegularityParams] = None,
    sample_start: int = 0,
    p_c_ref: float = 0.5,
) -> ReconstructionReport:
    """Compare the direct conditioned-arm estimate with the kernel product.

    ``lhs`` estimates P(E and 0 connected to the targets off the obstacle
    set) on a sample range disjoint from the extraction's; ``rhs`` chains
    the extracted kernels: the level-0 entries (with the event), the
    intermediate kernels up to level j-1, and the level-j onward weights.
    The lower-bound construction makes rhs an estimate of a sub-event of
    lhs, so the reported ratio is expected to be >= 1 up to noise, with the
    gap the (unreported-constant) product error band.
    """
    if j < 1:
        raise ValueError("reconstruction needs j >= 1")
    extractions = []
    for lev in range(j):
        extractions.append(
            extract_kernels(
                cfg, params, lev, n_samples, family, n,
                event=event if lev == 0 else None,
                good=good, reg=reg,
                sample_start=sample_start, p_c_ref=p_c_ref,
            )
        )

    # chain the kernels: start from the level-0 row vector
    ext0 = extractions[0]
    use = ext0.m_event if (event is not None and ext0.m_event) else ext0.m_hat
    vec: Dict[Label, Tuple[float, float]] = {}
    for (ci, di), est in use.items():
        lab = ext0.d_labels[di]
        v, s = vec.get(lab, (0.0, 0.0))
        vec[lab] = (v + est.value, math.hypot(s, est.stderr))
    for ext in extractions[1:]:
        nxt: Dict[Label, Tuple[float, float]] = {}
        cpos = {lab: i for i, lab in enumerate(ext.c_labels)}
        for lab, (v, s) in vec.items():
            ci = cpos.get(lab)
            if ci is None:
                continue
            for (cj, dj), est in ext.m_hat.items():
                if cj != ci:
                    continue
                dlab = ext.d_labels[dj]
                pv, ps = nxt.get(dlab, (0.0, 0.0))
                term = v * est.value
                term_s = abs(term) * math.hypot(
                    s / v if v else 0.0, est.stderr / est.value if est.value else 0.0
                )
                nxt[dlab] = (pv + term, math.hypot(ps, term_s))
        vec = nxt

    last = extractions[-1]
    dpos = {lab: i for i, lab in enumerate(last.d_labels)}
    rhs = 0.0
    rhs_var = 0.0
    for lab, (v, s) in vec.items():
        gi = dpos.get(lab)
        if gi is None:
            continue
        g = last.gamma[gi]
        rhs += v * g.value
        rhs_var += (g.value * s) ** 2 + (v * g.stderr) ** 2
    rhs_stderr = math.sqrt(rhs_var)

    # direct side, on fresh samples
    spec = cfg.spec
    win = build_window(spec, cfg.seed, family.window_outer(n))
    family.validate(spec, n, win)
    obstacles = family.obstacle_sites(spec, n)
    blocked = win.rows_of(sorted(obstacles)) if obstacles else None
    tgt_rows = family.target_rows(win, spec, n)
    origin_row = np.asarray([win.row_of((0,) * spec.d)])
    lhs_start = sample_start + n_samples
    hits = 0
    for sid in range(lhs_start, lhs_start + n_samples):
        c = cfg.with_sample(sid)
        if event is not None and not event.evaluate(c):
            continue
        open_mask = sample_open_edges(win, cfg, sid)
        labels = component_labels(win, open_mask, blocked_rows=blocked)
        if connection_indicator(labels, origin_row, tgt_rows):
            hits += 1
    lhs = Estimate.from_counts(hits, n_samples, seed=cfg.seed,
                               sample_range=(lhs_start, lhs_start + n_samples))

    return ReconstructionReport(
        j=j, lhs=lhs, rhs=rhs, rhs_stderr=rhs_stderr,
        extractions=extractions, n=n, family_kind=family.kind,
        event_name=event.name if event else "sure",
    )


# ---------------------------------------------------------------------------
# IIC conditional measure by rejection sampling
# ---------------------------------------------------------------------------


@dataclass
class IICPoint:
    n: int
    family_kind: str
    event_name: str
    conditional: Estimate
    acceptance: Estimate
    n_accepted: int
    low_confidence: bool
    exact_window: bool

    def row(self) -> Tuple:
        return (
            self.family_kind, self.event_name, self.n,
            self.conditional.value, self.conditional.stderr,
            self.acceptance.value, self.n_accepted,
            int(self.low_confidence), int(self.exact_window),
        )


def iic_conditional(
    cfg: PercolationConfig,
    event: CylinderEvent,
    family: ConditioningFamily,
    n: int,
    n_samples: int,
    sample_start: int = 0,
) -> IICPoint:
    """P(E | origin reaches the targets off the obstacle set), by rejection.

    Samples achieving the arm are kept; the event frequency among them is
    the conditional estimate.  Acceptance statistics ship with the point so
    starvation is visible; fewer than 100 accepted samples flags the point
    low-confidence.
    """
    spec = cfg.spec
    win = build_window(spec, cfg.seed, family.window_outer(n))
    family.validate(spec, n, win)
    obstacles = family.obstacle_sites(spec, n)
    blocked = win.rows_of(sorted(obstacles)) if obstacles else None
    tgt_rows = family.target_rows(win, spec, n)
    origin_row = np.asarray([win.row_of((0,) * spec.d)])

    accepted = 0
    hits = 0
    for sid in range(sample_start, sample_start + n_samples):
        open_mask = sample_open_edges(win, cfg, sid)
        labels = component_labels(win, open_mask, blocked_rows=blocked)
        if not connection_indicator(labels, origin_row, tgt_rows):
            continue
        accepted += 1
        if event.evaluate(cfg.with_sample(sid)):
            hits += 1

    srange = (sample_start, sample_start + n_samples)
    conditional = Estimate.from_counts(hits, accepted, seed=cfg.seed,
                                       sample_range=srange)
    acceptance = Estimate.from_counts(accepted, n_samples, seed=cfg.seed,
                                      sample_range=srange)
    return IICPoint(
        n=n,
        family_kind=family.member_for(n).kind,
        event_name=event.name,
        conditional=conditional,
        acceptance=acceptance,
        n_accepted=accepted,
        low_confidence=accepted < 100,
        exact_window=family.exact_window(n),
    )


def iic_series(
    cfg: PercolationConfig,
    event: CylinderEvent,
    family: ConditioningFamily,
    n_samples: int,
    sample_start: int = 0,
) -> List[IICPoint]:
    return [
        iic_conditional(cfg, event, family, n, n_samples, sample_start)
        for n in family.n_list
    ]


# ---------------------------------------------------------------------------
# Convergence diagnostics
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    successive: List[Tuple[str, int, int, float, float]]  # family, n_a, n_b, gap, sigma
    terminal_gap: Optional[Tuple[str, str, float, float]]
    verdict: str
    slack: float

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "successive": [
                {"family": f, "n_from": a, "n_to": b, "gap": g, "sigma": s}
                for f, a, b, g, s in self.successive
            ],
            "terminal_gap": None if self.terminal_gap is None else {
                "family_a": self.terminal_gap[0],
                "family_b": self.terminal_gap[1],
                "gap": self.terminal_gap[2],
                "sigma": self.terminal_gap[3],
            },
            "slack": self.slack,
        }


def convergence_diagnostic(
    series_by_family: Dict[str, List[IICPoint]],
    slack: float = 0.02,
) -> ConvergenceReport:
    """Successive-difference and cross-family agreement at 3 sigma.

    Verdict tiers: ``consistent`` when every successive gap and the terminal
    cross-family gap sit within 3 combined sigma; ``inconclusive`` when some
    exceed 3 sigma but all stay within 3 sigma + ``slack`` (desk-scale
    lattice effects); ``inconsistent`` otherwise.
    """
    if any(len(s) < 2 for s in series_by_family.values()):
        raise ValueError("need >= 2 points per family")
    successive = []
    worst_over = 0.0
    all_within_3s = True
    for fam, pts in series_by_family.items():
        for a, b in zip(pts, pts[1:]):
            gap, sigma = combine_gap_sigma(a.conditional, b.conditional)
            successive.append((fam, a.n, b.n, gap, sigma))
            if gap > 3 * sigma:
                all_within_3s = False
                worst_over = max(worst_over, gap - 3 * sigma)

    terminal = None
    fams = sorted(series_by_family)
    if len(fams) >= 2:
        fa, fb = fams[0], fams[1]
        pa, pb = series_by_family[fa][-1], series_by_family[fb][-1]
        gap, sigma = combine_gap_sigma(pa.conditional, pb.conditional)
        terminal = (fa, fb, gap, sigma)
        if gap > 3 * sigma:
            all_within_3s = False
            worst_over = max(worst_over, gap - 3 * sigma)

    if all_within_3s:
        verdict = "consistent"
    elif worst_over <= slack:
        verdict = "inconclusive"
    else:
        verdict = "inconsistent"
    return ConvergenceReport(successive, terminal, verdict, slack)


# ---------------------------------------------------------------------------
# Supercritical sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    p: float
    r_proxy: int
    conditional: Estimate
    acceptance: Estimate
    n_accepted: int
    low_confidence: bool

    def row(self) -> Tuple:
        return (
            self.p, self.r_proxy,
            self.conditional.value, self.conditional.stderr,
            self.acceptance.value, self.n_accepted, int(self.low_confidence),
        )


def supercritical_sweep(
    cfg_base: PercolationConfig,
    event: CylinderEvent,
    p_list: Sequence[float],
    r_proxy: int,
    n_samples: int,
    sample_start: int = 0,
) -> List[SweepPoint]:
    """P_p(E | origin escapes to the radius-``r_proxy`` shell), p by p.

    The escape event proxies the infinite-cluster conditioning; it is
    decided exactly within the window (the shell blocks every outward
    path).  ``p_list`` must be strictly decreasing (a sweep down toward the
    critical point).
    """
    if len(p_list) < 1:
        raise ValueError("empty sweep")
    if any(b >= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be strictly decreasing")
    spec = cfg_base.spec
    win = build_window(spec, cfg_base.seed, r_proxy)
    shell = np.nonzero(win.norms() == r_proxy)[0]
    origin_row = np.asarray([win.row_of((0,) * spec.d)])
    out = []
    for p in p_list:
        cfg = PercolationConfig(spec, p, cfg_base.seed)
        accepted = 0
        hits = 0
        for sid in range(sample_start, sample_start + n_samples):
            open_mask = sample_open_edges(win, cfg, sid)
            labels = component_labels(win, open_mask)
            if not connection_indicator(labels, origin_row, shell):
                continue
            accepted += 1
            if event.evaluate(cfg.with_sample(sid)):
                hits += 1
        srange = (sample_start, sample_start + n_samples)
        out.append(SweepPoint(
            p=p, r_proxy=r_proxy,
            conditional=Estimate.from_counts(hits, accepted, seed=cfg.seed,
                                             sample_range=srange),
            acceptance=Estimate.from_counts(accepted, n_samples, seed=cfg.seed,
                                            sample_range=srange),
            n_accepted=accepted,
            low_confidence=accepted < 100,
        ))
    return out


@dataclass
class SupercriticalReport:
    sweeps: Dict[int, List[SweepPoint]]  # r_proxy -> per-p points
    critical: Optional[IICPoint]
    sensitivity: float                   # terminal-p shift between the two R
    terminal_gap: Optional[Tuple[float, float]]  # vs critical: gap, sigma

    def summary(self) -> dict:
        return {
            "r_values": sorted(self.sweeps),
            "sensitivity": self.sensitivity,
            "terminal_gap": None if self.terminal_gap is None else {
                "gap": self.terminal_gap[0], "sigma": self.terminal_gap[1],
            },
            "points": {
                str(r): [pt.row() for pt in pts] for r, pts in self.sweeps.items()
            },
        }


def supercritical_report(
    cfg_base: PercolationConfig,
    event: CylinderEvent,
    p_list: Sequence[float],
    r_pair: Tuple[int, int],
    n_samples: int,
    critical: Optional[IICPoint] = None,
    sample_start: int = 0,
) -> SupercriticalReport:
    """Run the sweep at two proxy radii and compare against the critical value.

    The sensitivity entry is the absolute shift of the terminal-p
    conditional between the two radii — the documented price of the
    finite-volume proxy.  When a critical conditional point is supplied, the
    report includes the terminal gap with its combined standard error.
    """
    r_a, r_b = r_pair
    if r_a >= r_b:
        raise ValueError("r_pair must be increasing")
    sweeps = {
        r: supercritical_sweep(cfg_base, event, p_list, r, n_samples, sample_start)
        for r in (r_a, r_b)
    }
    term_a = sweeps[r_a][-1].conditional
    term_b = sweeps[r_b][-1].conditional
    sensitivity = abs(term_a.value - term_b.value)
    terminal_gap = None
    if critical is not None:
        gap, sigma = combine_gap_sigma(term_b, critical.conditional)
        terminal_gap = (gap, sigma)
    return SupercriticalReport(
        sweeps=sweeps,
        critical=critical,
        sensitivity=sensitivity,
        terminal_gap=terminal_gap,
    )
