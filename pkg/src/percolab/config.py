"""Run configuration: a JSON file with one section per domain type.

Every tunable the laboratory exposes lives here with a default, so a config
file only states deviations.  Sections map onto the package's domain types:
``lattice`` -> LatticeSpec, ``sample`` -> PercolationConfig, ``scales`` ->
ScaleParams, ``regularity``/``goodness`` -> the cluster-certification
params, ``event`` -> CylinderEvent, ``iic``/``extraction`` ->
ConditioningFamily choices, plus plain-dict sections for the estimator,
sweep, Hopf-demo, and verification-battery knobs.

Unknown keys anywhere are errors (typo protection), as is any value a
domain constructor rejects; both raise :class:`ConfigError`, which the CLI
maps to exit code 4.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional

from .clusters import GoodSpanningParams, RegularityParams
from .engine import PercolationConfig
from .experiments import (
    ConditioningFamily,
    CylinderEvent,
    box_boundary_family,
    halfspace_family,
    obstacle_family,
    single_vertex_family,
    sure_event,
    two_east_edges_event,
)
from .lattice import LatticeSpec
from .scales import ScaleParams, faithful_params, toy_params, validate_scale_params

__all__ = ["ConfigError", "Config", "load_config", "default_config_dict"]


class ConfigError(Exception):
    """A malformed or inconsistent run configuration."""


_DEFAULTS: Dict[str, Any] = {
    "lattice": {"d": 2, "edge_mode": "nearest_neighbour", "lam": 0},
    "sample": {"p": 0.5, "seed": 2024},
    "scales": {
        "mode": "toy",
        "k1": 1,
        "m": 2,
        "q_max": 1,
        "ann_margin": None,   # toy default: q_max + 1
        "ell_factor": 1,
    },
    "regularity": {"K": 3, "s_list": [3, 4], "n_inner": 400, "log_base": None},
    "goodness": {
        # wide boundary windows by default so toy-scale runs produce labels;
        # the narrow faithful exponents (1.75, 2.25) are a config choice
        "lo": 0.1,
        "hi": 4.0,
        "regular_fraction": 0.5,
        "check_minimality": True,
    },
    "event": {"name": "two-east-edges", "L": None, "pattern": None},
    "estimation": {
        "n_samples": 2000,
        "radii": [2, 4, 8, 16],
        "targets": [[1, 0], [2, 0], [4, 0], [8, 0]],
        "pc_criterion": "crossing",
        "pc_bracket": [0.4, 0.6],
        "pc_tol": 0.005,
        "pc_radii": None,
        "fit_drop_low": 2,
        "fit_drop_high": 1,
    },
    "extraction": {
        "level": 0,
        "n": 16,
        "family": "box_boundary",
        "n_samples": 800,
        "q_list": None,
        "p_c_ref": 0.5,
    },
    "iic": {
        "families": ["box_boundary", "single_vertex"],
        "n_list": [8, 16, 32],
        "n_samples": 2000,
    },
    "supercritical": {
        "p_list": [0.55, 0.52, 0.51],
        "r_proxy": 16,
        "r_pair": [16, 32],
        "n_samples": 1500,
    },
    "hopf": {
        "n_kernels": 200,
        "size_min": 2,
        "size_max": 8,
        "entry_low": 0.1,
        "entry_high": 10.0,
        "seq_len": 30,
        "rng_seed": 7,
    },
    "battery": {
        "n_samples": 100000,
        "n_groups": 100,
        "nofurther_instances": 500,
        "nofurther_seed": 7,
        "seed": 2024,
    },
}


def default_config_dict() -> Dict[str, Any]:
    return copy.deepcopy(_DEFAULTS)


def _merge(base: Dict[str, Any], override: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class Config:
    """A validated, merged run configuration."""

    data: Dict[str, Any]

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "Config":
        merged = _merge(_DEFAULTS, overrides or {})
        cfg = cls(merged)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        # construct every typed object once, so errors surface at load time
        self.spec()
        self.percolation()
        self.scale_params()
        self.regularity()
        self.goodness()
        ev = self.event()
        # the ladder must accommodate the event's support ball
        try:
            validate_scale_params(self.scale_params(), self.spec(), cylinder_exp=ev.L)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scales: {exc}") from exc
        for kind in self.data["iic"]["families"]:
            self.family(kind, self.data["iic"]["n_list"])
        sc = self.data["supercritical"]
        if len(sc["r_pair"]) != 2 or sc["r_pair"][0] >= sc["r_pair"][1]:
            raise ConfigError("supercritical.r_pair must be a strictly increasing pair")
        if any(b >= a for a, b in zip(sc["p_list"], sc["p_list"][1:])):
            raise ConfigError("supercritical.p_list must be strictly decreasing")
        hp = self.data["hopf"]
        if not (2 <= hp["size_min"] <= hp["size_max"]):
            raise ConfigError("hopf sizes must satisfy 2 <= size_min <= size_max")
        for section in ("estimation", "extraction", "iic", "supercritical", "battery"):
            ns = self.data[section].get("n_samples")
            if ns is not None and ns < 1:
                raise ConfigError(f"{section}.n_samples must be >= 1")

    # -- typed accessors --------------------------------------------------
    def spec(self) -> LatticeSpec:
        lat = self.data["lattice"]
        try:
            return LatticeSpec(d=lat["d"], edge_mode=lat["edge_mode"], lam=lat["lam"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"lattice: {exc}") from exc

    def percolation(self, seed: Optional[int] = None) -> PercolationConfig:
        s = self.data["sample"]
        use_seed = s["seed"] if seed is None else seed
        try:
            return PercolationConfig(self.spec(), s["p"], use_seed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"sample: {exc}") from exc

    def scale_params(self) -> ScaleParams:
        sc = self.data["scales"]
        try:
            if sc["mode"] == "faithful":
                params = faithful_params(self.spec(), sc["k1"])
            elif sc["mode"] == "toy":
                ell = sc["ell_factor"]
                if isinstance(ell, str):
                    ell = Fraction(ell)
                params = toy_params(
                    k1=sc["k1"], m=sc["m"], q_max=sc["q_max"],
                    ann_margin=sc["ann_margin"], ell_factor=ell,
                )
            else:
                raise ConfigError(f"scales.mode must be toy or faithful, got {sc['mode']!r}")
            validate_scale_params(params, self.spec())
            return params
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scales: {exc}") from exc

    def regularity(self) -> RegularityParams:
        r = self.data["regularity"]
        try:
            return RegularityParams(
                K=r["K"],
                s_list=tuple(r["s_list"]),
                n_inner=r["n_inner"],
                log_base=math.e if r["log_base"] is None else r["log_base"],
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"regularity: {exc}") from exc

    def goodness(self) -> GoodSpanningParams:
        g = self.data["goodness"]
        try:
            return GoodSpanningParams(
                lo=g["lo"], hi=g["hi"],
                regular_fraction=g["regular_fraction"],
                check_minimality=g["check_minimality"],
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"goodness: {exc}") from exc

    def event(self) -> CylinderEvent:
        ev = self.data["event"]
        name = ev["name"]
        try:
            if name == "two-east-edges":
                return two_east_edges_event(self.spec())
            if name == "sure":
                return sure_event()
            if ev["pattern"] is None or ev["L"] is None:
                raise ConfigError(
                    "custom events need event.L and event.pattern "
                    "([[ [x...], [y...] ], state] entries)"
                )
            pattern = tuple(
                ((tuple(a), tuple(b)), bool(state))
                for (a, b), state in ev["pattern"]
            )
            return CylinderEvent(name, ev["L"], pattern)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"event: {exc}") from exc

    def family(self, kind: str, n_list: List[int]) -> ConditioningFamily:
        builders = {
            "box_boundary": box_boundary_family,
            "single_vertex": single_vertex_family,
            "vertex_set_with_obstacle": obstacle_family,
            "halfspace_target": halfspace_family,
        }
        if kind not in builders:
            raise ConfigError(f"unknown conditioning family {kind!r}")
        try:
            return builders[kind](n_list)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"family {kind}: {exc}") from exc

    def iic_families(self) -> List[ConditioningFamily]:
        i = self.data["iic"]
        return [self.family(kind, i["n_list"]) for kind in i["families"]]

    def extraction_family(self) -> ConditioningFamily:
        ex = self.data["extraction"]
        return self.family(ex["family"], [ex["n"]])

    # -- plumbing ---------------------------------------------------------
    def section(self, name: str) -> Dict[str, Any]:
        return self.data[name]

    def echo(self) -> Dict[str, Any]:
        """The full merged configuration, for embedding in JSON outputs."""
        return copy.deepcopy(self.data)


def load_config(path: Optional[str]) -> Config:
    """Read a JSON config file (or return pure defaults for ``None``)."""
    if path is None:
        return Config.from_dict({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return Config.from_dict(raw)
