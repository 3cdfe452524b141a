"""Synthetic populations with known compliance types and exact estimands.

Two designs are available: ``TwoByTwoSpec`` (two groups, two periods, explicit
type distribution, binary or ordered treatment) and ``StaggeredSpec``
(staggered exposure, latent-threshold compliance, optional strata). Specs
round-trip through JSON; see ``spec_to_dict`` for the schema.
"""
from __future__ import annotations

import json

import numpy as np

from ..data import NEVER, PANEL, cohort_label
from ..errors import UsageError
from . import staggered, twobytwo
from .staggered import StaggeredSpec
from .twobytwo import TwoByTwoSpec

DESIGNS = {"two_by_two": TwoByTwoSpec, "staggered": StaggeredSpec}


def _path_key(p) -> str:
    return ",".join(str(int(x)) for x in p)


def _path(s: str) -> tuple:
    return tuple(int(x) for x in s.split(","))


def _ekey(e):
    return cohort_label(e) if e == NEVER else str(int(e))


def spec_to_dict(spec) -> dict:
    """Plain-JSON form of a spec.

    two_by_two: ``shares[group]["d0,d1u,d1e"] = p`` and
    ``means[group]["d0,d1u,d1e"] = [[E Y_0(0..J)], [E Y_1(0..J)]]`` plus scalars.
    staggered: every dataclass field; cohort keys are integers or "inf".
    """
    if isinstance(spec, TwoByTwoSpec):
        return {
            "design": "two_by_two",
            "shares": {str(g): {_path_key(p): q for p, q in s.items()} for g, s in spec.shares.items()},
            "means": {str(g): {_path_key(p): np.asarray(m).tolist() for p, m in s.items()}
                      for g, s in spec.means.items()},
            "arity": spec.arity, "p_exposed": spec.p_exposed, "noise_sd": spec.noise_sd,
            "unit_sd": spec.unit_sd, "monotone": spec.monotone,
            "parallel_treatment": spec.parallel_treatment,
            "parallel_outcome": spec.parallel_outcome, "seed": spec.seed,
        }
    if isinstance(spec, StaggeredSpec):
        out = {"design": "staggered"}
        for name in StaggeredSpec.__dataclass_fields__:
            v = getattr(spec, name)
            if isinstance(v, dict):
                v = {_ekey(k): (list(x) if isinstance(x, tuple) else x) for k, x in v.items()}
            elif isinstance(v, tuple):
                v = list(v)
            out[name] = v
        return out
    raise UsageError(f"cannot serialize {type(spec).__name__}")


def spec_from_dict(d: dict):
    d = dict(d)
    design = d.pop("design", None)
    if design == "two_by_two":
        d["shares"] = {int(g): {_path(p): q for p, q in s.items()} for g, s in d["shares"].items()}
        d["means"] = {int(g): {_path(p): np.array(m, dtype=float) for p, m in s.items()}
                      for g, s in d["means"].items()}
        return TwoByTwoSpec(**d)
    if design == "staggered":
        return StaggeredSpec(**d)
    raise UsageError(f"unknown design {design!r}; expected one of {sorted(DESIGNS)}")


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)


def population_values(spec):
    if isinstance(spec, TwoByTwoSpec):
        return twobytwo.population_values(spec)
    return staggered.population_values(spec)


def generate(spec, n: int, mode: str = PANEL, seed: int | None = None):
    """Sample n units; returns (ObservationTable, audit DataFrame)."""
    if isinstance(spec, TwoByTwoSpec):
        return twobytwo.generate(spec, n, mode, seed)
    return staggered.generate(spec, n, mode, seed)


BUILTIN = {
    "effect10": twobytwo.effect10_spec,
    "sharp": twobytwo.sharp_spec,
    "staggered": staggered.demo_spec,
    "three_cohort": staggered.three_cohort_spec,
    "late_comparison": staggered.late_comparison_spec,
    "triple": staggered.triple_spec,
    "pretrend": staggered.pretrend_spec,
}


def builtin_spec(name: str, seed: int = 0):
    if name not in BUILTIN:
        raise UsageError(f"unknown built-in design {name!r}; choose from {', '.join(BUILTIN)}")
    return BUILTIN[name](seed=seed)


__all__ = [
    "TwoByTwoSpec", "StaggeredSpec", "spec_to_dict", "spec_from_dict", "load_spec", "save_spec",
    "population_values", "generate", "builtin_spec", "BUILTIN",
]
