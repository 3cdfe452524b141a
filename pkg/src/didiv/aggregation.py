"""Summary parameters built from cell estimates with first-stage weights.

Each summary is sum_{(e,t)} w(e,t) * CLATT(e,t). The raw weight expressions
combine cohort shares P(E=e | .) with first-stage exposed effects (CAETs,
estimated by each cell's first-stage DID) and are then rescaled to unit mass
over the cells actually included.

The weight code is written once against plain arithmetic, so the same
function evaluates on floats (point weights), on ``Linear`` objects (weights
with influence values, giving the aggregate IF by the product and ratio
rules) and on numpy arrays (bootstrap replicates).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import CohortMap, ObservationTable
from .errors import MissingCell, UsageError, ZeroWeightMass
from .influence import Linear, fmean, se_from_infl, share_of
from .sts import Z95, build_cells, cell_layout, estimate_cells, resample_counts

KINDS = ("es", "es_bal", "sel", "calendar", "calendar_cumm", "overall_w", "overall_sel")
CLI_KINDS = {
    "es": "es", "es-bal": "es_bal", "sel": "sel", "cal": "calendar",
    "cal-cumm": "calendar_cumm", "overall-w": "overall_w", "overall-sel": "overall_sel",
}
PARAMS = {
    "es": ("l",), "es_bal": ("l", "l2"), "sel": ("e",), "calendar": ("t",),
    "calendar_cumm": ("t",), "overall_w": (), "overall_sel": (),
}


@dataclass(frozen=True, eq=False)
class CaetEstimate:
    e: int
    t: int
    caet_hat: float
    influence: np.ndarray = field(repr=False)
    flag: str = ""

    def linear(self) -> Linear:
        return Linear(self.caet_hat, self.influence)


def caets_from_cells(cells, binary: bool = True) -> list:
    """First-stage DID of each cell read as its CAET (a complier share if binary)."""
    out = []
    for c in cells:
        flag = ""
        if binary and math.isfinite(c.pi_hat) and abs(c.pi_hat) > 1:
            flag = "outside_unit_interval"
        out.append(CaetEstimate(c.e, c.t, c.pi_hat, c.pi_influence, flag))
    return out


@dataclass(frozen=True, eq=False)
class AggregateEstimate:
    kind: str
    params: dict
    theta_hat: float
    weights: dict
    se: float
    ci95: tuple
    influence: np.ndarray = field(repr=False, default=None)
    flag: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "theta": self.theta_hat,
            "se": self.se,
            "ci": list(self.ci95),
            "flag": self.flag,
            "weights": [{"e": int(e), "t": int(t), "w": w}
                        for (e, t), w in sorted(self.weights.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_params(kind: str, params: dict) -> dict:
    if kind not in KINDS:
        raise UsageError(f"unknown aggregation kind {kind!r}; choose from {', '.join(KINDS)}")
    need = PARAMS[kind]
    missing = [p for p in need if params.get(p) is None]
    if missing:
        raise UsageError(f"aggregation {kind} needs parameter(s) {', '.join(missing)}")
    return {p: int(params[p]) for p in need}


def _is_zero(x) -> bool:
    v = x.value if isinstance(x, Linear) else x
    return np.ndim(v) == 0 and float(v) == 0.0


def _ratio(a, b, what):
    if _is_zero(b):
        raise ZeroWeightMass(f"zero weight mass in {what}")
    return a / b


def raw_weights(kind: str, params: dict, support, caet, share) -> dict:
    """Unnormalized weight expressions over the support set of (e, t) cells.

    ``caet[(e, t)]`` and ``share[e]`` may be floats, arrays or Linear values.
    """
    support = sorted(support)
    cohorts = sorted({e for e, _ in support})

    def cond_share(e, pool):
        return _ratio(share[e], sum(share[c] for c in pool), "cohort share")

    out = {}
    if kind in ("es", "es_bal"):
        l = params["l"]
        keys = [(e, t) for e, t in support if t - e == l]
        if kind == "es_bal":
            l2 = params["l2"]
            keep = {e for e, t in support if t - e == l2}
            keys = [(e, t) for e, t in keys if e in keep]
        pool = [e for e, _ in keys]
        tot = sum(caet[k] for k in keys) if keys else 0.0
        for e, t in keys:
            out[(e, t)] = cond_share(e, pool) * _ratio(caet[(e, t)], tot, kind)
    elif kind == "sel":
        keys = [(e, t) for e, t in support if e == params["e"]]
        tot = sum(caet[k] for k in keys) if keys else 0.0
        for k in keys:
            out[k] = _ratio(caet[k], tot, kind)
    elif kind in ("calendar", "calendar_cumm"):
        tt = params["t"]
        if kind == "calendar":
            keys = [(e, t) for e, t in support if t == tt]
        else:
            keys = [(e, t) for e, t in support if t <= tt]
        by_t = {}
        for e, t in keys:
            by_t.setdefault(t, []).append((e, t))
        for t, ks in by_t.items():
            tot = sum(caet[k] for k in ks)
            pool = [c for c in cohorts if c <= t]
            for e, _ in ks:
                out[(e, t)] = cond_share(e, pool) * _ratio(caet[(e, t)], tot, kind)
    elif kind == "overall_w":
        tot = sum(cond_share(e, cohorts) for e, _ in support)
        for e, t in support:
            out[(e, t)] = _ratio(cond_share(e, cohorts), tot, kind)
    elif kind == "overall_sel":
        for e in cohorts:
            ks = [(c, t) for c, t in support if c == e]
            tot = sum(caet[k] for k in ks)
            for k in ks:
                out[k] = cond_share(e, cohorts) * _ratio(caet[k], tot, kind)
    else:
        raise UsageError(f"unknown aggregation kind {kind!r}")
    if not out:
        raise MissingCell(f"no estimated cells for {kind} with {params}")
    return out


def normalized_weights(kind, params, support, caet, share) -> dict:
    raw = raw_weights(kind, params, support, caet, share)
    mass = sum(raw.values())
    return {k: _ratio(v, mass, kind) for k, v in raw.items()}


def _support(cells, include_flagged: bool):
    keep = [c for c in cells if math.isfinite(c.clatt_hat) and (include_flagged or not c.flag)]
    return keep, len(keep) < len(cells)


def cohort_shares(table: ObservationTable, cohorts) -> dict:
    """Sample share of every finite cohort among all sampling units, with IFs."""
    g = table.groups
    labels = cohorts.cohorts if isinstance(cohorts, CohortMap) else cohorts
    return {e: share_of(g == e) for e in labels if math.isfinite(e)}


def compute_weights(kind: str, cells, caets=None, shares=None, params=None,
                    include_flagged: bool = False) -> dict:
    """Point weights (floats) keyed by (e, t)."""
    params = check_params(kind, params or {})
    keep, _ = _support(cells, include_flagged)
    caet = {(c.e, c.t): c.pi_hat for c in keep}
    if caets is not None:
        caet.update({(c.e, c.t): c.caet_hat for c in caets})
    sh = {e: float(v.value if isinstance(v, Linear) else v) for e, v in shares.items()}
    w = normalized_weights(kind, params, caet.keys(), caet, sh)
    return {k: float(v) for k, v in w.items()}


def aggregate(kind: str, cells, shares: dict, params=None, include_flagged: bool = False,
              n_total: int | None = None) -> AggregateEstimate:
    """theta = sum w * clatt with IF sum [w * psi + zeta_w * clatt].

    ``shares`` maps cohort -> Linear share (from ``cohort_shares``). Cells
    must carry ``influence`` (ratio IF) and ``pi_influence`` (first-stage IF).
    """
    params = check_params(kind, params or {})
    keep, dropped = _support(cells, include_flagged)
    if not keep:
        raise MissingCell("no usable cells to aggregate")
    caet = {(c.e, c.t): Linear(c.pi_hat, c.pi_influence) for c in keep}
    theta_c = {(c.e, c.t): Linear(c.clatt_hat, c.influence) for c in keep}
    w = normalized_weights(kind, params, caet.keys(), caet, shares)
    total = sum(w[k] * theta_c[k] for k in sorted(w))
    signs = {np.sign(caet[k].value) for k in w}
    flags = []
    if len(signs) > 1:
        flags.append("mixed_sign_caet")
    if dropped:
        flags.append("flagged_cells_excluded")
    se = se_from_infl(total.infl)
    theta = total.value
    return AggregateEstimate(kind, params, theta, {k: v.value for k, v in w.items()}, se,
                             (theta - Z95 * se, theta + Z95 * se), total.infl, ",".join(flags))


def aggregate_table(table: ObservationTable, cohorts: CohortMap, kind: str, params=None,
                    cells=None, stratum=None, include_flagged=False, tau=1e-10):
    """Estimate cells (unless given) and aggregate them."""
    if cells is None:
        cells = estimate_cells(table, cohorts, stratum=stratum, tau=tau)
    return aggregate(kind, cells, cohort_shares(table, cohorts), params, include_flagged)


def bootstrap_aggregate(table: ObservationTable, cohorts: CohortMap, kind: str, params=None,
                        reps: int = 500, seed: int = 0, cells=None, stratum=None,
                        include_flagged=False):
    """Full-pipeline bootstrap: resample all sampling units, redo cells and weights.

    Returns (se, draws, redraws).
    """
    params = check_params(kind, params or {})
    if cells is None:
        cells = estimate_cells(table, cohorts, stratum=stratum)
    keep, _ = _support(cells, include_flagged)
    lays = {(c.e, c.t): cell_layout(table, c.spec, stratum) for c in keep}
    n = table.n_sampling_units
    g = table.groups

    def valid(cnt):
        for lay in lays.values():
            for m, _ in lay.cells:
                if cnt[m].sum() == 0:
                    return False
        return True

    C, redraws = resample_counts(n, reps, seed, valid)
    theta_b, caet_b = {}, {}
    for k, lay in lays.items():
        num = np.zeros(reps)
        den = np.zeros(reps)
        for m, s in lay.cells:
            w = C[:, m]
            cnt = w.sum(axis=1)
            num += s * (w @ lay.y[m]) / cnt
            den += s * (w @ lay.d[m]) / cnt
        theta_b[k] = num / den
        caet_b[k] = den
    share_b = {e: C[:, g == e].sum(axis=1) / n for e in cohorts.cohorts if math.isfinite(e)}
    w = normalized_weights(kind, params, caet_b.keys(), caet_b, share_b)
    draws = sum(w[k] * theta_b[k] for k in sorted(w))
    return float(np.std(draws, ddof=1)), draws, redraws


def weights_sum(weights: dict) -> float:
    return math.fsum(weights.values())


def mean_clatt(cells) -> float:
    return fmean([c.clatt_hat for c in cells])


__all__ = [
    "KINDS", "CLI_KINDS", "CaetEstimate", "AggregateEstimate", "caets_from_cells",
    "compute_weights", "aggregate", "aggregate_table", "bootstrap_aggregate",
    "cohort_shares", "raw_weights", "normalized_weights", "build_cells",
]
