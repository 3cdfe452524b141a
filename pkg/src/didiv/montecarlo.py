"""Monte Carlo routines pairing sampled estimates with oracle truths.

Replicate r of an experiment seeded s draws its data with seed s + r, so each
routine is deterministic given its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregation import aggregate, bootstrap_aggregate, cohort_shares
from .data import PANEL, derive_cohorts
from .influence import fmean
from .oracle import generate, staggered, twobytwo
from .parallel import pmap
from .pretrends import pretrend_test
from .sts import CellSpec, estimate_cell, estimate_cells, se_bootstrap
from .wald import wald_did


@dataclass(frozen=True)
class McSummary:
    truth: float
    mean: float
    mc_se: float  # standard error of the Monte Carlo mean
    rmse: float
    coverage: float | None
    reps: int

    @property
    def z(self) -> float:
        return (self.mean - self.truth) / self.mc_se if self.mc_se > 0 else 0.0

    def to_dict(self) -> dict:
        return {"truth": self.truth, "mean": self.mean, "mc_se": self.mc_se, "rmse": self.rmse,
                "coverage": self.coverage, "reps": self.reps, "z": self.z}


def summarize(est, truth, lo=None, hi=None) -> McSummary:
    est = np.asarray(est, dtype=float)
    cov = None
    if lo is not None:
        cov = float(np.mean((np.asarray(lo) <= truth) & (truth <= np.asarray(hi))))
    sd = float(np.std(est, ddof=1)) if len(est) > 1 else 0.0
    return McSummary(truth, fmean(est), sd / math.sqrt(len(est)),
                     math.sqrt(fmean((est - truth) ** 2)), cov, len(est))


def wald_did_draws(spec, n: int, reps: int, seed: int = 0, mode: str = PANEL) -> np.ndarray:
    def one(r):
        t, _ = twobytwo.generate(spec, n, mode, seed + r)
        return wald_did(t).theta
    return np.array(pmap(one, range(reps)))


def effect10_experiment(n_big: int = 100_000, n: int = 16_000, reps: int = 200, seed: int = 0) -> dict:
    spec = twobytwo.effect10_spec()
    truth = twobytwo.population_values(spec).latet
    big, _ = twobytwo.generate(spec, n_big, seed=seed)
    single = wald_did(big).theta
    mc = summarize(wald_did_draws(spec, n, reps, seed + 1), truth)
    return {"truth": truth, "single": single, "n_big": n_big, "mc": mc}


def cell_draws(spec, cell: CellSpec, n: int, reps: int, seed: int = 0, mode: str = PANEL,
               stratum=None):
    """(estimates, se) arrays for one cell over reps fresh samples."""
    def one(r):
        t, _ = generate(spec, n, mode, seed + r)
        c = estimate_cell(t, cell, stratum)
        return c.clatt_hat, c.se
    out = np.array(pmap(one, range(reps)))
    return out[:, 0], out[:, 1]


def cell_coverage(spec, cell: CellSpec, n: int = 5000, reps: int = 1000, seed: int = 0,
                  mode: str = PANEL) -> McSummary:
    truth = staggered.clatt(spec, cell.e, cell.t)
    est, se = cell_draws(spec, cell, n, reps, seed, mode)
    z = 1.959963984540054
    return summarize(est, truth, est - z * se, est + z * se)


def rmse_slope(spec, cell: CellSpec, ns=(1000, 4000, 16000), reps: int = 200, seed: int = 0):
    """RMSE at each n and the least-squares slope of log RMSE on log n."""
    truth = staggered.clatt(spec, cell.e, cell.t)
    rmse = []
    for k, n in enumerate(ns):
        est, _ = cell_draws(spec, cell, n, reps, seed + 100_000 * k)
        rmse.append(math.sqrt(fmean((est - truth) ** 2)))
    slope = float(np.polyfit(np.log(ns), np.log(rmse), 1)[0])
    return {"n": list(ns), "rmse": rmse, "slope": slope}


def se_comparison(spec, cell: CellSpec, n: int = 5000, reps: int = 500, seed: int = 0,
                  kind: str = "es", params=None) -> dict:
    """IF-based against bootstrap SEs for one cell and one aggregate, same sample."""
    t, _ = generate(spec, n, seed=seed)
    cm = derive_cohorts(t)
    c = estimate_cell(t, cell)
    boot_cell = se_bootstrap(t, cell, reps, seed)
    cells = estimate_cells(t, cm)
    agg = aggregate(kind, cells, cohort_shares(t, cm), params or {"l": 0})
    boot_agg, _, _ = bootstrap_aggregate(t, cm, kind, params or {"l": 0}, reps, seed, cells)
    return {"cell_if": c.se, "cell_boot": boot_cell, "agg_if": agg.se, "agg_boot": boot_agg,
            "cell_rel": abs(c.se / boot_cell - 1), "agg_rel": abs(agg.se / boot_agg - 1)}


def aggregate_draws(spec, kind: str, params: dict, n: int, reps: int, seed: int = 0):
    vals = staggered.population_values(spec)
    truth = staggered.population_aggregate(spec, kind, params, vals.clatt.keys())

    def one(r):
        t, _ = generate(spec, n, seed=seed + r)
        cm = derive_cohorts(t)
        a = aggregate(kind, estimate_cells(t, cm), cohort_shares(t, cm), params)
        return a.theta_hat, a.se
    out = np.array(pmap(one, range(reps)))
    z = 1.959963984540054
    return summarize(out[:, 0], truth, out[:, 0] - z * out[:, 1], out[:, 0] + z * out[:, 1])


def pretrend_rejection(spec, n: int = 5000, reps: int = 1000, max_lead: int = 4,
                       level: float = 0.05, seed: int = 0) -> dict:
    """Share of samples where the joint outcome and treatment tests reject."""
    def one(r):
        t, _ = generate(spec, n, seed=seed + r)
        pr = pretrend_test(t, derive_cohorts(t), max_lead)
        return pr.outcome.p_value < level, pr.treatment.p_value < level
    out = np.array(pmap(one, range(reps)))
    return {"outcome": float(out[:, 0].mean()), "treatment": float(out[:, 1].mean()), "reps": reps}
