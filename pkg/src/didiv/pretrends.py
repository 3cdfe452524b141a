"""Placebo DIDs on pre-exposure periods for the treatment and the outcome.

For each cohort e and lead l <= -2 the first-stage and reduced-form DIDs of
period e+l against the base period e-1 are computed with the cell machinery
but without forming their ratio. A joint chi-square Wald statistic per
variable uses the covariance of the stacked per-unit influence values.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import CohortMap, ObservationTable
from .errors import EmptyCell, EmptyGroup, NoPrePeriods
from .influence import contrast, se_from_infl
from .parallel import pmap
from .sts import Z95, CellSpec, cell_layout

JOINT_METHOD = "chi-square Wald on stacked leads with influence-function covariance (artifact choice)"


@dataclass(frozen=True, eq=False)
class LeadEstimate:
    e: int
    l: int
    alpha_hat: float
    alpha_se: float
    pi_hat: float
    pi_se: float
    alpha_infl: np.ndarray = field(repr=False)
    pi_infl: np.ndarray = field(repr=False)

    @property
    def t(self) -> int:
        return self.e + self.l

    @property
    def z_alpha(self) -> float:
        return _z(self.alpha_hat, self.alpha_se)

    @property
    def z_pi(self) -> float:
        return _z(self.pi_hat, self.pi_se)

    def to_dict(self) -> dict:
        za, zp = self.z_alpha, self.z_pi
        return {
            "e": self.e, "l": self.l, "t": self.t,
            "alpha": self.alpha_hat, "alpha_se": self.alpha_se,
            "alpha_ci": [self.alpha_hat - Z95 * self.alpha_se, self.alpha_hat + Z95 * self.alpha_se],
            "alpha_z": za, "alpha_p": _p(za),
            "pi": self.pi_hat, "pi_se": self.pi_se,
            "pi_ci": [self.pi_hat - Z95 * self.pi_se, self.pi_hat + Z95 * self.pi_se],
            "pi_z": zp, "pi_p": _p(zp),
        }


def _z(est, se) -> float:
    if se > 0:
        return est / se
    return 0.0 if est == 0 else math.copysign(math.inf, est)


def _p(z) -> float:
    return float(2 * stats.norm.sf(abs(z)))


@dataclass(frozen=True)
class JointTest:
    stat: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return {"stat": self.stat, "df": self.df, "p": self.p_value}


def joint_wald(est: np.ndarray, infl: np.ndarray) -> JointTest:
    """est' V^+ est with V = Psi' Psi / N^2 (rows of Psi are draws)."""
    est = np.asarray(est, dtype=float)
    n = infl.shape[0]
    V = infl.T @ infl / n**2
    stat = float(est @ np.linalg.pinv(V) @ est)
    stat = max(stat, 0.0)
    k = len(est)
    return JointTest(stat, k, float(stats.chi2.sf(stat, k)))


@dataclass(frozen=True)
class PretrendResult:
    series: list
    outcome: JointTest
    treatment: JointTest
    method: str = JOINT_METHOD

    def to_dict(self) -> dict:
        return {
            "series": [s.to_dict() for s in self.series],
            "joint": {"outcome": self.outcome.to_dict(), "treatment": self.treatment.to_dict()},
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path) -> None:
        rows = [s.to_dict() for s in self.series]
        cols = ["e", "l", "t", "alpha", "alpha_se", "alpha_z", "alpha_p",
                "pi", "pi_se", "pi_z", "pi_p"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def lead_specs(cohorts: CohortMap, max_lead: int) -> list:
    first = cohorts.first_period
    out = []
    for e in cohorts.estimated:
        for l in range(-int(max_lead), -1):
            if e + l >= first:
                out.append(CellSpec(int(e), l, tuple(cohorts.unexposed)))
    return out


def estimate_lead(table: ObservationTable, spec: CellSpec) -> LeadEstimate:
    lay = cell_layout(table, spec)
    a, ai = contrast(lay.y, lay.cells, lay.n_total)
    p, pi_ = contrast(lay.d, lay.cells, lay.n_total)
    return LeadEstimate(spec.e, spec.l, a, se_from_infl(ai), p, se_from_infl(pi_), ai, pi_)


def pretrend_test(table: ObservationTable, cohorts: CohortMap, max_lead: int = 4) -> PretrendResult:
    """Placebo DIDs for l in -max_lead..-2 plus joint tests for Y and D."""
    specs = lead_specs(cohorts, max_lead)
    if not specs:
        raise NoPrePeriods(f"no cohort has a period before its base period within {max_lead} leads")

    def one(s):
        try:
            return estimate_lead(table, s)
        except (EmptyCell, EmptyGroup):
            return None

    series = [s for s in pmap(one, specs) if s is not None]
    if not series:
        raise NoPrePeriods("every placebo cell is empty")
    A = np.column_stack([s.alpha_infl for s in series])
    P = np.column_stack([s.pi_infl for s in series])
    jy = joint_wald(np.array([s.alpha_hat for s in series]), A)
    jd = joint_wald(np.array([s.pi_hat for s in series]), P)
    return PretrendResult(series, jy, jd)
