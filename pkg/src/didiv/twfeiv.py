"""Two-way fixed-effects IV and its exact split into per-period Wald-DIDs.

In a panel the fixed effects are unit and period; with repeated cross
sections they are cohort and period. The instrument residual z~ then depends
on (cohort, period) only, and for two cohorts

    beta = sum_t N_{e,t} Zhat_{e,t} RF_t / sum_t N_{e,t} Zhat_{e,t} FS_t

where RF_t and FS_t are the outcome and treatment DIDs of period t against a
base period. Components at or after the comparison cohort's exposure date
compare against an already exposed group.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import NEVER, PANEL, CohortMap, ObservationTable, cohort_label
from .errors import (NoInstrumentVariation, NoPrePeriods, UnsupportedLayout, UsageError,
                     WeakFirstStage)
from .influence import TAU, fsum
from .parallel import pmap
from .sts import resample_counts

AP_TOL = 1e-14
AP_MAX_ITER = 100_000


def _codes(x):
    _, code = np.unique(x, return_inverse=True)
    return code


def row_groups(table: ObservationTable) -> np.ndarray:
    """Exposure date attached to every row."""
    if table.mode == PANEL:
        return table.panel.exposure[_codes(table.unit)]
    return table.cohort


def _wmean_by(x, code, w, size):
    num = np.bincount(code, weights=w * x, minlength=size)
    den = np.bincount(code, weights=w, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def demean_two_way(x, a, b, w=None, balanced=False):
    """Residual of x on the dummies of codes a and b, weighted by w.

    ``balanced=True`` means every (a, b) pair appears once with weights
    constant within a, which allows the one-shot formula. Otherwise the two
    projections alternate until the largest update is below AP_TOL times the
    scale of x.
    """
    x = np.asarray(x, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    na, nb = int(a.max()) + 1, int(b.max()) + 1
    if balanced:
        ma = _wmean_by(x, a, np.ones_like(x), na)
        mb = _wmean_by(x, b, w, nb)
        m = fsum(w * x) / fsum(w)
        return x - ma[a] - mb[b] + m
    r = x - _wmean_by(x, a, w, na)[a]
    scale = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    for _ in range(AP_MAX_ITER):
        step_b = _wmean_by(r, b, w, nb)[b]
        r = r - step_b
        step_a = _wmean_by(r, a, w, na)[a]
        r = r - step_a
        if max(np.max(np.abs(step_a)), np.max(np.abs(step_b))) < AP_TOL * scale:
            break
    return r


def _is_balanced(table) -> bool:
    if table.mode != PANEL:
        return False
    return bool(table.panel.observed.all())


def _fe_codes(table):
    """(first fixed-effect codes, period codes) for the table's layout."""
    t = _codes(table.time)
    if table.mode == PANEL:
        return _codes(table.unit), t
    return _codes(table.cohort), t


@dataclass(frozen=True, eq=False)
class TwfeivResult:
    beta_iv_hat: float
    pi_hat: float  # first-stage coefficient on the instrument
    rf_hat: float  # reduced-form coefficient on the instrument
    zhat: dict  # (cohort, period) -> mean residualized instrument
    n: int
    se: float | None = None
    boot_redraws: int = 0

    def to_dict(self) -> dict:
        return {
            "beta_iv": self.beta_iv_hat,
            "pi": self.pi_hat,
            "reduced_form": self.rf_hat,
            "se_bootstrap": self.se,
            "n": self.n,
            "zhat": [{"e": cohort_label(e), "t": int(t), "z": v}
                     for (e, t), v in sorted(self.zhat.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _restrict(table: ObservationTable, cohorts: CohortMap | None):
    if cohorts is None:
        return table
    keep = np.isin(row_groups(table), np.array(cohorts.cohorts, dtype=float))
    if keep.all():
        return table
    return table.with_columns(
        unit=table.unit[keep], time=table.time[keep], y=table.y[keep], d=table.d[keep],
        z=table.z[keep],
        cohort=None if table.cohort is None else table.cohort[keep],
        stratum=None if table.stratum is None else table.stratum[keep])


def _fit(table, w=None, tau=TAU):
    a, b = _fe_codes(table)
    bal = _is_balanced(table)
    zt = demean_two_way(table.z, a, b, w, bal)
    yt = demean_two_way(table.y, a, b, w, bal)
    dt = demean_two_way(table.d, a, b, w, bal)
    w = np.ones(len(zt)) if w is None else w
    szz = fsum(w * zt * zt)
    n = fsum(w)
    if not szz > tau * n:
        raise NoInstrumentVariation("instrument has no variation after two-way demeaning")
    szd = fsum(w * zt * dt)
    szy = fsum(w * zt * yt)
    if not abs(szd) >= tau * n:
        raise WeakFirstStage(f"first-stage cross-moment {szd:.3g} below tau * n")
    return zt, szy, szd, szz


def estimate_twfeiv(table: ObservationTable, cohorts: CohortMap | None = None, tau: float = TAU,
                    boot_reps: int = 0, seed: int = 0) -> TwfeivResult:
    """beta = sum y~ z~ / sum d~ z~ after two-way demeaning.

    With ``boot_reps > 0`` a sampling-unit bootstrap SE is attached.
    """
    table = _restrict(table, cohorts)
    if len(np.unique(row_groups(table))) < 2 or len(table.periods) < 2:
        raise NoInstrumentVariation("TWFEIV needs at least two cohorts and two periods")
    zt, szy, szd, szz = _fit(table, tau=tau)
    g = row_groups(table)
    zhat = {}
    for e in np.unique(g):
        for t in table.periods:
            m = (g == e) & (table.time == t)
            if m.any():
                zhat[(e, int(t))] = float(np.mean(zt[m]))
    se, redraws = None, 0
    if boot_reps:
        se, _, redraws = bootstrap_twfeiv(table, boot_reps, seed, tau)
    return TwfeivResult(szy / szd, szd / szz, szy / szz, zhat, len(table), se, redraws)


def bootstrap_twfeiv(table: ObservationTable, reps: int = 500, seed: int = 0, tau: float = TAU):
    """Resample sampling units; returns (se, draws, redraws)."""
    if reps < 2:
        raise UsageError("bootstrap needs at least 2 replicates")
    if table.mode == PANEL:
        code = _codes(table.unit)
        unit_group = table.panel.exposure
    else:
        code = np.arange(len(table))
        unit_group = table.cohort
    labels = np.unique(unit_group)
    m = len(unit_group)

    def valid(cnt):
        return all(cnt[unit_group == e].sum() > 0 for e in labels)

    C, redraws = resample_counts(m, reps, seed, valid)

    def one(r):
        w = C[r][code].astype(float)
        sub = w > 0
        t = table.with_columns(unit=table.unit[sub], time=table.time[sub], y=table.y[sub],
                               d=table.d[sub], z=table.z[sub],
                               cohort=None if table.cohort is None else table.cohort[sub],
                               stratum=None)
        # rows keep their (unit, time) order after subsetting, so weights line up
        _, szy, szd, _ = _fit(t, w[sub], tau)
        return szy / szd

    draws = np.array(pmap(one, range(reps)))
    return float(np.std(draws, ddof=1)), draws, redraws


# -- decomposition -----------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    e: float
    t: int
    kind: str  # pre, clean or biased
    weight: float
    wdid_hat: float
    contribution: float
    rf: float
    fs: float
    n: int
    flag: str = ""

    def to_dict(self) -> dict:
        return {"e": cohort_label(self.e), "t": self.t, "kind": self.kind, "weight": self.weight,
                "wdid": self.wdid_hat, "contribution": self.contribution, "rf": self.rf,
                "fs": self.fs, "n": self.n, "flag": self.flag}


@dataclass(frozen=True)
class DecompositionReport:
    beta_iv_hat: float
    early: float
    comparison: float
    base: int
    components: list = field(default_factory=list)
    identity_residual: float = 0.0
    weight_sum: float = 1.0

    def to_dict(self) -> dict:
        return {
            "beta_iv": self.beta_iv_hat,
            "early": cohort_label(self.early),
            "comparison": cohort_label(self.comparison),
            "base": self.base,
            "identity_residual": self.identity_residual,
            "weight_sum": self.weight_sum,
            "components": [c.to_dict() for c in self.components],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path) -> None:
        cols = ["e", "t", "kind", "weight", "wdid", "contribution", "rf", "fs", "n", "flag"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols)
            wr.writeheader()
            for c in self.components:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in c.to_dict().items()})


def _cell_means(x, g, t, e, periods):
    return {int(s): float(np.mean(x[(g == e) & (t == s)])) for s in periods}


def decompose_twfeiv(table: ObservationTable, cohorts: CohortMap | None = None,
                     base: int | None = None, tau: float = TAU) -> DecompositionReport:
    """Per-period components of the two-cohort TWFEIV estimate."""
    table = _restrict(table, cohorts)
    g = row_groups(table)
    groups = sorted(set(float(x) for x in np.unique(g)))
    if len(groups) != 2:
        raise UnsupportedLayout(
            f"decomposition needs exactly two cohorts, found {[cohort_label(c) for c in groups]}")
    if table.mode == PANEL and not _is_balanced(table):
        raise UnsupportedLayout("decomposition in panel mode needs a balanced panel")
    e, u = groups
    if e == NEVER:
        raise UnsupportedLayout("the early cohort must be exposed")
    periods = [int(s) for s in table.periods]
    b = int(e) - 1 if base is None else int(base)
    if b not in periods:
        raise NoPrePeriods(f"base period {b} not observed for cohort {cohort_label(e)}")
    for s in periods:
        for c in (e, u):
            if not np.any((g == c) & (table.time == s)):
                raise UnsupportedLayout(f"cohort {cohort_label(c)} has no rows at period {s}")
    res = estimate_twfeiv(table, None, tau)
    t = table.time
    ye, yu = _cell_means(table.y, g, t, e, periods), _cell_means(table.y, g, t, u, periods)
    de, du = _cell_means(table.d, g, t, e, periods), _cell_means(table.d, g, t, u, periods)

    def part(s):
        rf = (ye[s] - ye[b]) - (yu[s] - yu[b])
        fs = (de[s] - de[b]) - (du[s] - du[b])
        n = int(np.sum((g == e) & (t == s)))
        return s, rf, fs, n, n * res.zhat[(e, s)]

    parts = pmap(part, [s for s in periods if s != b])
    den = fsum([nz * fs for _, _, fs, _, nz in parts])
    comps = []
    for s, rf, fs, n, nz in parts:
        kind = "pre" if s < e else ("clean" if s < u else "biased")
        flag = "" if abs(fs) > tau else "weak_denominator"
        wdid = rf / fs if fs != 0 else math.nan
        comps.append(Component(e, s, kind, nz * fs / den, wdid, nz * rf / den, rf, fs, n, flag))
    total = fsum([c.contribution for c in comps])
    return DecompositionReport(res.beta_iv_hat, e, u, b, comps, total - res.beta_iv_hat,
                               fsum([c.weight for c in comps]))
