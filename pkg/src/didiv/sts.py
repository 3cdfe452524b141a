"""Stacked two-stage least squares for staggered instrument adoption.

Each estimable (cohort e, relative period l) gets its own slice: cohort e and
the comparison set U observed at the base period e-1 and at e+l. Within the
slice the IV coefficient is the ratio of the reduced-form DID to the
first-stage DID, and it carries a plug-in influence function so cells can be
aggregated later with a joint variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import PANEL, CohortMap, ObservationTable, cohort_label
from .errors import (
    DegenerateResample,
    NoEstimableCells,
    UsageError,
    WeakDenominator,
)
from .influence import TAU, se_from_infl, wald_ratio
from .parallel import pmap
from .wald import Layout, panel_layout, rcs_layout

Z95 = float(stats.norm.ppf(0.975))
MIN_CELL = 2


@dataclass(frozen=True)
class CellSpec:
    e: int
    l: int
    unexposed: tuple
    base: int | None = None

    def __post_init__(self):
        if self.base is None:
            object.__setattr__(self, "base", int(self.e) - 1)
        if self.e in self.unexposed:
            raise UsageError(f"cohort {self.e} cannot be its own comparison")

    @property
    def t(self) -> int:
        return int(self.e + self.l)

    @property
    def where(self) -> str:
        return f"cell (e={self.e}, l={self.l})"


@dataclass(frozen=True, eq=False)
class CellEstimate:
    spec: CellSpec
    alpha_hat: float
    pi_hat: float
    clatt_hat: float
    se: float
    ci95: tuple
    n_exposed: int
    n_control: int
    influence: np.ndarray = field(repr=False)
    flag: str = ""
    dropped: int = 0
    pi_influence: np.ndarray | None = field(default=None, repr=False)

    @property
    def e(self):
        return self.spec.e

    @property
    def l(self):
        return self.spec.l

    @property
    def t(self):
        return self.spec.t

    @property
    def usable(self) -> bool:
        return not self.flag and math.isfinite(self.clatt_hat)

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else None
        return {
            "e": int(self.e), "l": int(self.l),
            "alpha": num(self.alpha_hat), "pi": num(self.pi_hat),
            "clatt": num(self.clatt_hat), "se": num(self.se),
            "ci": [num(self.ci95[0]), num(self.ci95[1])],
            "n": int(self.n_exposed + self.n_control),
            "flag": self.flag,
        }


def build_cells(cohorts: CohortMap, periods=None) -> list:
    """One CellSpec per estimable (e, l) with l >= 0, in (e, l) order."""
    last = cohorts.horizon
    if periods is not None:
        last = min(last, int(max(periods)))
    U = tuple(cohorts.unexposed)
    out = []
    for e in cohorts.estimated:
        for l in range(0, last - int(e) + 1):
            out.append(CellSpec(int(e), l, U))
    if not out:
        raise NoEstimableCells(
            f"no (e, l) cells: cohorts {[cohort_label(c) for c in cohorts.cohorts]}, "
            f"U={[cohort_label(c) for c in U]}, horizon {last}")
    return out


def _finish(spec, lay: Layout, parts, flag="") -> CellEstimate:
    se = se_from_infl(parts.infl)
    n_e = int(sum(m.sum() for m, s in lay.cells[: len(lay.cells) // 2]))
    n_c = int(sum(m.sum() for m, s in lay.cells[len(lay.cells) // 2:]))
    if not flag and min(cm.n for cm in parts.means) < MIN_CELL:
        flag = "small_cell"
    ci = (parts.theta - Z95 * se, parts.theta + Z95 * se)
    return CellEstimate(spec, parts.alpha, parts.pi, parts.theta, se, ci, n_e, n_c,
                        parts.infl, flag, lay.dropped, parts.pi_infl)


def cell_layout(table: ObservationTable, spec: CellSpec, stratum=None) -> Layout:
    if table.mode == PANEL:
        return panel_layout(table, spec.e, spec.unexposed, spec.base, spec.t, stratum, spec.where)
    return rcs_layout(table, spec.e, spec.unexposed, spec.base, spec.t, stratum, spec.where)


def estimate_cell_panel(table, spec: CellSpec, tau=TAU) -> CellEstimate:
    lay = panel_layout(table, spec.e, spec.unexposed, spec.base, spec.t, where=spec.where)
    return _finish(spec, lay, wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, spec.where))


def estimate_cell_rcs(table, spec: CellSpec, tau=TAU) -> CellEstimate:
    lay = rcs_layout(table, spec.e, spec.unexposed, spec.base, spec.t, where=spec.where)
    return _finish(spec, lay, wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, spec.where))


def estimate_cell_triple(table, spec: CellSpec, stratum="A", tau=TAU) -> CellEstimate:
    """Triple-difference cell: stratum A DID minus the other stratum's DID."""
    lay = cell_layout(table, spec, stratum)
    return _finish(spec, lay, wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, spec.where))


def estimate_cell(table, spec: CellSpec, stratum=None, tau=TAU) -> CellEstimate:
    if stratum is not None:
        return estimate_cell_triple(table, spec, stratum, tau)
    if table.mode == PANEL:
        return estimate_cell_panel(table, spec, tau)
    return estimate_cell_rcs(table, spec, tau)


def _flagged(table, spec, stratum, exc) -> CellEstimate:
    lay = cell_layout(table, spec, stratum)
    n = lay.n_total
    half = len(lay.cells) // 2
    n_e = int(sum(m.sum() for m, _ in lay.cells[:half]))
    n_c = int(sum(m.sum() for m, _ in lay.cells[half:]))
    nan = float("nan")
    pi = exc.value if isinstance(exc, WeakDenominator) else nan
    return CellEstimate(spec, nan, pi, nan, nan, (nan, nan), n_e, n_c, np.zeros(n),
                        "weak_denominator", lay.dropped, np.zeros(n))


def estimate_cells(table, cohorts: CohortMap, cells=None, stratum=None, tau=TAU) -> list:
    """Estimate every cell; weak first stages come back flagged, not raised."""
    cells = build_cells(cohorts) if cells is None else list(cells)

    def one(spec):
        try:
            return estimate_cell(table, spec, stratum, tau)
        except WeakDenominator as exc:
            return _flagged(table, spec, stratum, exc)

    return pmap(one, cells)


def cells_json(estimates) -> list:
    return [c.to_dict() for c in estimates]


# -- regression route -------------------------------------------------------------

def tsls_cell(table, spec: CellSpec) -> float:
    """Coefficient on D from the within-slice 2SLS regression.

    Regressors: constant, exposed-group dummy, post-period dummy, D.
    Instruments: constant, group dummy, post dummy, group x post.
    """
    if table.mode == PANEL:
        pv = table.panel
        lay = panel_layout(table, spec.e, spec.unexposed, spec.base, spec.t, where=spec.where)
        keep = lay.cells[0][0] | lay.cells[1][0]
        grp = lay.cells[0][0][keep].astype(float)
        i0, i1 = pv.period_index(spec.base), pv.period_index(spec.t)
        y = np.concatenate([pv.y[keep, i0], pv.y[keep, i1]])
        d = np.concatenate([pv.d[keep, i0], pv.d[keep, i1]])
        g = np.concatenate([grp, grp])
        post = np.concatenate([np.zeros(keep.sum()), np.ones(keep.sum())])
    else:
        in_e = np.isin(table.cohort, [spec.e])
        in_u = np.isin(table.cohort, list(spec.unexposed))
        at = (table.time == spec.t) | (table.time == spec.base)
        keep = (in_e | in_u) & at
        y = table.y[keep]
        d = table.d[keep].astype(float)
        g = in_e[keep].astype(float)
        post = (table.time[keep] == spec.t).astype(float)
    one = np.ones_like(y)
    X = np.column_stack([one, g, post, d])
    Z = np.column_stack([one, g, post, g * post])
    beta = np.linalg.solve(Z.T @ X, Z.T @ y)
    return float(beta[3])


# -- bootstrap --------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapDraws:
    draws: np.ndarray
    redraws: int

    @property
    def se(self) -> float:
        return float(np.std(self.draws, ddof=1))


def resample_counts(m: int, reps: int, seed: int, valid=None, max_redraws=None):
    """Multinomial resampling counts (reps x m), one derived stream per replicate.

    ``valid(counts_row) -> bool`` rejects degenerate resamples, which are
    redrawn from the same replicate stream; total redraws are capped.
    """
    if reps < 1:
        raise UsageError("bootstrap needs reps >= 1")
    cap = reps if max_redraws is None else max_redraws
    out = np.empty((reps, m))
    redraws = 0
    for r in range(reps):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), r])))
        while True:
            c = np.bincount(rng.integers(0, m, m), minlength=m).astype(float)
            if valid is None or valid(c):
                break
            redraws += 1
            if redraws > cap:
                raise DegenerateResample(f"more than {cap} degenerate resamples")
        out[r] = c
    return out, redraws


def bootstrap_cell(table, spec: CellSpec, reps: int, seed: int, stratum=None) -> BootstrapDraws:
    lay = cell_layout(table, spec, stratum)
    universe = np.zeros(lay.n_total, dtype=bool)
    for m, _ in lay.cells:
        universe |= m
    idx = np.flatnonzero(universe)
    masks = [m[idx] for m, _ in lay.cells]
    signs = np.array([s for _, s in lay.cells])
    y, d = lay.y[idx], lay.d[idx]

    def valid(c):
        return all(c[m].sum() > 0 for m in masks)

    C, redraws = resample_counts(len(idx), reps, seed, valid)
    num = np.zeros(reps)
    den = np.zeros(reps)
    for m, s in zip(masks, signs):
        w = C[:, m]
        n = w.sum(axis=1)
        num += s * (w @ y[m]) / n
        den += s * (w @ d[m]) / n
    return BootstrapDraws(num / den, redraws)


def se_bootstrap(table, spec: CellSpec, reps: int = 500, seed: int = 0, stratum=None) -> float:
    """Unit-resampling (panel) or row-resampling (RCS) bootstrap SE of one cell."""
    if reps < 100:
        raise UsageError("se_bootstrap needs reps >= 100")
    return bootstrap_cell(table, spec, reps, seed, stratum).se
