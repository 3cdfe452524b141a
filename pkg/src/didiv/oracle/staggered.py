"""Staggered-adoption populations built on a single latent threshold.

Each unit draws V ~ U(0, 1) independently of its cohort. Without exposure it
takes the treatment in period t iff V < a_t; once its cohort e is exposed it
takes it iff V < a_t + k_{e, t-e}. So for cohort e at period t:

* takers (V < a_t) are treated either way,
* compliers (a_t <= V < a_t + k) are treated only because of exposure,
* the complier sets at different l overlap whenever the bands overlap.

Treatment effects are b_t + h V for takers (common to all cohorts, which is
what keeps outcome trends parallel) and m_{e,l} + s (V - a_t) for everyone
else. Every population quantity is a closed-form integral over V.

Optional strata (A/B) share everything except the first-stage response,
which is scaled by ``b_complier_scale`` in stratum B, and per-period outcome
shocks specific to B.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ..data import NEVER, PANEL, RCS, ObservationTable
from ..errors import InfeasibleSpec
from ..parallel import pmap
from .rng import blocks, stream, unit_ids


def _at(seq, i):
    seq = tuple(seq)
    return seq[min(i, len(seq) - 1)]


@dataclass
class StaggeredSpec:
    periods: int
    cohort_shares: dict
    take_up: tuple = (0.2,)
    complier_share: tuple = (0.4,)
    complier_share_by_cohort: dict = field(default_factory=dict)
    effect_base: float = 1.0
    effect_slope: float = 0.0
    effect_by_cohort: dict = field(default_factory=dict)
    effect_selection: float = 0.0
    taker_effect: float = 1.0
    taker_trend: float = 0.0
    taker_selection: float = 0.0
    time_effects: tuple = ()
    time_trend: float = 0.5
    cohort_levels: dict = field(default_factory=dict)
    level_selection: float = 0.0
    unit_sd: float = 1.0
    noise_sd: float = 1.0
    outcome_trend_break: dict = field(default_factory=dict)
    treatment_trend_break: dict = field(default_factory=dict)
    strata: float | None = None
    b_complier_scale: float = 0.0
    b_shocks: tuple = ()
    seed: int = 0

    design = "staggered"

    def __post_init__(self):
        def key(e):
            return NEVER if (isinstance(e, str) and e.lower() in ("inf", "never")) or e == NEVER else int(e)
        self.cohort_shares = {key(e): float(p) for e, p in self.cohort_shares.items()}
        for name in ("complier_share_by_cohort", "effect_by_cohort", "cohort_levels",
                     "outcome_trend_break", "treatment_trend_break"):
            d = getattr(self, name)
            setattr(self, name, {key(e): (tuple(v) if isinstance(v, (list, tuple)) else float(v))
                                 for e, v in d.items()})
        self.take_up = tuple(float(x) for x in self.take_up)
        self.complier_share = tuple(float(x) for x in self.complier_share)
        self.time_effects = tuple(float(x) for x in self.time_effects)
        self.b_shocks = tuple(float(x) for x in self.b_shocks)

    # -- primitives -----------------------------------------------------------------
    @property
    def cohorts(self) -> tuple:
        return tuple(sorted(self.cohort_shares))

    def lam(self, t: int) -> float:
        if self.time_effects:
            return self.time_effects[t - 1]
        return self.time_trend * t

    def a(self, e, t: int) -> float:
        return _at(self.take_up, t - 1) + self.treatment_trend_break.get(e, 0.0) * t

    def k(self, e, l: int, stratum: str = "A") -> float:
        if e == NEVER or l < 0:
            return 0.0
        seq = self.complier_share_by_cohort.get(e, self.complier_share)
        base = _at(seq, l)
        return base * (self.b_complier_scale if stratum == "B" else 1.0)

    def m(self, e, l: int) -> float:
        return self.effect_base + self.effect_slope * l + self.effect_by_cohort.get(e, 0.0)

    def taker(self, t: int) -> float:
        return self.taker_effect + self.taker_trend * t

    def shock(self, t: int, stratum: str) -> float:
        if stratum != "B" or not self.b_shocks:
            return 0.0
        return _at(self.b_shocks, t - 1)

    def strata_shares(self):
        if self.strata is None:
            return (("A", 1.0),)
        return (("A", self.strata), ("B", 1.0 - self.strata))

    def check(self) -> None:
        if self.periods < 2:
            raise InfeasibleSpec("need at least two periods")
        sh = self.cohort_shares
        if any(p < 0 for p in sh.values()) or abs(math.fsum(sh.values()) - 1) > 1e-9:
            raise InfeasibleSpec("cohort shares must be non-negative and sum to 1")
        for e in sh:
            if e != NEVER and not 1 <= e <= self.periods:
                raise InfeasibleSpec(f"cohort {e} outside periods 1..{self.periods}")
        if self.strata is not None and not 0 < self.strata < 1:
            raise InfeasibleSpec("stratum A share must be in (0, 1)")
        for e in sh:
            for t in range(1, self.periods + 1):
                a = self.a(e, t)
                for st, _ in self.strata_shares():
                    k = self.k(e, t - e, st) if e != NEVER and t >= e else 0.0
                    if a < 0 or k < 0 or a + k > 1 + 1e-12:
                        raise InfeasibleSpec(
                            f"cohort {e}, period {t}: take-up {a} and complier share {k} "
                            "do not fit in [0, 1]")

    # -- exact cell expectations ---------------------------------------------------
    def mean_d(self, e, t, stratum="A") -> float:
        return self.a(e, t) + self.k(e, t - e, stratum)

    def mean_y(self, e, t, stratum="A") -> float:
        a = self.a(e, t)
        k = self.k(e, t - e, stratum)
        out = (self.lam(t) + self.cohort_levels.get(e, 0.0) + self.level_selection / 2
               + self.outcome_trend_break.get(e, 0.0) * t + self.shock(t, stratum))
        out += self.taker(t) * a + self.taker_selection * a * a / 2
        if k > 0:
            out += k * self.m(e, t - e) + self.effect_selection * k * k / 2
        return out

    def pooled(self, fn, e, t) -> float:
        return math.fsum(p * fn(e, t, st) for st, p in self.strata_shares())


# -- oracle values -----------------------------------------------------------------------

@dataclass(frozen=True)
class StaggeredValues:
    clatt: dict  # (e, t) -> CLATT among all compliers (pooled over strata)
    clatt_a: dict  # (e, t) -> CLATT among stratum-A compliers
    caet: dict  # (e, t) -> complier share (pooled)
    shares: dict  # cohort -> population share

    def to_dict(self) -> dict:
        def lab(e):
            return "inf" if e == NEVER else str(int(e))
        return {
            "clatt": [{"e": int(e), "t": t, "value": v} for (e, t), v in sorted(self.clatt.items())],
            "caet": [{"e": int(e), "t": t, "value": v} for (e, t), v in sorted(self.caet.items())],
            "shares": {lab(e): p for e, p in self.shares.items()},
        }


def clatt(spec: StaggeredSpec, e, t, stratum=None) -> float:
    """E[Y_t(1) - Y_t(0) | cohort e, complier at t]."""
    l = t - e
    m = spec.m(e, l)
    if stratum is not None:
        k = spec.k(e, l, stratum)
        return m + spec.effect_selection * k / 2
    num, den = [], []
    for st, p in spec.strata_shares():
        k = spec.k(e, l, st)
        num.append(p * (k * m + spec.effect_selection * k * k / 2))
        den.append(p * k)
    return math.fsum(num) / math.fsum(den)


def caet(spec: StaggeredSpec, e, t) -> float:
    return math.fsum(p * spec.k(e, t - e, st) for st, p in spec.strata_shares())


def population_values(spec: StaggeredSpec) -> StaggeredValues:
    spec.check()
    cl, cla, ca = {}, {}, {}
    for e in spec.cohorts:
        if e == NEVER:
            continue
        for t in range(int(e), spec.periods + 1):
            if caet(spec, e, t) > 0:
                ca[(e, t)] = caet(spec, e, t)
                cl[(e, t)] = clatt(spec, e, t)
                cla[(e, t)] = clatt(spec, e, t, "A")
    return StaggeredValues(cl, cla, ca, dict(spec.cohort_shares))


def _group_mean(spec, fn, group, t, stratum=None):
    w = [spec.cohort_shares[g] for g in group]
    tot = math.fsum(w)
    if stratum is None:
        return math.fsum(p * spec.pooled(fn, g, t) for g, p in zip(group, w)) / tot
    return math.fsum(p * fn(g, t, stratum) for g, p in zip(group, w)) / tot


def population_wald(spec: StaggeredSpec, e, l, unexposed, base=None, stratum=None) -> dict:
    """Population reduced form, first stage and ratio of one cell.

    With ``stratum='A'`` the contrast is the triple difference A minus B.
    """
    base = e - 1 if base is None else base
    t = e + l

    def did(fn, st):
        return ((_group_mean(spec, fn, [e], t, st) - _group_mean(spec, fn, [e], base, st))
                - (_group_mean(spec, fn, unexposed, t, st) - _group_mean(spec, fn, unexposed, base, st)))

    if stratum is None:
        alpha, pi = did(spec.mean_y, None), did(spec.mean_d, None)
    else:
        alpha = did(spec.mean_y, "A") - did(spec.mean_y, "B")
        pi = did(spec.mean_d, "A") - did(spec.mean_d, "B")
    return {"alpha": alpha, "pi": pi, "theta": alpha / pi if pi != 0 else float("nan")}


def population_weights(spec: StaggeredSpec, kind: str, params: dict, cells) -> dict:
    """Summary weights from exact shares and complier shares, by direct enumeration.

    ``cells`` is the set of (e, t) cells in the summary's domain.
    """
    cells = sorted(cells)
    sh = spec.cohort_shares
    cohorts = sorted({e for e, _ in cells})
    raw = {}
    for e, t in cells:
        c = caet(spec, e, t)
        if kind == "es":
            if t - e != params["l"]:
                continue
            peers = [(f, f + params["l"]) for f in cohorts if (f, f + params["l"]) in cells]
            p = sh[e] / math.fsum(sh[f] for f, _ in peers)
            raw[(e, t)] = p * c / math.fsum(caet(spec, *x) for x in peers)
        elif kind == "es_bal":
            ok = {f for f in cohorts if (f, f + params["l2"]) in cells}
            if t - e != params["l"] or e not in ok:
                continue
            peers = [(f, f + params["l"]) for f in ok if (f, f + params["l"]) in cells]
            p = sh[e] / math.fsum(sh[f] for f, _ in peers)
            raw[(e, t)] = p * c / math.fsum(caet(spec, *x) for x in peers)
        elif kind == "sel":
            if e != params["e"]:
                continue
            raw[(e, t)] = c / math.fsum(caet(spec, f, s) for f, s in cells if f == e)
        elif kind in ("calendar", "calendar_cumm"):
            if (kind == "calendar" and t != params["t"]) or t > params["t"]:
                continue
            p = sh[e] / math.fsum(sh[f] for f in cohorts if f <= t)
            raw[(e, t)] = p * c / math.fsum(caet(spec, f, s) for f, s in cells if s == t)
        elif kind == "overall_w":
            raw[(e, t)] = sh[e]
        elif kind == "overall_sel":
            p = sh[e] / math.fsum(sh[f] for f in cohorts)
            raw[(e, t)] = p * c / math.fsum(caet(spec, f, s) for f, s in cells if f == e)
        else:
            raise ValueError(kind)
    mass = math.fsum(raw.values())
    return {k: v / mass for k, v in raw.items()}


def population_aggregate(spec, kind, params, cells) -> float:
    w = population_weights(spec, kind, params, cells)
    return math.fsum(v * clatt(spec, *k) for k, v in w.items())


@dataclass(frozen=True)
class TwfeivPopulation:
    beta_iv: float
    zhat: dict  # (g, t) -> residualized instrument
    components: list  # dicts with t, kind, weight, wdid


def population_twfeiv(spec: StaggeredSpec, base: int | None = None) -> TwfeivPopulation:
    """Two-cohort TWFEIV estimand and its per-period decomposition.

    The instrument is residualized on group and period dummies by weighted
    least squares with population group shares as weights.
    """
    spec.check()
    groups = [g for g in spec.cohorts if spec.cohort_shares[g] > 0]
    if len(groups) != 2:
        raise InfeasibleSpec("population TWFEIV decomposition needs exactly two cohorts")
    e, u = groups
    T = spec.periods
    b = e - 1 if base is None else base
    rows, wts, zv = [], [], []
    for gi, g in enumerate(groups):
        for t in range(1, T + 1):
            x = np.zeros(2 + T - 1)
            x[gi] = 1.0
            if t > 1:
                x[t] = 1.0
            rows.append(x)
            wts.append(spec.cohort_shares[g])
            zv.append(1.0 if t >= g else 0.0)
    X, W, Zv = np.array(rows), np.sqrt(np.array(wts)), np.array(zv)
    coef, *_ = np.linalg.lstsq(X * W[:, None], Zv * W, rcond=None)
    zres = Zv - X @ coef
    zhat = {}
    i = 0
    for g in groups:
        for t in range(1, T + 1):
            zhat[(g, t)] = zres[i]
            i += 1
    num = math.fsum(spec.cohort_shares[g] * zhat[(g, t)] * spec.pooled(spec.mean_y, g, t)
                    for g in groups for t in range(1, T + 1))
    den = math.fsum(spec.cohort_shares[g] * zhat[(g, t)] * spec.pooled(spec.mean_d, g, t)
                    for g in groups for t in range(1, T + 1))
    beta = num / den
    comps = []
    raw = {}
    for t in range(1, T + 1):
        if t == b:
            continue
        rf = ((spec.pooled(spec.mean_y, e, t) - spec.pooled(spec.mean_y, e, b))
              - (spec.pooled(spec.mean_y, u, t) - spec.pooled(spec.mean_y, u, b)))
        fs = ((spec.pooled(spec.mean_d, e, t) - spec.pooled(spec.mean_d, e, b))
              - (spec.pooled(spec.mean_d, u, t) - spec.pooled(spec.mean_d, u, b)))
        raw[t] = (spec.cohort_shares[e] * zhat[(e, t)] * fs, rf, fs)
    tot = math.fsum(v[0] for v in raw.values())
    for t, (a, rf, fs) in raw.items():
        kind = "pre" if t < e else ("clean" if u == NEVER or t < u else "biased")
        comps.append({"t": t, "kind": kind, "weight": float(a / tot),
                      "wdid": rf / fs if fs != 0 else float("nan")})
    return TwfeivPopulation(beta, zhat, comps)


# -- sampling ---------------------------------------------------------------------------

def _draw_block(spec: StaggeredSpec, b: int, start: int, stop: int, mode: str):
    rng = stream(spec.seed, b)
    n = stop - start
    T = spec.periods
    labels = spec.cohorts
    probs = np.array([spec.cohort_shares[e] for e in labels])
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    ci = np.searchsorted(cdf, rng.random(n), side="right")
    ci = np.minimum(ci, len(labels) - 1)
    coh = np.array(labels, dtype=float)[ci]
    v = rng.random(n)
    if spec.strata is not None:
        st = np.where(rng.random(n) < spec.strata, "A", "B")
    else:
        st = np.full(n, "A")
    u = rng.normal(0.0, spec.unit_sd, n) if spec.unit_sd > 0 else np.zeros(n)
    eps = rng.normal(0.0, spec.noise_sd, (n, T)) if spec.noise_sd > 0 else np.zeros((n, T))
    obs_t = rng.integers(1, T + 1, n) if mode == RCS else None
    D = np.zeros((n, T), dtype=np.int64)
    Y = np.zeros((n, T))
    kinds = np.empty((n, T), dtype="<U2")
    for t in range(1, T + 1):
        a = np.empty(n)
        k = np.zeros(n)
        m = np.zeros(n)
        y0 = np.full(n, spec.lam(t)) + spec.level_selection * v + u + eps[:, t - 1]
        for j, e in enumerate(labels):
            sel = ci == j
            if not sel.any():
                continue
            a[sel] = spec.a(e, t)
            y0[sel] += spec.cohort_levels.get(e, 0.0) + spec.outcome_trend_break.get(e, 0.0) * t
            if e != NEVER and t >= e:
                for s in ("A", "B"):
                    ss = sel & (st == s)
                    k[ss] = spec.k(e, t - e, s)
                m[sel] = spec.m(e, t - e)
        if spec.b_shocks:
            y0[st == "B"] += spec.shock(t, "B")
        taker = v < a
        treated = v < a + k
        tau = np.where(taker, spec.taker(t) + spec.taker_selection * v,
                       m + spec.effect_selection * (v - a))
        D[:, t - 1] = treated
        Y[:, t - 1] = y0 + treated * tau
        kinds[:, t - 1] = np.where(taker, "AT", np.where(treated, "CM", "NT"))
    return coh, v, st, D, Y, kinds, obs_t


def generate(spec: StaggeredSpec, n: int, mode: str = PANEL, seed: int | None = None):
    """Draw n units; returns (ObservationTable, audit DataFrame of hidden types).

    Audit columns ``type_t`` give AT (treated without exposure), CM (treated
    only because of exposure) or NT per period.
    """
    if seed is not None:
        spec = replace(spec, seed=int(seed))
    spec.check()
    T = spec.periods
    parts = pmap(lambda blk: _draw_block(spec, *blk, mode), blocks(n))
    coh = np.concatenate([p[0] for p in parts])
    v = np.concatenate([p[1] for p in parts])
    st = np.concatenate([p[2] for p in parts])
    D = np.concatenate([p[3] for p in parts])
    Y = np.concatenate([p[4] for p in parts])
    kinds = np.concatenate([p[5] for p in parts])
    ids = unit_ids(n)
    periods = np.arange(1, T + 1)
    Z = (periods[None, :] >= coh[:, None]).astype(np.int64)
    strat = st if spec.strata is not None else None
    if mode == PANEL:
        table = ObservationTable(np.repeat(ids, T), np.tile(periods, n), Y.ravel(), D.ravel(),
                                 Z.ravel(), PANEL, 1,
                                 stratum=None if strat is None else np.repeat(strat, T))
    else:
        t = np.concatenate([p[6] for p in parts])
        r = np.arange(n)
        table = ObservationTable(ids, t, Y[r, t - 1], D[r, t - 1], Z[r, t - 1], RCS, 1,
                                 cohort=coh, stratum=strat)
    audit = pd.DataFrame({"unit": ids, "cohort": coh, "v": v})
    if strat is not None:
        audit["stratum"] = strat
    for j, t in enumerate(periods):
        audit[f"type_{t}"] = kinds[:, j]
    return table, audit


# -- ready-made designs ------------------------------------------------------------------

def demo_spec(seed: int = 0, **kw) -> StaggeredSpec:
    """Cohorts 2 and 3 plus never exposed over four periods.

    Complier share 0.4 and CLATT_{e,e+l} = 1 + 0.5 l.
    """
    base = dict(periods=4, cohort_shares={2: 0.3, 3: 0.3, NEVER: 0.4}, take_up=(0.2, 0.25, 0.3, 0.35),
                complier_share=(0.4,), effect_base=1.0, effect_slope=0.5, taker_effect=2.0,
                taker_trend=0.3, level_selection=2.0, seed=seed)
    base.update(kw)
    return StaggeredSpec(**base)


def three_cohort_spec(seed: int = 0, **kw) -> StaggeredSpec:
    """Cohorts 2, 3, 4 and never exposed over five periods, heterogeneous CAETs."""
    base = dict(periods=5, cohort_shares={2: 0.2, 3: 0.25, 4: 0.2, NEVER: 0.35},
                take_up=(0.1, 0.12, 0.15, 0.18, 0.2), complier_share=(0.4,),
                complier_share_by_cohort={2: (0.3, 0.4, 0.5, 0.5), 3: (0.5, 0.45, 0.4), 4: (0.6, 0.5)},
                effect_base=1.0, effect_slope=0.5, effect_by_cohort={3: 0.5, 4: -0.3},
                effect_selection=1.0, taker_effect=1.5, seed=seed)
    base.update(kw)
    return StaggeredSpec(**base)


def late_comparison_spec(seed: int = 0, **kw) -> StaggeredSpec:
    """Early cohort 3 and a comparison cohort exposed at 7, ten periods.

    Exposed effects grow with time since exposure and the early cohort has
    the larger complier share, the setting where TWFEIV puts negative weight
    on late-period comparisons.
    """
    base = dict(periods=10, cohort_shares={3: 0.5, 7: 0.5}, take_up=(0.1,),
                complier_share=(0.6,), complier_share_by_cohort={7: (0.3,)},
                effect_base=1.0, effect_slope=0.5, taker_effect=1.0, seed=seed)
    base.update(kw)
    return StaggeredSpec(**base)


def triple_spec(seed: int = 0, **kw) -> StaggeredSpec:
    """One exposed cohort (2) and never exposed, two strata, T=3.

    Stratum B has no first-stage response; both strata share a cohort-specific
    outcome and take-up trend that breaks plain parallel trends, and B gets
    its own period shocks.
    """
    base = dict(periods=3, cohort_shares={2: 0.5, NEVER: 0.5}, take_up=(0.2, 0.2, 0.2),
                complier_share=(0.4,), effect_base=2.0, effect_slope=1.0, effect_selection=1.0,
                outcome_trend_break={2: 0.7}, treatment_trend_break={2: 0.05},
                strata=0.5, b_complier_scale=0.0, b_shocks=(0.0, 1.5, -0.5), seed=seed)
    base.update(kw)
    return StaggeredSpec(**base)


def pretrend_spec(slope: float = 0.0, seed: int = 0, **kw) -> StaggeredSpec:
    """Cohort 5 against never exposed over periods 1..5, so three leads exist.

    ``slope`` adds slope * t to the exposed cohort's untreated outcome, a
    differential trend in outcome levels.
    """
    base = dict(periods=5, cohort_shares={5: 0.5, NEVER: 0.5}, take_up=(0.2, 0.22, 0.25, 0.27, 0.3),
                complier_share=(0.4,), effect_base=1.0, taker_effect=1.0, taker_trend=0.2,
                level_selection=1.0, outcome_trend_break={5: slope} if slope else {}, seed=seed)
    base.update(kw)
    return StaggeredSpec(**base)


def outcome_sd(spec: StaggeredSpec) -> float:
    """Standard deviation of the untreated outcome net of period and cohort means."""
    return math.sqrt(spec.unit_sd ** 2 + spec.noise_sd ** 2 + spec.level_selection ** 2 / 12)


def random_staggered_spec(rng: np.random.Generator, n_cohorts: int | None = None,
                          never: bool | None = None, periods: int | None = None,
                          seed: int = 0) -> StaggeredSpec:
    """Random feasible staggered population (parallel trends hold by construction)."""
    T = int(periods or rng.integers(3, 9))
    never = bool(rng.random() < 0.5) if never is None else never
    k = int(n_cohorts or rng.integers(1, min(4, T - 1) + 1))
    k_exposed = k - 1 if (never and n_cohorts) else k
    dates = sorted(int(x) for x in rng.choice(np.arange(2, T + 1), size=k_exposed, replace=False))
    labels = dates + ([NEVER] if never else [])
    w = rng.dirichlet(np.ones(len(labels)) * 2)
    w = 0.05 + 0.95 * w
    w /= w.sum()
    return StaggeredSpec(
        periods=T,
        cohort_shares={e: float(p) for e, p in zip(labels, w)},
        take_up=tuple(rng.uniform(0.0, 0.3, T)),
        complier_share=tuple(rng.uniform(0.15, 0.5, T)),
        complier_share_by_cohort={e: tuple(rng.uniform(0.15, 0.5, T)) for e in dates},
        effect_base=float(rng.normal(1, 1)), effect_slope=float(rng.normal(0, 0.5)),
        effect_by_cohort={e: float(rng.normal(0, 1)) for e in dates},
        effect_selection=float(rng.normal(0, 1)), taker_effect=float(rng.normal(1, 1)),
        taker_trend=float(rng.normal(0, 0.3)), taker_selection=float(rng.normal(0, 1)),
        time_trend=float(rng.normal(0.5, 0.5)),
        cohort_levels={e: float(rng.normal(0, 1)) for e in labels},
        level_selection=float(rng.normal(0, 1)), unit_sd=float(rng.uniform(0, 1.5)),
        noise_sd=float(rng.uniform(0.3, 1.5)), seed=seed,
    )
