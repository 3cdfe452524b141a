"""Two-group, two-period populations with explicit types and potential outcomes.

Group 1 is exposed to the instrument in period 1, group 0 never is. Within a
group a unit's type is its treatment path ``(d0, d1u, d1e)`` (see ``types``),
and ``means[g][path]`` is a (2, J+1) array of E[Y_t(j)] for that path in that
group. Outcomes add a unit effect and idiosyncratic noise to these means.
Every population quantity below is an exact finite sum over paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..data import NEVER, PANEL, RCS, ObservationTable
from ..errors import InfeasibleSpec
from ..parallel import pmap
from .rng import blocks, stream, unit_ids
from .types import CM, FUZZY_EXPOSED, FUZZY_UNEXPOSED, NT, UnitType

GAP_TOL = 1e-9


def _fsum(xs) -> float:
    return math.fsum(xs)


@dataclass
class TwoByTwoSpec:
    shares: dict  # group -> {path: probability}
    means: dict  # group -> {path: array (2, J+1)}
    arity: int = 1
    p_exposed: float = 0.5
    noise_sd: float = 1.0
    unit_sd: float = 0.0
    monotone: bool = True
    parallel_treatment: bool = True
    parallel_outcome: bool = True
    seed: int = 0

    design = "two_by_two"

    def __post_init__(self):
        self.shares = {int(g): {tuple(int(x) for x in p): float(q) for p, q in s.items()}
                       for g, s in self.shares.items()}
        self.means = {int(g): {tuple(int(x) for x in p): np.asarray(m, dtype=float)
                               for p, m in s.items()} for g, s in self.means.items()}

    def check(self) -> None:
        J = self.arity
        if not 0 < self.p_exposed < 1:
            raise InfeasibleSpec("p_exposed must lie strictly between 0 and 1")
        for g in (0, 1):
            sh = self.shares.get(g)
            if not sh:
                raise InfeasibleSpec(f"group {g} has no type distribution")
            if any(q < 0 for q in sh.values()):
                raise InfeasibleSpec(f"negative type probability in group {g}")
            if abs(_fsum(sh.values()) - 1.0) > 1e-9:
                raise InfeasibleSpec(f"type probabilities of group {g} sum to {_fsum(sh.values())}")
            for p, q in sh.items():
                if len(p) != 3 or min(p) < 0 or max(p) > J:
                    raise InfeasibleSpec(f"path {p} outside 0..{J}")
                if self.monotone and q > 0 and p[2] < p[1]:
                    raise InfeasibleSpec(f"defier path {p} has mass {q} under monotonicity")
                m = self.means.get(g, {}).get(p)
                if q > 0 and (m is None or m.shape != (2, J + 1)):
                    raise InfeasibleSpec(f"outcome means for group {g} path {p} must be (2, {J + 1})")

    def items(self, g):
        return [(p, q, self.means[g][p]) for p, q in sorted(self.shares[g].items()) if q > 0]


# -- exact population quantities ------------------------------------------------------

@dataclass(frozen=True)
class TimeGain:
    group: int
    delta: float  # E[Y_1(D_1(0,0)) - Y_0(D_0)] computed directly
    weights: dict  # time type -> share
    per_type: dict  # time type -> Delta_{g^t, e}
    time_effect: dict  # time type -> E[Y_1(d0) - Y_0(d0)]
    selection_gain: dict  # time type -> E[Y_1(d1u) - Y_1(d0)]
    residual: float  # delta - sum w * per_type

    @property
    def weight_sum(self) -> float:
        return _fsum(self.weights.values())


@dataclass(frozen=True)
class SlatetReport:
    slatet: float
    components: dict  # label -> effect
    shares: dict  # label -> share among switchers
    residual: float
    latet: float


@dataclass(frozen=True)
class TwoByTwoValues:
    wald_did: float
    alpha: float
    pi: float
    latet: float | None
    acrt: float
    acrt_weights: tuple
    acrt_steps: tuple
    complier_share: float
    pt_treatment_gap: float
    pt_outcome_gap: float
    identification_gap: float
    time_gain: dict

    def to_dict(self) -> dict:
        return {
            "wald_did": self.wald_did, "alpha": self.alpha, "pi": self.pi,
            "latet": self.latet, "acrt": self.acrt,
            "acrt_weights": list(self.acrt_weights), "acrt_steps": list(self.acrt_steps),
            "complier_share": self.complier_share,
            "pt_treatment_gap": self.pt_treatment_gap,
            "pt_outcome_gap": self.pt_outcome_gap,
            "identification_gap": self.identification_gap,
            "time_gain": {str(g): {"delta": tg.delta, "weights": tg.weights,
                                   "per_type": tg.per_type} for g, tg in self.time_gain.items()},
        }


def group_trends(spec: TwoByTwoSpec, g: int):
    """(E[D_1 - D_0 | g], E[Y_1 - Y_0 | g]) for the observed paths of group g."""
    dd, dy = [], []
    for (d0, d1u, d1e), q, m in spec.items(g):
        d1 = d1e if g == 1 else d1u
        dd.append(q * (d1 - d0))
        dy.append(q * (m[1, d1] - m[0, d0]))
    return _fsum(dd), _fsum(dy)


def latet(spec: TwoByTwoSpec) -> float:
    """E[Y_1(1) - Y_1(0) | exposed group, instrument compliers] (binary only)."""
    num, den = [], []
    for p, q, m in spec.items(1):
        if UnitType.from_path(p).gz == CM:
            num.append(q * (m[1, 1] - m[1, 0]))
            den.append(q)
    if not den or _fsum(den) == 0:
        raise InfeasibleSpec("no instrument compliers in the exposed group")
    return _fsum(num) / _fsum(den)


def acrt(spec: TwoByTwoSpec):
    """Average causal response on the treated with its threshold weights.

    w_j = P(d1e >= j > d1u | exposed) / sum_k P(d1e >= k > d1u | exposed) and
    step effect_j = E[Y_1(j) - Y_1(j-1) | d1e >= j > d1u, exposed].
    """
    J = spec.arity
    mass, steps = [], []
    for j in range(1, J + 1):
        cell = [(q, m) for (d0, d1u, d1e), q, m in spec.items(1) if d1e >= j > d1u]
        s = _fsum(q for q, _ in cell)
        mass.append(s)
        steps.append(_fsum(q * (m[1, j] - m[1, j - 1]) for q, m in cell) / s if s > 0 else 0.0)
    tot = _fsum(mass)
    if tot <= 0:
        raise InfeasibleSpec("no threshold compliers in the exposed group")
    w = tuple(s / tot for s in mass)
    return _fsum(wj * ej for wj, ej in zip(w, steps)), w, tuple(steps), tot


def time_gain(spec: TwoByTwoSpec, g: int) -> TimeGain:
    items = spec.items(g)
    e1 = _fsum(q * m[1, d1u] for (d0, d1u, _), q, m in items)
    e0 = _fsum(q * m[0, d0] for (d0, d1u, _), q, m in items)
    delta = e1 - e0
    by = {}
    for (d0, d1u, d1e), q, m in items:
        by.setdefault((d0, d1u), []).append((q, m, d0, d1u))
    weights, per, te, sg = {}, {}, {}, {}
    for key, rows in sorted(by.items()):
        lab = UnitType.from_path((key[0], key[1], key[1])).gt if spec.arity == 1 else f"{key[0]}->{key[1]}"
        w = _fsum(q for q, *_ in rows)
        weights[lab] = w
        per[lab] = _fsum(q * (m[1, b] - m[0, a]) for q, m, a, b in rows) / w
        te[lab] = _fsum(q * (m[1, a] - m[0, a]) for q, m, a, b in rows) / w
        sg[lab] = _fsum(q * (m[1, b] - m[1, a]) for q, m, a, b in rows) / w
    resid = delta - _fsum(weights[k] * per[k] for k in weights)
    return TimeGain(g, delta, weights, per, te, sg, resid)


def population_values(spec: TwoByTwoSpec) -> TwoByTwoValues:
    spec.check()
    d1, y1 = group_trends(spec, 1)
    d0, y0 = group_trends(spec, 0)
    alpha, pi = y1 - y0, d1 - d0
    wald = alpha / pi if pi != 0 else float("nan")
    a, w, steps, share = acrt(spec)
    lt = latet(spec) if spec.arity == 1 else None
    tg = {g: time_gain(spec, g) for g in (0, 1)}
    # parallel-trend gaps in the never-exposed treatment and outcome paths
    gap_d = _trend_d_unexposed(spec, 1) - _trend_d_unexposed(spec, 0)
    gap_y = tg[1].delta - tg[0].delta
    if spec.parallel_treatment and abs(gap_d) > GAP_TOL:
        raise InfeasibleSpec(f"spec claims parallel treatment trends but the gap is {gap_d}")
    if spec.parallel_outcome and abs(gap_y) > GAP_TOL * max(1.0, abs(y1), abs(y0)):
        raise InfeasibleSpec(f"spec claims parallel outcome trends but the gap is {gap_y}")
    return TwoByTwoValues(wald, alpha, pi, lt, a, w, steps, share, gap_d, gap_y, wald - a, tg)


def _trend_d_unexposed(spec, g) -> float:
    return _fsum(q * (d1u - d0) for (d0, d1u, _), q, _ in spec.items(g))


def check_time_gain_decomposition(spec: TwoByTwoSpec) -> dict:
    """Expected time gain per group against its time-type decomposition."""
    spec.check()
    return {g: time_gain(spec, g) for g in (0, 1)}


def check_slatet_decomposition(spec: TwoByTwoSpec) -> SlatetReport:
    """Switcher effect as a mix of time-complier and instrument-complier effects.

    Requires the fuzzy-DID admissible types: no instrument defiers and no
    (NT, DF) in the exposed group; only (AT, AT), (CM, NT), (NT, NT) unexposed.
    """
    spec.check()
    if spec.arity != 1:
        raise InfeasibleSpec("switcher decomposition is defined for binary treatment")
    allowed = {1: {t.path for t in FUZZY_EXPOSED}, 0: {t.path for t in FUZZY_UNEXPOSED}}
    for g in (0, 1):
        for p, q, _ in spec.items(g):
            if p not in allowed[g]:
                raise InfeasibleSpec(f"type {UnitType.from_path(p)} has mass {q} in group {g}")
    items = spec.items(1)
    # direct: units whose treatment switches on under the exposed path
    sw = [(q, m) for (d0, d1u, d1e), q, m in items if d1e > d0]
    s = _fsum(q for q, _ in sw)
    if s <= 0:
        raise InfeasibleSpec("no switchers in the exposed group")
    slatet = _fsum(q * (m[1, 1] - m[1, 0]) for q, m in sw) / s
    comp, shares = {}, {}
    for lab, pick in (("CM^T", lambda t: t.gt == CM),
                      ("CM^Z&NT^T", lambda t: t.gz == CM and t.gt == NT)):
        rows = [(q, m) for p, q, m in items if pick(UnitType.from_path(p))]
        mass = _fsum(q for q, _ in rows)
        shares[lab] = mass / s
        comp[lab] = _fsum(q * (m[1, 1] - m[1, 0]) for q, m in rows) / mass if mass > 0 else 0.0
    resid = slatet - _fsum(shares[k] * comp[k] for k in comp)
    return SlatetReport(slatet, comp, shares, resid, latet(spec))


# -- sampling ---------------------------------------------------------------------------

def _draw_block(spec: TwoByTwoSpec, b: int, start: int, stop: int, mode: str):
    rng = stream(spec.seed, b)
    n = stop - start
    exposed = rng.random(n) < spec.p_exposed
    paths = {g: [p for p, _, _ in spec.items(g)] for g in (0, 1)}
    probs = {g: np.array([q for _, q, _ in spec.items(g)]) for g in (0, 1)}
    kind = np.empty(n, dtype=np.int64)
    u = rng.random(n)
    for g in (0, 1):
        cdf = np.cumsum(probs[g])
        cdf[-1] = 1.0
        sel = exposed == bool(g)
        kind[sel] = np.searchsorted(cdf, u[sel], side="right")
    unit_eff = rng.normal(0.0, spec.unit_sd, n) if spec.unit_sd > 0 else np.zeros(n)
    eps = rng.normal(0.0, spec.noise_sd, (n, 2)) if spec.noise_sd > 0 else np.zeros((n, 2))
    period = rng.integers(0, 2, n) if mode == RCS else None
    D = np.empty((n, 2), dtype=np.int64)
    Y = np.empty((n, 2))
    for g in (0, 1):
        for k, p in enumerate(paths[g]):
            sel = (exposed == bool(g)) & (kind == k)
            if not sel.any():
                continue
            d0, d1u, d1e = p
            d1 = d1e if g == 1 else d1u
            m = spec.means[g][p]
            D[sel, 0], D[sel, 1] = d0, d1
            Y[sel, 0] = m[0, d0]
            Y[sel, 1] = m[1, d1]
    Y += unit_eff[:, None] + eps
    path_arr = np.array([paths[int(g)][k] for g, k in zip(exposed, kind)]).reshape(n, 3)
    return exposed, D, Y, path_arr, period


def generate(spec: TwoByTwoSpec, n: int, mode: str = PANEL, seed: int | None = None):
    """Draw n units; returns (ObservationTable, audit DataFrame of hidden types).

    In RCS mode each unit is observed in one uniformly drawn period only.
    """
    spec.check()
    if seed is not None:
        spec = _reseed(spec, seed)
    parts = pmap(lambda blk: _draw_block(spec, *blk, mode), blocks(n))
    exposed = np.concatenate([p[0] for p in parts])
    D = np.concatenate([p[1] for p in parts])
    Y = np.concatenate([p[2] for p in parts])
    paths = np.concatenate([p[3] for p in parts])
    ids = unit_ids(n)
    cohort = np.where(exposed, 1.0, NEVER)
    if mode == PANEL:
        unit = np.repeat(ids, 2)
        time = np.tile([0, 1], n)
        z = np.column_stack([np.zeros(n), exposed]).astype(np.int64).ravel()
        table = ObservationTable(unit, time, Y.ravel(), D.ravel(), z, PANEL, spec.arity)
    else:
        t = np.concatenate([p[4] for p in parts])
        rows = np.arange(n)
        table = ObservationTable(ids, t, Y[rows, t], D[rows, t], (exposed & (t == 1)).astype(np.int64),
                                 RCS, spec.arity, cohort=cohort)
    audit = pd.DataFrame({
        "unit": ids, "group": exposed.astype(int),
        "d0": paths[:, 0], "d1_unexposed": paths[:, 1], "d1_exposed": paths[:, 2],
    })
    if spec.arity == 1:
        audit["type"] = [str(UnitType.from_path(p)) for p in paths]
    return table, audit


def _reseed(spec, seed):
    from dataclasses import replace
    return replace(spec, seed=int(seed))


# -- spec builders ----------------------------------------------------------------------

def _zero_means(J):
    return np.zeros((2, J + 1))


def effect10_spec(seed: int = 0) -> TwoByTwoSpec:
    """First stage 0.2, reduced form 2, complier effect 10.

    Both groups: 20% instrument compliers who are time never-takers, 30%
    always-takers, 50% never-takers. A common time trend of 1 and unit
    effects sit on top.
    """
    paths = {(0, 0, 1): 0.2, (1, 1, 1): 0.3, (0, 0, 0): 0.5}

    def m(base, eff):
        return np.array([[base, base + eff], [base + 1.0, base + 1.0 + eff]])

    means = {g: {(0, 0, 1): m(2.0, 10.0), (1, 1, 1): m(5.0, 3.0), (0, 0, 0): m(0.0, 1.0)}
             for g in (0, 1)}
    # exposed compliers get effect 10 in period 1; the unexposed copy never uses it
    return TwoByTwoSpec({0: dict(paths), 1: dict(paths)}, means, arity=1, p_exposed=0.5,
                        noise_sd=1.0, unit_sd=1.0, seed=seed)


def sharp_spec(beta: float = 2.0, seed: int = 0) -> TwoByTwoSpec:
    """Only (CM^Z, NT^T) units: D equals Z, canonical DID."""
    p = (0, 0, 1)
    m = np.array([[0.0, beta], [1.0, 1.0 + beta]])
    return TwoByTwoSpec({0: {p: 1.0}, 1: {p: 1.0}}, {0: {p: m.copy()}, 1: {p: m.copy()}},
                        noise_sd=1.0, seed=seed)


def _all_paths(J, monotone=True):
    out = []
    for d0 in range(J + 1):
        for d1u in range(J + 1):
            for d1e in range(J + 1):
                if not monotone or d1e >= d1u:
                    out.append((d0, d1u, d1e))
    return out


def random_spec(rng: np.random.Generator, arity: int = 1, parallel_treatment: bool = True,
                parallel_outcome: bool = True, support: int | None = None,
                min_first_stage: float = 0.05) -> TwoByTwoSpec:
    """Random monotone population, optionally with parallel trends imposed.

    Parallel treatment trends are imposed by mixing the exposed group's type
    distribution with a single extreme-trend path; parallel outcome trends by
    shifting every period-1 mean of the exposed group by one constant (which
    leaves all period-1 treatment effects unchanged).
    """
    J = arity
    pool = _all_paths(J)
    for _ in range(1000):
        shares = {}
        for g in (0, 1):
            k = len(pool) if support is None else min(support, len(pool))
            idx = rng.choice(len(pool), size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            shares[g] = {pool[i]: float(x) for i, x in zip(idx, w)}
        # make sure the exposed group has some instrument response
        comp = (0, 0, J) if J == 1 else tuple(int(x) for x in (rng.integers(0, J + 1), 0, J))
        lam = 0.15
        shares[1] = {p: (1 - lam) * q for p, q in shares[1].items()}
        shares[1][comp] = shares[1].get(comp, 0.0) + lam
        tau0 = _fsum(q * (p[1] - p[0]) for p, q in shares[0].items())
        tau1 = _fsum(q * (p[1] - p[0]) for p, q in shares[1].items())
        if parallel_treatment:
            if tau1 < tau0:
                ext, lam = (0, J, J), (tau0 - tau1) / (J - tau1)
            else:
                ext, lam = (J, 0, 0), (tau1 - tau0) / (tau1 + J)
            shares[1] = {p: (1 - lam) * q for p, q in shares[1].items()}
            shares[1][ext] = shares[1].get(ext, 0.0) + lam
        else:
            shares[1] = _perturb_trend(rng, shares[1], J)
        fs = _fsum(q * (p[2] - p[1]) for p, q in shares[1].items())
        if fs >= min_first_stage:
            break
    else:
        raise InfeasibleSpec("could not draw a spec with a usable first stage")
    tot = {g: _fsum(s.values()) for g, s in shares.items()}
    shares = {g: {p: q / tot[g] for p, q in s.items()} for g, s in shares.items()}
    means = {}
    for g in (0, 1):
        means[g] = {}
        for p in shares[g]:
            base = rng.normal(0, 3)
            trend = rng.normal(1, 2)
            steps = np.cumsum(rng.normal(1, 2, size=(2, J)), axis=1)
            m = np.zeros((2, J + 1))
            m[0] = base + np.concatenate([[0.0], steps[0]])
            m[1] = base + trend + np.concatenate([[0.0], steps[1]])
            means[g][p] = m
    spec = TwoByTwoSpec(shares, means, arity=J, parallel_treatment=parallel_treatment,
                        parallel_outcome=parallel_outcome)
    gap = time_gain(spec, 0).delta - time_gain(spec, 1).delta
    shift = gap if parallel_outcome else gap + rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    for p in means[1]:
        means[1][p][1, :] += shift
    return spec


def _perturb_trend(rng, shares, J):
    ext = (0, J, J) if rng.random() < 0.5 else (J, 0, 0)
    lam = rng.uniform(0.05, 0.2)
    out = {p: (1 - lam) * q for p, q in shares.items()}
    out[ext] = out.get(ext, 0.0) + lam
    return out


def random_fuzzy_spec(rng: np.random.Generator) -> TwoByTwoSpec:
    """Binary population restricted to the fuzzy-DID admissible types."""
    shares, means = {}, {}
    for g, pool in ((1, FUZZY_EXPOSED), (0, FUZZY_UNEXPOSED)):
        w = rng.dirichlet(np.ones(len(pool)))
        shares[g] = {t.path: float(x) for t, x in zip(pool, w)}
        means[g] = {t.path: rng.normal(0, 3, size=(2, 2)) + np.array([[0, 0], [1, 1]])
                    for t in pool}
    return TwoByTwoSpec(shares, means, parallel_treatment=False, parallel_outcome=False)
