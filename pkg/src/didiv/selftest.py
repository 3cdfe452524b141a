"""Quick oracle-equivalence suite behind ``didiv selftest``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import KINDS, PARAMS, aggregate, cohort_shares, weights_sum
from .data import NEVER, derive_cohorts
from .errors import DidIvError
from .oracle import staggered, twobytwo
from .sts import build_cells, estimate_cell, estimate_cells, tsls_cell
from .twfeiv import decompose_twfeiv
from .wald import wald_did


@dataclass(frozen=True)
class SelfCheck:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _worst(name, values, tol):
    w = max(values) if values else 0.0
    return SelfCheck(name, bool(w <= tol), f"max deviation {w:.3g} over {len(values)} (tol {tol:g})")


def check_wald_latet(k=200, seed=0):
    rng = np.random.default_rng(seed)
    devs = []
    for _ in range(k):
        v = twobytwo.population_values(twobytwo.random_spec(rng))
        devs.append(abs(v.wald_did - v.latet))
    return _worst("binary Wald-DID equals LATET", devs, 1e-12)


def check_wald_acrt(k=100, seed=1):
    rng = np.random.default_rng(seed)
    devs = []
    for _ in range(k):
        v = twobytwo.population_values(twobytwo.random_spec(rng, arity=3))
        devs.append(abs(v.wald_did - v.acrt))
    return _worst("ordered Wald-DID equals ACRT", devs, 1e-12)


def check_time_gain(k=200, seed=2):
    rng = np.random.default_rng(seed)
    devs = []
    for _ in range(k):
        spec = twobytwo.random_spec(rng, parallel_outcome=False, parallel_treatment=False)
        for tg in twobytwo.check_time_gain_decomposition(spec).values():
            devs += [abs(tg.residual), abs(tg.weight_sum - 1)]
    return _worst("time-gain decomposition", devs, 1e-12)


def check_slatet(k=200, seed=3):
    rng = np.random.default_rng(seed)
    devs = [abs(twobytwo.check_slatet_decomposition(twobytwo.random_fuzzy_spec(rng)).residual)
            for _ in range(k)]
    return _worst("switcher-effect decomposition", devs, 1e-12)


def check_staggered_population():
    devs = []
    for spec in (staggered.demo_spec(), staggered.three_cohort_spec()):
        vals = staggered.population_values(spec)
        for (e, t), c in vals.clatt.items():
            w = staggered.population_wald(spec, e, t - e, [NEVER])
            devs.append(abs(w["theta"] - c))
    spec = staggered.triple_spec()
    for (e, t), c in staggered.population_values(spec).clatt_a.items():
        devs.append(abs(staggered.population_wald(spec, e, t - e, [NEVER], stratum="A")["theta"] - c))
    return _worst("staggered cell Wald-DID equals CLATT", devs, 1e-12)


def check_effect10(seed=0):
    t, _ = twobytwo.generate(twobytwo.effect10_spec(), 100_000, seed=seed)
    th = wald_did(t).theta
    return SelfCheck("complier-effect-10 design at n=100000", 9.5 <= th <= 10.5, f"estimate {th:.4f}")


def check_tsls(k=20, seed=4):
    rng = np.random.default_rng(seed)
    devs = []
    for i in range(k):
        spec = staggered.random_staggered_spec(rng, never=True)
        mode = "panel" if i % 2 == 0 else "rcs"
        t, _ = staggered.generate(spec, 400, mode, seed=i)
        try:
            cm = derive_cohorts(t)
            cells = build_cells(cm)
        except DidIvError:
            continue
        for c in cells:
            try:
                est = estimate_cell(t, c).clatt_hat
            except DidIvError:
                continue
            devs.append(abs(est - tsls_cell(t, c)) / max(1.0, abs(est)))
    return _worst("mean-difference formula equals 2SLS", devs, 1e-10)


def check_twfeiv_identity(k=10, seed=5):
    rng = np.random.default_rng(seed)
    devs = []
    for i in range(k):
        spec = staggered.random_staggered_spec(rng, n_cohorts=2, never=bool(i % 2))
        t, _ = staggered.generate(spec, 600, "panel" if i % 3 else "rcs", seed=i)
        try:
            r = decompose_twfeiv(t)
        except DidIvError:
            continue
        devs += [abs(r.identity_residual), abs(r.weight_sum - 1)]
    return _worst("TWFEIV decomposition identity", devs, 1e-8)


def check_weights(seed=6):
    spec = staggered.three_cohort_spec()
    t, _ = staggered.generate(spec, 4000, seed=seed)
    cm = derive_cohorts(t)
    cells = estimate_cells(t, cm)
    sh = cohort_shares(t, cm)
    devs = []
    defaults = {"l": 0, "l2": 1, "e": 2, "t": 4}
    for kind in KINDS:
        a = aggregate(kind, cells, sh, {p: defaults[p] for p in PARAMS[kind]})
        devs.append(abs(weights_sum(a.weights) - 1))
    return _worst("summary weights sum to one", devs, 1e-10)


def check_faithful(seed=7):
    bad = 0
    t, audit = staggered.generate(staggered.three_cohort_spec(), 2000, seed=seed)
    D = t.panel.d
    for j, p in enumerate(t.panel.periods):
        treated = audit[f"type_{p}"].isin(["AT", "CM"]).to_numpy()
        bad += int(np.sum(treated != (D[:, j] == 1)))
    t, audit = twobytwo.generate(twobytwo.effect10_spec(), 2000, seed=seed)
    g = audit["group"].to_numpy()
    D = t.panel.d
    bad += int(np.sum(D[:, 0] != audit["d0"].to_numpy()))
    d1 = np.where(g == 1, audit["d1_exposed"], audit["d1_unexposed"])
    bad += int(np.sum(D[:, 1] != d1))
    return SelfCheck("hidden types reproduce observed treatment", bad == 0, f"{bad} contradictions")


CHECKS = (check_wald_latet, check_wald_acrt, check_time_gain, check_slatet,
          check_staggered_population, check_effect10, check_tsls, check_twfeiv_identity,
          check_weights, check_faithful)


def run_selftest() -> list:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn())
        except DidIvError as exc:
            out.append(SelfCheck(fn.__name__, False, f"{type(exc).__name__}: {exc}"))
    return out
