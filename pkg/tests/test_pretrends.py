import numpy as np
import pandas as pd
import pytest

from didiv.data import NEVER, derive_cohorts, table_from_frame
from didiv.errors import NoPrePeriods
from didiv.oracle import staggered as sg
from didiv.pretrends import joint_wald, pretrend_test


def _deterministic_panel():
    rows = []
    for i in range(12):
        e = 5 if i < 6 else NEVER
        for t in range(1, 7):
            lvl = i * 0.25  # dyadic values keep every difference exact
            d = int((i % 3 == 0) or (e != NEVER and t >= e and i % 2 == 0))
            rows.append({"unit": f"u{i}", "time": t, "y": lvl + 0.5 * t + 2.0 * d, "d": d,
                         "z": int(t >= e)})
    return table_from_frame(pd.DataFrame(rows))


def test_exact_parallel_pretrends_give_zero():
    t = _deterministic_panel()
    res = pretrend_test(t, derive_cohorts(t), max_lead=4)
    assert [s.l for s in res.series] == [-4, -3, -2]
    for s in res.series:
        assert abs(s.alpha_hat) < 1e-12 and abs(s.pi_hat) < 1e-12
        assert s.z_alpha == 0 and s.z_pi == 0
    assert res.outcome.stat == 0 and res.outcome.p_value == 1.0


def test_invariant_to_period_constants():
    t, _ = sg.generate(sg.pretrend_spec(), 3000, seed=3)
    cm = derive_cohorts(t)
    a = pretrend_test(t, cm)
    shifted = t.with_columns(y=t.y + 5.0 * t.time ** 2)
    b = pretrend_test(shifted, cm)
    assert b.outcome.stat == pytest.approx(a.outcome.stat, rel=1e-9)
    assert b.treatment.stat == pytest.approx(a.treatment.stat, rel=1e-9)


def test_statistics_reproducible_from_series():
    t, _ = sg.generate(sg.pretrend_spec(slope=0.2), 3000, seed=1)
    res = pretrend_test(t, derive_cohorts(t))
    for row in res.to_dict()["series"]:
        assert row["alpha_z"] == pytest.approx(row["alpha"] / row["alpha_se"])
        assert 0 <= row["alpha_p"] <= 1 and 0 <= row["pi_p"] <= 1
    assert res.outcome.df == 3 and res.outcome.p_value < 0.05


def test_joint_wald_diagonal_case():
    rng = np.random.default_rng(0)
    n = 1000
    infl = np.column_stack([rng.normal(size=n), rng.normal(size=n) * 2])
    infl -= infl.mean(axis=0)
    V = infl.T @ infl / n**2
    est = np.array([0.05, -0.1])
    jt = joint_wald(est, infl)
    assert jt.stat == pytest.approx(float(est @ np.linalg.solve(V, est)), rel=1e-10)
    assert jt.df == 2


def test_no_pre_periods():
    t, _ = sg.generate(sg.demo_spec(), 500, seed=0)
    with pytest.raises(NoPrePeriods):
        pretrend_test(t, derive_cohorts(t), max_lead=1)


def test_csv_export(tmp_path):
    t, _ = sg.generate(sg.pretrend_spec(), 1000, seed=0)
    res = pretrend_test(t, derive_cohorts(t))
    res.to_csv(tmp_path / "p.csv")
    df = pd.read_csv(tmp_path / "p.csv")
    assert list(df["l"]) == [-4, -3, -2]
