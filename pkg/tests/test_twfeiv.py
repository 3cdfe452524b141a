import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from didiv.data import NEVER, derive_cohorts, table_from_frame
from didiv.errors import DidIvError, NoInstrumentVariation, UnsupportedLayout
from didiv.oracle import staggered as sg
from didiv.oracle import twobytwo as tb
from didiv.sts import CellSpec, estimate_cell
from didiv.twfeiv import decompose_twfeiv, demean_two_way, estimate_twfeiv
from didiv.wald import wald_did


def test_sharp_two_by_two_homogeneous():
    t, _ = tb.generate(tb.sharp_spec(beta=2.5), 3000, seed=1)
    r = estimate_twfeiv(t)
    # with two periods the TWFEIV coefficient is the Wald-DID exactly
    assert r.beta_iv_hat == pytest.approx(wald_did(t).theta, abs=1e-10)


def test_noise_free_sharp_design_returns_beta():
    spec = tb.sharp_spec(beta=2.5)
    spec.noise_sd = 0.0
    t, _ = tb.generate(spec, 200, seed=0)
    assert estimate_twfeiv(t).beta_iv_hat == pytest.approx(2.5, abs=1e-10)


def test_ratio_of_demeaned_coefficients():
    t, _ = sg.generate(sg.demo_spec(), 1000, seed=2)
    r = estimate_twfeiv(t)
    assert r.beta_iv_hat == pytest.approx(r.rf_hat / r.pi_hat, rel=1e-10)


def test_alternating_projection_matches_lstsq():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 5, 300)
    b = rng.integers(0, 4, 300)
    x = rng.normal(size=300)
    r = demean_two_way(x, a, b)
    X = np.column_stack([np.eye(5)[a], np.eye(4)[b]])
    coef, *_ = np.linalg.lstsq(X, x, rcond=None)
    assert np.allclose(r, x - X @ coef, atol=1e-10)


def test_balanced_closed_form_matches_iteration():
    t, _ = sg.generate(sg.demo_spec(), 400, seed=3)
    a = np.unique(t.unit, return_inverse=True)[1]
    b = np.unique(t.time, return_inverse=True)[1]
    assert np.allclose(demean_two_way(t.y, a, b, balanced=True), demean_two_way(t.y, a, b),
                       atol=1e-10)


@given(st.integers(0, 100_000), st.sampled_from(["panel", "rcs"]))
def test_identity_on_fuzzed_two_cohort_data(seed, mode):
    rng = np.random.default_rng(seed)
    spec = sg.random_staggered_spec(rng, n_cohorts=2, never=bool(seed % 2))
    t, _ = sg.generate(spec, 500, mode, seed=seed)
    try:
        rep = decompose_twfeiv(t)
    except DidIvError:
        return
    assert abs(rep.identity_residual) <= 1e-8
    assert abs(rep.weight_sum - 1) <= 1e-8


def test_negative_weights_on_late_comparisons():
    spec = sg.late_comparison_spec()
    t, _ = sg.generate(spec, 20_000, seed=4)
    rep = decompose_twfeiv(t)
    biased = [c for c in rep.components if c.kind == "biased"]
    assert len(biased) == 4
    assert all(c.weight < 0 and c.wdid_hat > 0 for c in biased)
    truth = sg.population_values(spec).clatt
    assert rep.beta_iv_hat < min(truth.values())


def test_stable_effects_clean_components():
    spec = sg.late_comparison_spec(cohort_shares={3: 0.5, NEVER: 0.5}, effect_slope=0.0,
                                   effect_base=2.0)
    t, _ = sg.generate(spec, 20_000, seed=5)
    rep = decompose_twfeiv(t)
    post = [c for c in rep.components if c.t >= 3]
    assert all(c.kind == "clean" for c in post)
    for c in post:
        # same contrast as the cell estimator, which carries an SE
        se = estimate_cell(t, CellSpec(3, c.t - 3, (NEVER,))).se
        assert abs(c.wdid_hat - 2.0) < 3 * se


def test_without_late_periods_matches_caet_weighted_cells():
    spec = sg.late_comparison_spec(cohort_shares={2: 0.4, NEVER: 0.6}, periods=6)
    t, _ = sg.generate(spec, 3000, seed=6)
    rep = decompose_twfeiv(t)
    cells = [estimate_cell(t, CellSpec(2, l, (NEVER,))) for l in range(5)]
    w = np.array([c.pi_hat for c in cells])
    avg = float(np.sum(w * np.array([c.clatt_hat for c in cells])) / w.sum())
    assert rep.beta_iv_hat == pytest.approx(avg, abs=1e-10)


def test_multi_cohort_rejected():
    t, _ = sg.generate(sg.three_cohort_spec(), 500, seed=0)
    with pytest.raises(UnsupportedLayout):
        decompose_twfeiv(t)


def test_unbalanced_panel_rejected_for_decomposition():
    t, _ = sg.generate(sg.late_comparison_spec(), 300, seed=0)
    keep = np.arange(len(t)) != 5
    t2 = t.with_columns(unit=t.unit[keep], time=t.time[keep], y=t.y[keep], d=t.d[keep],
                        z=t.z[keep])
    with pytest.raises(UnsupportedLayout):
        decompose_twfeiv(t2)
    estimate_twfeiv(t2)  # the regression itself still runs


def test_no_instrument_variation():
    df = pd.DataFrame({"unit": np.repeat(["a", "b"], 2), "time": [1, 2] * 2, "y": [0.0, 1, 2, 3],
                       "d": [0, 1, 0, 1], "z": [0, 0, 0, 0]})
    with pytest.raises(NoInstrumentVariation):
        estimate_twfeiv(table_from_frame(df))


def test_csv_export(tmp_path):
    t, _ = sg.generate(sg.late_comparison_spec(), 500, seed=0)
    rep = decompose_twfeiv(t, derive_cohorts(t, "last"))
    rep.to_csv(tmp_path / "d.csv")
    df = pd.read_csv(tmp_path / "d.csv")
    assert list(df["kind"].unique()) == ["pre", "clean", "biased"]
    assert df["contribution"].sum() == pytest.approx(rep.beta_iv_hat, abs=1e-10)


def test_bootstrap_se_deterministic():
    t, _ = sg.generate(sg.late_comparison_spec(), 400, seed=1)
    a = estimate_twfeiv(t, boot_reps=20, seed=3)
    b = estimate_twfeiv(t, boot_reps=20, seed=3)
    assert a.se == b.se and a.se > 0
