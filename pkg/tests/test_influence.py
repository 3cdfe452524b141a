import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from didiv.errors import WeakDenominator
from didiv.influence import Linear, contrast, fmean, mean_of, ratio_infl, share_of, wald_ratio

floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(floats, st.floats(0.5, 20)), min_size=3, max_size=40))
def test_ratio_rule_matches_closed_form(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    A, B = fmean(a), fmean(b)
    closed = (a - A * b / B) / B
    composed = Linear(A, a - A) / Linear(B, b - B)
    assert np.allclose(composed.infl, closed, atol=1e-12, rtol=0)
    assert np.allclose(ratio_infl(a, b), closed, atol=1e-12, rtol=0)


def test_linear_matches_numerical_derivative():
    rng = np.random.default_rng(0)
    n = 50
    x, y = rng.normal(2, 1, n), rng.normal(-1, 1, n)

    def stat(w):
        mx = np.sum(w * x) / np.sum(w)
        my = np.sum(w * y) / np.sum(w)
        return (mx * my + 3) / (mx - my)

    lx = Linear(fmean(x), x - fmean(x))
    ly = Linear(fmean(y), y - fmean(y))
    lin = (lx * ly + 3) / (lx - ly)
    # Gateaux derivative towards each draw
    eps = 1e-6
    w0 = np.ones(n) / n
    num = np.array([(stat(w0 + eps * (np.eye(n)[i] - w0)) - stat(w0)) / eps for i in range(n)])
    assert np.allclose(lin.infl, num, atol=1e-4)
    assert lin.value == pytest.approx(stat(w0), abs=1e-12)


def test_mean_and_share_influence_centered():
    rng = np.random.default_rng(1)
    x = rng.normal(size=100)
    m = rng.random(100) < 0.3
    assert abs(fmean(mean_of(x, m, 100).infl)) < 1e-12
    assert abs(fmean(share_of(m).infl)) < 1e-12


def test_contrast_value():
    x = np.array([1.0, 2.0, 3.0, 10.0])
    cells = [(np.array([1, 1, 0, 0], bool), 1.0), (np.array([0, 0, 1, 1], bool), -1.0)]
    val, infl = contrast(x, cells, 4)
    assert val == -5.0
    assert np.allclose(infl, [-1.0, 1.0, 7.0, -7.0])


def test_wald_ratio_weak_denominator():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    d = np.array([1.0, 1.0, 1.0, 1.0])
    cells = [(np.array([1, 1, 0, 0], bool), 1.0), (np.array([0, 0, 1, 1], bool), -1.0)]
    with pytest.raises(WeakDenominator) as ei:
        wald_ratio(y, d, cells, 4, where="cell x")
    assert "cell x" in str(ei.value)


def test_se_of_sample_mean():
    x = np.arange(10.0)
    lx = Linear(fmean(x), x - fmean(x))
    assert lx.se == pytest.approx(np.std(x) / np.sqrt(10), rel=1e-12)
