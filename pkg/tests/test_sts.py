import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from didiv.data import NEVER, derive_cohorts
from didiv.errors import DidIvError, NoEstimableCells, UsageError
from didiv.influence import fmean
from didiv.oracle import staggered as sg
from didiv.sts import (CellSpec, build_cells, cells_json, estimate_cell, estimate_cells,
                       se_bootstrap, tsls_cell)

U = (NEVER,)


@pytest.fixture(scope="module")
def demo():
    t, _ = sg.generate(sg.demo_spec(), 6000, seed=5)
    return t, derive_cohorts(t)


def test_cells_built_in_order(demo):
    t, cm = demo
    cells = build_cells(cm)
    assert [(c.e, c.l) for c in cells] == [(2, 0), (2, 1), (2, 2), (3, 0), (3, 1)]
    assert all(c.base == c.e - 1 for c in cells)


def test_cell_cannot_compare_with_itself():
    with pytest.raises(UsageError):
        CellSpec(3, 0, (3, NEVER))


def test_no_cells_when_everything_is_comparison():
    t, _ = sg.generate(sg.demo_spec(), 500, seed=1)
    with pytest.raises(NoEstimableCells):
        build_cells(derive_cohorts(t, "set:2,3,inf"))


def test_estimates_near_oracle(demo):
    t, cm = demo
    truth = sg.population_values(sg.demo_spec()).clatt
    for c in estimate_cells(t, cm):
        assert abs(c.clatt_hat - truth[(c.e, c.t)]) < 4 * c.se
        assert c.ci95[0] < c.clatt_hat < c.ci95[1]


@given(st.integers(0, 10_000), st.booleans())
def test_formula_equals_2sls(seed, rcs):
    rng = np.random.default_rng(seed)
    spec = sg.random_staggered_spec(rng, never=True)
    t, _ = sg.generate(spec, 300, "rcs" if rcs else "panel", seed=seed)
    try:
        cells = build_cells(derive_cohorts(t))
    except DidIvError:
        return
    for c in cells:
        try:
            est = estimate_cell(t, c).clatt_hat
        except DidIvError:
            continue
        assert abs(est - tsls_cell(t, c)) <= 1e-10 * max(1.0, abs(est))


def test_influence_centered(demo):
    t, cm = demo
    for c in estimate_cells(t, cm):
        assert abs(fmean(c.influence)) < 1e-10
        assert abs(fmean(c.pi_influence)) < 1e-10


def test_triple_cell_near_stratum_truth():
    spec = sg.triple_spec()
    t, _ = sg.generate(spec, 20_000, seed=8)
    for l in (0, 1):
        c = estimate_cell(t, CellSpec(2, l, U), stratum="A")
        assert abs(c.clatt_hat - sg.clatt(spec, 2, 2 + l, "A")) < 3 * c.se


def test_triple_cell_rcs():
    spec = sg.triple_spec()
    t, _ = sg.generate(spec, 60_000, mode="rcs", seed=8)
    c = estimate_cell(t, CellSpec(2, 0, U), stratum="A")
    assert abs(c.clatt_hat - sg.clatt(spec, 2, 2, "A")) < 3 * c.se


def test_weak_first_stage_is_flagged_not_raised():
    t, _ = sg.generate(sg.demo_spec(), 2000, seed=0)
    g = t.panel.exposure[np.unique(t.unit, return_inverse=True)[1]]
    # cohort 3 and the never-exposed share a constant treatment: its first stage is exactly 0
    t = t.with_columns(d=np.where(g == 2, t.d, 0))
    cells = {(c.e, c.l): c for c in estimate_cells(t, derive_cohorts(t))}
    assert cells[(3, 0)].flag == "weak_denominator" and cells[(3, 1)].flag == "weak_denominator"
    assert cells[(2, 0)].flag == "" and np.isfinite(cells[(2, 0)].clatt_hat)


def test_zero_first_stage_flag():
    t, _ = sg.generate(sg.demo_spec(), 1500, seed=2)
    t = t.with_columns(d=np.zeros(len(t), dtype=int))
    cells = estimate_cells(t, derive_cohorts(t))
    assert all(c.flag == "weak_denominator" for c in cells)
    assert cells_json(cells)[0]["clatt"] is None
    json.dumps(cells_json(cells))


def test_dropped_units_counted(demo):
    t, _ = demo
    gone = t.unit[0]
    keep = ~((t.unit == gone) & (t.time == 2))
    t2 = t.with_columns(unit=t.unit[keep], time=t.time[keep], y=t.y[keep], d=t.d[keep],
                        z=t.z[keep])
    c = estimate_cell(t2, CellSpec(2, 0, U))
    assert c.dropped == 1


def test_bootstrap_deterministic_and_guarded(demo):
    t, _ = demo
    cell = CellSpec(2, 1, U)
    assert se_bootstrap(t, cell, 120, seed=4) == se_bootstrap(t, cell, 120, seed=4)
    with pytest.raises(UsageError):
        se_bootstrap(t, cell, 0)


def test_bootstrap_close_to_if(demo):
    t, _ = demo
    cell = CellSpec(2, 1, U)
    c = estimate_cell(t, cell)
    assert abs(se_bootstrap(t, cell, 400, seed=1) / c.se - 1) < 0.15


def test_json_schema(demo):
    t, cm = demo
    d = cells_json(estimate_cells(t, cm))[0]
    assert set(d) == {"e", "l", "alpha", "pi", "clatt", "se", "ci", "n", "flag"}
