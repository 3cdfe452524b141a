import io
import math

import numpy as np
import pandas as pd
import pytest

from didiv.data import (NEVER, ObservationTable, derive_cohorts, load_csv, parse_cohort,
                        table_from_frame, validate)
from didiv.errors import (DuplicateObservation, EmptyUnexposedSet, MissingColumn, NoVariation,
                          ParseError, UsageError)
from didiv.sts import CellSpec


def _csv(text):
    return io.StringIO(text)


def test_load_renamed_columns():
    df = pd.DataFrame({"id": ["a", "a", "b", "b"], "year": [1, 2, 1, 2], "wage": [1.0, 2, 3, 4],
                       "school": [0, 1, 0, 0], "law": [0, 1, 0, 0]})
    t = table_from_frame(df, {"unit": "id", "time": "year", "y": "wage", "d": "school", "z": "law"})
    assert len(t) == 4 and t.arity == 1
    assert list(t.panel.exposure) == [2, NEVER]


def test_missing_column_names_it():
    with pytest.raises(MissingColumn) as ei:
        load_csv(_csv("unit,time,y,d\n1,1,0,0\n"))
    assert ei.value.column == "z"


def test_parse_error_reports_row_and_column():
    with pytest.raises(ParseError) as ei:
        load_csv(_csv("unit,time,y,d,z\n1,1,0.5,0,0\n1,2,abc,0,1\n"))
    assert (ei.value.row, ei.value.column, ei.value.value) == (1, "y", "abc")


def test_fractional_treatment_rejected():
    with pytest.raises(ParseError):
        load_csv(_csv("unit,time,y,d,z\n1,1,0.5,0.5,0\n"))


def test_duplicate_panel_row():
    with pytest.raises(DuplicateObservation) as ei:
        load_csv(_csv("unit,time,y,d,z\n1,1,0,0,0\n1,1,1,0,0\n"))
    assert ei.value.unit == "1" and ei.value.time == 1


def test_rcs_needs_cohort_and_unique_units():
    with pytest.raises(MissingColumn):
        load_csv(_csv("unit,time,y,d,z\n1,1,0,0,0\n"), mode="rcs")
    with pytest.raises(DuplicateObservation):
        load_csv(_csv("unit,time,y,d,z,cohort\n1,1,0,0,0,inf\n1,2,0,0,0,inf\n"), mode="rcs")


def test_cohort_labels():
    assert parse_cohort("inf") == NEVER and parse_cohort("never") == NEVER
    assert parse_cohort("1957") == 1957 and parse_cohort(3.0) == 3


def test_arity_inferred():
    t = load_csv(_csv("unit,time,y,d,z\n1,1,0,0,0\n1,2,0,3,1\n2,1,0,0,0\n2,2,0,2,0\n"))
    assert t.arity == 3


def test_rows_sorted_on_construction():
    t = ObservationTable(["b", "a", "a"], [1, 2, 1], [3.0, 2.0, 1.0], [0, 0, 0], [0, 0, 0])
    assert list(t.unit) == ["a", "a", "b"] and list(t.y) == [1.0, 2.0, 3.0]


def test_derive_cohorts_rules(tiny_panel):
    cm = derive_cohorts(tiny_panel)
    assert cm.cohorts == (2, NEVER) and cm.unexposed == (NEVER,)
    assert cm.estimated == (2,) and cm.horizon == 3
    with pytest.raises(UsageError):
        derive_cohorts(tiny_panel, "sometimes")


def test_last_cohort_rule_truncates_horizon():
    df = pd.DataFrame({"unit": np.repeat(["a", "b"], 4), "time": [1, 2, 3, 4] * 2,
                       "y": 0.0, "d": 0, "z": [0, 1, 1, 1, 0, 0, 0, 1]})
    cm = derive_cohorts(table_from_frame(df), "last")
    assert cm.unexposed == (4,) and cm.horizon == 3 and cm.estimated == (2,)


def test_no_never_exposed():
    df = pd.DataFrame({"unit": ["a", "a", "b", "b"], "time": [1, 2] * 2, "y": 0.0, "d": 0,
                       "z": [0, 1, 0, 1]})
    t = table_from_frame(df)
    with pytest.raises(NoVariation):
        derive_cohorts(t)
    df.loc[3, "z"] = 0
    df.loc[1, "z"] = 1
    df2 = pd.DataFrame({"unit": np.repeat(["a", "b"], 3), "time": [1, 2, 3] * 2, "y": 0.0,
                        "d": 0, "z": [0, 1, 1, 0, 0, 1]})
    with pytest.raises(EmptyUnexposedSet):
        derive_cohorts(table_from_frame(df2))


def test_validate_flags_reversal_and_ranges():
    df = pd.DataFrame({"unit": ["a", "a", "b", "b"], "time": [1, 2] * 2, "y": 0.0,
                       "d": [0, 2, 0, 0], "z": [1, 0, 0, 2]})
    rep = validate(table_from_frame(df, arity=1))
    assert {"StaggeredViolation", "InstrumentRange", "TreatmentRange"} <= rep.rules()
    assert rep.fatal


def test_validate_panel_imbalance_only_for_needed_periods(tiny_panel):
    keep = ~((tiny_panel.unit == "i0") & (tiny_panel.time == 3))
    t = tiny_panel.with_columns(unit=tiny_panel.unit[keep], time=tiny_panel.time[keep],
                                y=tiny_panel.y[keep], d=tiny_panel.d[keep], z=tiny_panel.z[keep])
    cm = derive_cohorts(t)
    assert validate(t, cm, [CellSpec(2, 0, (NEVER,))]).ok
    rep = validate(t, cm, [CellSpec(2, 1, (NEVER,))])
    assert rep.rules() == {"PanelImbalance"}
    assert rep.violations[0].unit == "i0" and rep.violations[0].time == 3


def test_validate_already_exposed_cohort():
    df = pd.DataFrame({"unit": np.repeat(["a", "b", "c"], 2), "time": [1, 2] * 3, "y": 0.0,
                       "d": 0, "z": [1, 1, 0, 1, 0, 0]})
    t = table_from_frame(df)
    cm = derive_cohorts(t)
    rep = validate(t, cm)
    assert "AlreadyExposedCohort" in rep.rules() and not rep.fatal
    assert validate(t, cm, [CellSpec(1, 0, (NEVER,))]).fatal


def test_rcs_instrument_must_match_cohort():
    df = pd.DataFrame({"unit": ["a", "b", "c"], "time": [1, 2, 2], "y": 0.0, "d": 0,
                       "z": [0, 0, 0], "cohort": ["2", "2", "inf"]})
    rep = validate(table_from_frame(df, mode="rcs"))
    assert rep.rules() == {"InstrumentCohortMismatch"}
    assert rep.violations[0].unit == "b"


def test_csv_roundtrip_is_exact(tmp_path, tiny_panel):
    p = tmp_path / "x.csv"
    tiny_panel.to_csv(p)
    back = load_csv(p)
    assert np.array_equal(back.y, tiny_panel.y) and np.array_equal(back.unit, tiny_panel.unit)
    assert math.isinf(back.panel.exposure[-1])
