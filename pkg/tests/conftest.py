import os

import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from didiv.data import NEVER, table_from_frame

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def rec(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return rec


def frame_from_cells(cells, n_per=3, periods=(1, 2, 3), seed=0):
    """Tiny panel: cells maps cohort -> (y-path, d-path) templates."""
    rng = np.random.default_rng(seed)
    rows = []
    k = 0
    for e, (ys, ds) in cells.items():
        for _ in range(n_per):
            shift = rng.normal()
            for j, t in enumerate(periods):
                rows.append({"unit": f"i{k}", "time": t, "y": ys[j] + shift, "d": ds[j],
                             "z": int(e != NEVER and t >= e)})
            k += 1
    return pd.DataFrame(rows)


@pytest.fixture
def tiny_panel():
    df = frame_from_cells({2: ([0.0, 1.0, 2.0], [0, 1, 1]), NEVER: ([0.0, 0.5, 1.0], [0, 0, 0])})
    return table_from_frame(df)
