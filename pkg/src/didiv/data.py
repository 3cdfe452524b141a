"""Observation tables, cohort maps and structural validation.

Data arrive in long format, one row per (unit, period) in panel mode or one
row per sampled unit in repeated cross-section (RCS) mode. Everything
downstream works off the immutable ``ObservationTable`` and the ``CohortMap``
derived from it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import (
    DuplicateObservation,
    EmptyUnexposedSet,
    MissingColumn,
    NoVariation,
    ParseError,
    UsageError,
)

NEVER = math.inf  # exposure date of never-exposed units
PANEL = "panel"
RCS = "rcs"

DEFAULT_COLUMNS = {
    "unit": "unit",
    "time": "time",
    "y": "y",
    "d": "d",
    "z": "z",
    "cohort": "cohort",
    "stratum": "stratum",
}


def cohort_label(e) -> str:
    """Text form of an exposure date (``inf`` for never exposed)."""
    return "inf" if e == NEVER else str(int(e))


def parse_cohort(s) -> float:
    if isinstance(s, (int, np.integer)):
        return int(s)
    if isinstance(s, float):
        return NEVER if math.isinf(s) else int(s)
    s = str(s).strip().lower()
    if s in ("inf", "never", "infinity", "∞"):
        return NEVER
    return int(float(s))


def _is_never(x) -> np.ndarray:
    return np.isinf(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PanelView:
    """Wide (unit x period) view of a panel table; missing cells are NaN."""

    units: np.ndarray
    periods: np.ndarray
    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    observed: np.ndarray
    exposure: np.ndarray  # E_i per unit, NEVER if z never switches on

    def period_index(self, t) -> int:
        i = int(np.searchsorted(self.periods, t))
        if i >= len(self.periods) or self.periods[i] != t:
            raise KeyError(f"period {t} not observed")
        return i


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Long-format records (unit, time, y, d, z) plus mode and treatment arity.

    Rows are sorted by (unit, time) on construction. Unit ids are kept as
    strings. ``cohort`` (RCS exposure group) and ``stratum`` (triple-difference
    group) are optional columns.
    """

    unit: np.ndarray
    time: np.ndarray
    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    mode: str = PANEL
    arity: int = 1
    cohort: np.ndarray | None = None
    stratum: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (PANEL, RCS):
            raise UsageError(f"mode must be {PANEL!r} or {RCS!r}, got {self.mode!r}")
        unit = np.asarray(self.unit).astype(str)
        n = len(unit)
        arrs = {
            "time": np.asarray(self.time, dtype=np.int64),
            "y": np.asarray(self.y, dtype=float),
            "d": np.asarray(self.d, dtype=np.int64),
            "z": np.asarray(self.z, dtype=np.int64),
        }
        if self.cohort is not None:
            arrs["cohort"] = np.asarray(self.cohort, dtype=float)
        if self.stratum is not None:
            arrs["stratum"] = np.asarray(self.stratum).astype(str)
        for k, a in arrs.items():
            if a.shape != (n,):
                raise UsageError(f"column {k} has shape {a.shape}, expected ({n},)")
        if int(self.arity) < 1:
            raise UsageError("treatment arity must be >= 1")
        order = np.lexsort((arrs["time"], unit))
        object.__setattr__(self, "unit", unit[order])
        for k, a in arrs.items():
            object.__setattr__(self, k, a[order])
        object.__setattr__(self, "arity", int(self.arity))
        u, t = self.unit, self.time
        if n > 1:
            same_unit = u[1:] == u[:-1]
            if self.mode == PANEL:
                dup = np.flatnonzero(same_unit & (t[1:] == t[:-1]))
                if dup.size:
                    i = dup[0]
                    raise DuplicateObservation(u[i], int(t[i]))
            else:
                dup = np.flatnonzero(same_unit)
                if dup.size:
                    raise DuplicateObservation(u[dup[0]], int(t[dup[0] + 1]))
        if self.mode == RCS and self.cohort is None:
            raise UsageError("RCS tables need a cohort column")

    # -- basic facts --------------------------------------------------------
    def __len__(self):
        return len(self.unit)

    @property
    def periods(self) -> np.ndarray:
        return np.unique(self.time)

    @property
    def n_sampling_units(self) -> int:
        """Number of i.i.d. draws: units in panel mode, rows in RCS mode."""
        return len(self.panel.units) if self.mode == PANEL else len(self)

    @cached_property
    def panel(self) -> PanelView:
        if self.mode != PANEL:
            raise UsageError("wide view requires a panel table")
        units, ucode = np.unique(self.unit, return_inverse=True)
        periods, pcode = np.unique(self.time, return_inverse=True)
        shape = (len(units), len(periods))
        y = np.full(shape, np.nan)
        d = np.full(shape, np.nan)
        z = np.full(shape, np.nan)
        obs = np.zeros(shape, dtype=bool)
        y[ucode, pcode] = self.y
        d[ucode, pcode] = self.d
        z[ucode, pcode] = self.z
        obs[ucode, pcode] = True
        first = np.where(obs & (z == 1), periods[None, :].astype(float), np.inf)
        return PanelView(units, periods, y, d, z, obs, first.min(axis=1))

    @cached_property
    def groups(self) -> np.ndarray:
        """Exposure date per sampling unit (per unit in panel, per row in RCS)."""
        if self.mode == PANEL:
            return self.panel.exposure
        return self.cohort

    def with_columns(self, **kw) -> "ObservationTable":
        base = dict(unit=self.unit, time=self.time, y=self.y, d=self.d, z=self.z,
                    mode=self.mode, arity=self.arity, cohort=self.cohort, stratum=self.stratum)
        base.update(kw)
        return ObservationTable(**base)

    def to_frame(self) -> pd.DataFrame:
        cols = {"unit": self.unit, "time": self.time, "y": self.y, "d": self.d, "z": self.z}
        if self.cohort is not None:
            cols["cohort"] = [cohort_label(c) for c in self.cohort]
        if self.stratum is not None:
            cols["stratum"] = self.stratum
        return pd.DataFrame(cols)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


# -- loading --------------------------------------------------------------------

def _numeric(col: pd.Series, name: str, integer: bool) -> np.ndarray:
    vals = pd.to_numeric(col, errors="coerce")
    bad = vals.isna().to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(i, name, col.iloc[i])
    # exact decimal parsing; pandas' fast converter can be off by an ulp
    out = np.array([float(v) for v in col], dtype=float) if col.dtype == object else \
        vals.to_numpy(dtype=float)
    if integer:
        frac = out != np.round(out)
        if frac.any():
            i = int(np.flatnonzero(frac)[0])
            raise ParseError(i, name, col.iloc[i], "is not an integer")
        return out.astype(np.int64)
    return out


def table_from_frame(df: pd.DataFrame, columns: dict | None = None, mode: str = PANEL,
                     arity: int | None = None) -> ObservationTable:
    """Build a table from a DataFrame using a canonical-name -> column mapping."""
    names = dict(DEFAULT_COLUMNS)
    names.update(columns or {})
    required = ["unit", "time", "y", "d", "z"] + (["cohort"] if mode == RCS else [])
    for key in required:
        if names[key] not in df.columns:
            raise MissingColumn(names[key], list(df.columns))
    unit = df[names["unit"]].astype(str).to_numpy()
    time = _numeric(df[names["time"]], names["time"], integer=True)
    y = _numeric(df[names["y"]], names["y"], integer=False)
    d = _numeric(df[names["d"]], names["d"], integer=True)
    z = _numeric(df[names["z"]], names["z"], integer=True)
    cohort = None
    if mode == RCS:
        raw = df[names["cohort"]]
        cohort = np.empty(len(df))
        for i, v in enumerate(raw):
            try:
                cohort[i] = parse_cohort(v)
            except (TypeError, ValueError):
                raise ParseError(i, names["cohort"], v) from None
    stratum = None
    if names["stratum"] in df.columns:
        stratum = df[names["stratum"]].astype(str).to_numpy()
    if arity is None:
        arity = max(1, int(d.max()) if len(d) else 1)
    return ObservationTable(unit, time, y, d, z, mode=mode, arity=arity,
                            cohort=cohort, stratum=stratum)


def load_csv(path, columns: dict | None = None, mode: str = PANEL,
             arity: int | None = None) -> ObservationTable:
    """Read a UTF-8 long CSV. ``ParseError.row`` is the 0-based data row."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    return table_from_frame(df, columns, mode, arity)


# -- cohorts --------------------------------------------------------------------

@dataclass(frozen=True)
class CohortMap:
    """Exposure dates, the cohort roster and the comparison set U."""

    exposure: dict
    cohorts: tuple
    unexposed: tuple
    rule: str
    periods: tuple

    @property
    def first_period(self) -> int:
        return self.periods[0]

    @property
    def last_period(self) -> int:
        return self.periods[-1]

    @property
    def horizon(self) -> int:
        """Last period at which every cohort in U is still unexposed."""
        finite = [u for u in self.unexposed if u != NEVER]
        if finite:
            return min(self.last_period, int(min(finite)) - 1)
        return self.last_period

    @property
    def estimated(self) -> tuple:
        """Cohorts that get their own cells."""
        return tuple(
            e for e in self.cohorts
            if e != NEVER and e not in self.unexposed
            and e > self.first_period and e <= self.horizon
        )

    def shares(self, table: ObservationTable) -> dict:
        g = table.groups
        n = len(g)
        return {e: float(np.sum(g == e)) / n for e in self.cohorts}

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "cohorts": [cohort_label(c) for c in self.cohorts],
            "unexposed": [cohort_label(c) for c in self.unexposed],
            "horizon": self.horizon,
        }


def parse_unexposed_rule(rule):
    """Normalize 'never' / 'last' / 'set:1957,inf' / iterable into a rule."""
    if isinstance(rule, str):
        r = rule.strip().lower()
        if r in ("never", "neverexposed", "never_exposed"):
            return "never"
        if r in ("last", "lastcohort", "last_cohort"):
            return "last"
        if r.startswith("set:"):
            return tuple(sorted(parse_cohort(x) for x in r[4:].split(",") if x.strip()))
        raise UsageError(f"unknown unexposed rule {rule!r}")
    return tuple(sorted(parse_cohort(x) for x in rule))


def derive_cohorts(table: ObservationTable, rule="never") -> CohortMap:
    """Compute E_i per unit and the comparison set U.

    ``rule`` is ``"never"`` (U = never exposed), ``"last"`` (U = the latest
    cohort, cells truncated before its exposure) or an explicit collection of
    exposure dates.
    """
    rule = parse_unexposed_rule(rule)
    if table.mode == PANEL:
        pv = table.panel
        keys, dates = pv.units, pv.exposure
    else:
        keys, dates = table.unit, table.cohort
    exposure = {str(k): (NEVER if math.isinf(e) else int(e)) for k, e in zip(keys, dates)}
    cohorts = tuple(sorted(set(exposure.values())))
    if len(cohorts) < 2:
        raise NoVariation(f"only one cohort present: {[cohort_label(c) for c in cohorts]}")
    if rule == "never":
        unexposed, name = (NEVER,), "never"
        if NEVER not in cohorts:
            raise EmptyUnexposedSet("no never-exposed units for rule 'never'")
    elif rule == "last":
        finite = [c for c in cohorts if c != NEVER]
        if not finite:
            raise EmptyUnexposedSet("no exposed cohort to serve as last cohort")
        unexposed, name = (max(finite),), "last"
    else:
        unexposed, name = tuple(c for c in cohorts if c in set(rule)), "explicit"
        if not unexposed:
            raise EmptyUnexposedSet(f"none of {list(rule)} present among cohorts")
    periods = tuple(int(t) for t in table.periods)
    return CohortMap(exposure, cohorts, unexposed, name, periods)


# -- validation -------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    rule: str
    unit: str
    time: int | None
    fatal: bool
    msg: str

    def to_dict(self) -> dict:
        return {"rule": self.rule, "unit": self.unit, "time": self.time,
                "fatal": self.fatal, "msg": self.msg}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def fatal(self) -> bool:
        return any(v.fatal for v in self.violations)

    def rules(self) -> set:
        return {v.rule for v in self.violations}

    def to_dict(self) -> dict:
        return {"violations": [v.to_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def validate(table: ObservationTable, cohorts: CohortMap | None = None,
             cells: Iterable | None = None) -> ValidationReport:
    """Structural checks; never raises, findings go in the report.

    ``cells`` (CellSpec-like objects with ``e``, ``l``, ``unexposed``, ``base``)
    restricts the panel-balance check to the requested cells; by default all
    cells implied by ``cohorts`` are checked.
    """
    out: list[Violation] = []
    J = table.arity

    bad_z = np.flatnonzero((table.z != 0) & (table.z != 1))
    for i in bad_z:
        out.append(Violation("InstrumentRange", table.unit[i], int(table.time[i]), True,
                             f"z={table.z[i]} not in {{0,1}}"))
    bad_d = np.flatnonzero((table.d < 0) | (table.d > J))
    for i in bad_d:
        out.append(Violation("TreatmentRange", table.unit[i], int(table.time[i]), True,
                             f"d={table.d[i]} outside 0..{J}"))

    if table.mode == PANEL:
        u, t, z = table.unit, table.time, table.z
        drop = np.flatnonzero((u[1:] == u[:-1]) & (z[1:] < z[:-1]))
        for i in drop:
            out.append(Violation("StaggeredViolation", u[i + 1], int(t[i + 1]), True,
                                 f"z falls from {z[i]} to {z[i + 1]}"))
    else:
        e = table.cohort
        expect = (table.time >= e).astype(np.int64)
        bad = np.flatnonzero(expect != table.z)
        for i in bad:
            out.append(Violation("InstrumentCohortMismatch", table.unit[i], int(table.time[i]),
                                 True, f"z={table.z[i]} but cohort {cohort_label(e[i])}"))

    if cohorts is not None:
        first = cohorts.first_period
        if cells is None:
            from .sts import build_cells
            try:
                cells = build_cells(cohorts)
            except Exception:
                cells = []
        cells = list(cells)
        requested = {c.e for c in cells}
        for e in requested:
            if e <= first:
                out.append(Violation("AlreadyExposedCohort", "", int(e), True,
                                     f"cohort {cohort_label(e)} is exposed in the first period "
                                     f"{first}; it has no pre-exposure base period"))
        if first in cohorts.cohorts and first not in requested:
            out.append(Violation("AlreadyExposedCohort", "", int(first), False,
                                 f"cohort {first} is already exposed and is excluded"))
        if table.mode == PANEL and not bad_z.size:
            out.extend(_balance_violations(table, cells))
        elif table.mode == RCS:
            out.extend(_rcs_cell_violations(table, cells))
    return ValidationReport(tuple(out))


def _balance_violations(table, cells) -> list:
    pv = table.panel
    out = []
    seen = set()
    periods = set(int(p) for p in pv.periods)
    for c in cells:
        if c.e <= pv.periods[0]:
            continue
        members = (pv.exposure == c.e) | np.isin(pv.exposure, list(c.unexposed))
        for t in (c.base, c.e + c.l):
            if t not in periods:
                out.append(Violation("PanelImbalance", "", int(t), True,
                                     f"period {t} needed by cell (e={c.e}, l={c.l}) is absent"))
                continue
            j = pv.period_index(t)
            for i in np.flatnonzero(members & ~pv.observed[:, j]):
                key = (pv.units[i], t)
                if key in seen:
                    continue
                seen.add(key)
                out.append(Violation("PanelImbalance", str(pv.units[i]), int(t), True,
                                     f"unit missing period {t} required by cell "
                                     f"(e={c.e}, l={c.l})"))
    return out


def _rcs_cell_violations(table, cells) -> list:
    out = []
    for c in cells:
        for grp, lab in ((np.asarray([c.e]), "exposed"), (np.asarray(c.unexposed), "unexposed")):
            for t in (c.base, c.e + c.l):
                if not np.any(np.isin(table.cohort, grp) & (table.time == t)):
                    out.append(Violation("EmptyCell", "", int(t), True,
                                         f"{lab} group of cell (e={c.e}, l={c.l}) has no rows "
                                         f"at period {t}"))
    return out
