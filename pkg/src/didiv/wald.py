"""Two-group, two-period Wald-DID: reduced-form DID over first-stage DID.

Group selectors are exposure dates (a single date or a collection); use
``NEVER`` for the never-exposed group. The layout helpers here are shared with
the staggered estimator so a one-cell staggered run reproduces these numbers
exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import NEVER, PANEL, RCS, ObservationTable, cohort_label
from .errors import EmptyCell, EmptyGroup, UsageError
from .influence import TAU, RatioParts, fmean, wald_ratio


def as_labels(sel) -> list:
    if isinstance(sel, (int, float, np.integer, np.floating)):
        return [sel]
    return list(sel)


@dataclass(frozen=True)
class Layout:
    """Arrays and signed cells for one contrast, over all N sampling draws."""

    y: np.ndarray
    d: np.ndarray
    cells: list  # [(mask, sign)]
    names: list  # label per cell
    n_total: int
    dropped: int = 0


def _unit_strata(table: ObservationTable) -> np.ndarray:
    if table.stratum is None:
        raise UsageError("table has no stratum column")
    _, first = np.unique(table.unit, return_index=True)
    return table.stratum[first]


def panel_layout(table: ObservationTable, exposed, unexposed, pre: int, post: int,
                 stratum=None, where: str = "") -> Layout:
    """Long differences X_post - X_pre per unit with group (and stratum) cells."""
    if table.mode != PANEL:
        raise UsageError("panel layout requires a panel table")
    pv = table.panel
    try:
        i0, i1 = pv.period_index(pre), pv.period_index(post)
    except KeyError as exc:
        raise EmptyCell("all", exc.args[0], where) from None
    both = pv.observed[:, i0] & pv.observed[:, i1]
    dy = pv.y[:, i1] - pv.y[:, i0]
    dd = pv.d[:, i1] - pv.d[:, i0]
    in_e = np.isin(pv.exposure, as_labels(exposed))
    in_u = np.isin(pv.exposure, as_labels(unexposed))
    dropped = int(np.sum((in_e | in_u) & ~both))
    in_e &= both
    in_u &= both
    groups = [("exposed", in_e, 1.0), ("unexposed", in_u, -1.0)]
    if stratum is None:
        for name, m, _ in groups:
            if not m.any():
                raise EmptyGroup(name, where)
        cells = [(in_e, 1.0), (in_u, -1.0)]
        names = ["exposed", "unexposed"]
    else:
        st = _unit_strata(table)
        is_a = st == str(stratum)
        cells, names = [], []
        for name, m, s in groups:
            for lab, sm, s2 in (("A", is_a, 1.0), ("B", ~is_a, -1.0)):
                mm = m & sm
                if not mm.any():
                    raise EmptyCell(f"{name}/{lab}", post, where)
                cells.append((mm, s * s2))
                names.append(f"{name}/{lab}")
    return Layout(dy, dd, cells, names, len(pv.units), dropped)


def rcs_layout(table: ObservationTable, exposed, unexposed, pre: int, post: int,
               stratum=None, where: str = "") -> Layout:
    """Four (or eight, with strata) group x period cells of row-level data."""
    if table.mode != RCS:
        raise UsageError("RCS layout requires an RCS table")
    g = table.cohort
    in_e = np.isin(g, as_labels(exposed))
    in_u = np.isin(g, as_labels(unexposed))
    at = {post: table.time == post, pre: table.time == pre}
    parts = []
    for gname, gm, gs in (("exposed", in_e, 1.0), ("unexposed", in_u, -1.0)):
        for t, ts in ((post, 1.0), (pre, -1.0)):
            parts.append((f"{gname}@{t}", gm & at[t], gs * ts, t))
    if stratum is not None:
        if table.stratum is None:
            raise UsageError("table has no stratum column")
        is_a = table.stratum == str(stratum)
        parts = [(f"{n}/{lab}", m & sm, s * s2, t)
                 for n, m, s, t in parts
                 for lab, sm, s2 in (("A", is_a, 1.0), ("B", ~is_a, -1.0))]
    for name, m, _, t in parts:
        if not m.any():
            raise EmptyCell(name.split("@")[0], t, where)
    cells = [(m, s) for _, m, s, _ in parts]
    names = [n for n, _, _, _ in parts]
    return Layout(table.y, table.d.astype(float), cells, names, len(table))


@dataclass(frozen=True)
class WaldDidResult:
    alpha: float
    pi: float
    theta: float
    cells: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "pi": self.pi, "theta": self.theta, "cells": self.cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _panel_cell_means(table, lay: Layout, pre, post) -> dict:
    pv = table.panel
    i0, i1 = pv.period_index(pre), pv.period_index(post)
    out = {}
    for (m, _), name in zip(lay.cells, lay.names):
        for t, j in ((pre, i0), (post, i1)):
            out[f"{name}@{t}"] = {"y": fmean(pv.y[m, j]), "d": fmean(pv.d[m, j]), "n": int(m.sum())}
    out["dropped_units"] = lay.dropped
    return out


def _rcs_cell_means(parts: RatioParts, lay: Layout) -> dict:
    return {name: {"y": cm.y, "d": cm.d, "n": cm.n} for name, cm in zip(lay.names, parts.means)}


def wald_did_panel(table, exposed=1, unexposed=NEVER, pre=0, post=1, tau=TAU) -> WaldDidResult:
    """alpha = mean(dY | exposed) - mean(dY | unexposed); pi with D; theta = alpha/pi."""
    lay = panel_layout(table, exposed, unexposed, pre, post)
    p = wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, f"pre={pre}, post={post}")
    return WaldDidResult(p.alpha, p.pi, p.theta, _panel_cell_means(table, lay, pre, post))


def wald_did_rcs(table, exposed=1, unexposed=NEVER, pre=0, post=1, tau=TAU) -> WaldDidResult:
    lay = rcs_layout(table, exposed, unexposed, pre, post)
    p = wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, f"pre={pre}, post={post}")
    return WaldDidResult(p.alpha, p.pi, p.theta, _rcs_cell_means(p, lay))


def wald_did(table, exposed=1, unexposed=NEVER, pre=0, post=1, tau=TAU) -> WaldDidResult:
    fn = wald_did_panel if table.mode == PANEL else wald_did_rcs
    return fn(table, exposed, unexposed, pre, post, tau)


def wald_tdid(table, exposed=1, unexposed=NEVER, pre=0, post=1, stratum="A",
              tau=TAU) -> WaldDidResult:
    """Triple difference: DID in stratum A minus DID in the remaining stratum."""
    if table.mode == PANEL:
        lay = panel_layout(table, exposed, unexposed, pre, post, stratum=stratum)
        p = wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, f"pre={pre}, post={post}")
        cells = _panel_cell_means(table, lay, pre, post)
    else:
        lay = rcs_layout(table, exposed, unexposed, pre, post, stratum=stratum)
        p = wald_ratio(lay.y, lay.d, lay.cells, lay.n_total, tau, f"pre={pre}, post={post}")
        cells = _rcs_cell_means(p, lay)
    return WaldDidResult(p.alpha, p.pi, p.theta, cells)


def labels_json(sel) -> list:
    return [cohort_label(x) for x in as_labels(sel)]
