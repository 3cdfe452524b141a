"""Compensated means, signed cell contrasts and influence-function arithmetic.

Convention: an estimator carries per-draw influence values ``infl`` of length
N (the number of i.i.d. sampling units) such that

    estimate - target ~= mean(infl),     se = sqrt(sum(infl**2)) / N.

Draws outside a cell simply carry zeros.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import WeakDenominator

TAU = 1e-10


def fsum(x) -> float:
    return math.fsum(np.asarray(x, dtype=float).ravel())


def fmean(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x) / len(x)


def se_from_infl(infl) -> float:
    infl = np.asarray(infl, dtype=float)
    return math.sqrt(math.fsum(infl * infl)) / len(infl)


class Linear:
    """A scalar estimate together with its influence values.

    Arithmetic propagates influence values by the delta method, so weights or
    ratios built from ``Linear`` pieces carry their own influence function.
    Division applies the ratio rule IF(A/B) = (IF(A) - (A/B) IF(B)) / B.
    """

    __slots__ = ("value", "infl")

    def __init__(self, value, infl):
        self.value = float(value)
        self.infl = np.asarray(infl, dtype=float)

    @staticmethod
    def const(c, n):
        return Linear(c, np.zeros(n))

    @property
    def se(self) -> float:
        return se_from_infl(self.infl)

    def _lift(self, other):
        if isinstance(other, Linear):
            return other
        return Linear(other, np.zeros_like(self.infl))

    def __add__(self, other):
        o = self._lift(other)
        return Linear(self.value + o.value, self.infl + o.infl)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Linear(self.value - o.value, self.infl - o.infl)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Linear(-self.value, -self.infl)

    def __mul__(self, other):
        o = self._lift(other)
        return Linear(self.value * o.value, o.value * self.infl + self.value * o.infl)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        r = self.value / o.value
        return Linear(r, (self.infl - r * o.infl) / o.value)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"Linear({self.value!r}, se={self.se:.4g})"


def mean_of(x, mask, n_total: int) -> Linear:
    """Conditional mean E[x | cell] with IF 1{cell}(x - mean) / P(cell)."""
    mask = np.asarray(mask, dtype=bool)
    xs = np.asarray(x, dtype=float)[mask]
    m = fmean(xs)
    infl = np.zeros(n_total)
    infl[mask] = (xs - m) * (n_total / mask.sum())
    return Linear(m, infl)


def share_of(mask) -> Linear:
    """Sample share P(cell) with IF 1{cell} - share."""
    mask = np.asarray(mask, dtype=float)
    p = fmean(mask)
    return Linear(p, mask - p)


def ratio_infl(a, b):
    """Fact-1 influence values of mean(a)/mean(b) from raw draws a_i, b_i."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    A, B = fmean(a), fmean(b)
    return ((a - A) - (A / B) * (b - B)) / B


@dataclass(frozen=True)
class CellMean:
    y: float
    d: float
    n: int


@dataclass(frozen=True)
class RatioParts:
    alpha: float
    pi: float
    theta: float
    infl: np.ndarray  # ratio IF on all N draws
    means: tuple  # CellMean per contrast cell, in the order given
    pi_infl: np.ndarray  # IF of the first-stage contrast alone


def contrast(x, cells, n_total: int):
    """Signed sum of cell means of x with its influence values.

    ``cells`` is a sequence of (mask, sign) pairs over the N draws.
    """
    infl = np.zeros(n_total)
    terms = []
    for mask, sign in cells:
        xs = x[mask]
        m = fmean(xs)
        terms.append(m)
        infl[mask] += sign * (xs - m) * (n_total / len(xs))
    val = math.fsum(s * m for (_, s), m in zip(cells, terms))
    return val, infl


def wald_ratio(y, d, cells, n_total: int, tau: float = TAU, where: str = "") -> RatioParts:
    """Ratio of signed contrasts of y and d, with the plug-in ratio IF.

    alpha = sum_k s_k mean(y | cell_k),  pi likewise with d,  theta = alpha/pi.
    The IF is (1/pi) sum_k s_k 1{cell_k}(delta - mean(delta | cell_k)) / P(cell_k)
    with delta = y - theta d.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    ym = [fmean(y[m]) for m, _ in cells]
    dm = [fmean(d[m]) for m, _ in cells]
    alpha = math.fsum(s * v for (_, s), v in zip(cells, ym))
    pi = math.fsum(s * v for (_, s), v in zip(cells, dm))
    means = tuple(CellMean(a, b, int(np.sum(m))) for (m, _), a, b in zip(cells, ym, dm))
    if not abs(pi) > tau:
        raise WeakDenominator(pi, tau, where)
    theta = alpha / pi
    infl = np.zeros(n_total)
    pi_infl = np.zeros(n_total)
    for (mask, sign), cm in zip(cells, dm):
        scale = sign * n_total / mask.sum()
        delta = y[mask] - theta * d[mask]
        infl[mask] += scale * (delta - fmean(delta))
        pi_infl[mask] += scale * (d[mask] - cm)
    infl /= pi
    return RatioParts(alpha, pi, theta, infl, means, pi_infl)
