"""Compliance types of the two-period, two-group design.

A unit is described by its treatment path ``(d0, d1u, d1e)``:

* ``d0``  treatment in period 0 (no one is exposed yet),
* ``d1u`` treatment in period 1 if left unexposed, z path (0, 0),
* ``d1e`` treatment in period 1 if exposed, z path (0, 1).

The instrument type compares (d1u, d1e) and the time type compares (d0, d1u).
Both share d1u, so only 8 of the 16 (instrument, time) pairs exist for a
binary treatment.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

NT, AT, CM, DF = "NT", "AT", "CM", "DF"

# (first, second) potential treatment -> label
_PAIR = {(0, 0): NT, (1, 1): AT, (0, 1): CM, (1, 0): DF}
_INV = {v: k for k, v in _PAIR.items()}


@dataclass(frozen=True, order=True)
class UnitType:
    gz: str  # instrument-compliance type
    gt: str  # time-compliance type

    def __post_init__(self):
        if self.gz not in _INV or self.gt not in _INV:
            raise ValueError(f"unknown type labels {self.gz!r}/{self.gt!r}")
        if _INV[self.gz][0] != _INV[self.gt][1]:
            raise ValueError(f"{self} is inconsistent: both labels fix D_1 under z=(0,0)")

    @property
    def path(self) -> tuple:
        d1u, d1e = _INV[self.gz]
        d0, _ = _INV[self.gt]
        return (d0, d1u, d1e)

    @classmethod
    def from_path(cls, path) -> "UnitType":
        d0, d1u, d1e = (int(x) for x in path)
        return cls(_PAIR[(d1u, d1e)], _PAIR[(d0, d1u)])

    def observed(self, exposed: bool) -> tuple:
        """Observed (D_0, D_1) for a unit in the exposed or unexposed group."""
        d0, d1u, d1e = self.path
        return (d0, d1e if exposed else d1u)

    def __str__(self):
        return f"{self.gz}^Z&{self.gt}^T"


ALL_TYPES = tuple(UnitType.from_path(p) for p in product((0, 1), repeat=3))
MONOTONE_TYPES = tuple(t for t in ALL_TYPES if t.gz != DF)

# Types allowed by the fuzzy-DID restrictions (exposed / unexposed group).
FUZZY_EXPOSED = tuple(t for t in ALL_TYPES if t.gz != DF and not (t.gz == NT and t.gt == DF))
FUZZY_UNEXPOSED = (
    UnitType(AT, AT),
    UnitType(CM, NT),
    UnitType(NT, NT),
)


def type_of_path(path) -> str:
    """Label of a binary path, e.g. 'CM^Z&NT^T'."""
    return str(UnitType.from_path(path))


def monotone(path) -> bool:
    return path[2] >= path[1]
