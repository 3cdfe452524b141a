"""Exception types raised across the package.

Every error derives from ``DidIvError`` so callers (and the CLI) can catch the
whole family at once. ``UsageError`` subclasses mark problems with the input
or the request rather than with estimation.
"""


class DidIvError(Exception):
    """Base class for all package errors."""


class UsageError(DidIvError):
    """Input or request problem (bad columns, unparseable file, bad option)."""


class EstimationError(DidIvError):
    """The data were read fine but a quantity could not be estimated."""


# --- loading -----------------------------------------------------------------

class MissingColumn(UsageError):
    def __init__(self, column, available=()):
        self.column = column
        msg = f"missing column {column!r}"
        if available:
            msg += f" (available: {', '.join(map(str, available))})"
        super().__init__(msg)


class ParseError(UsageError):
    def __init__(self, row, column, value, reason="not parseable"):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: column {column!r} value {value!r} {reason}")


class DuplicateObservation(UsageError):
    def __init__(self, unit, time):
        self.unit = unit
        self.time = time
        super().__init__(f"duplicate observation for unit {unit!r} at time {time}")


# --- cohorts -----------------------------------------------------------------

class EmptyUnexposedSet(EstimationError):
    pass


class NoVariation(EstimationError):
    pass


class NoEstimableCells(EstimationError):
    pass


# --- point estimation ----------------------------------------------------------

class WeakDenominator(EstimationError):
    def __init__(self, value, tau, where=""):
        self.value = value
        self.tau = tau
        self.where = where
        loc = f" in {where}" if where else ""
        super().__init__(f"first-stage DID {value!r} within tau={tau:g} of zero{loc}")


class EmptyGroup(EstimationError):
    def __init__(self, group, where=""):
        self.group = group
        loc = f" in {where}" if where else ""
        super().__init__(f"group {group} has no usable observations{loc}")


class EmptyCell(EstimationError):
    def __init__(self, group, period, where=""):
        self.group = group
        self.period = period
        loc = f" in {where}" if where else ""
        super().__init__(f"no observations for group {group} at period {period}{loc}")


class DegenerateResample(EstimationError):
    pass


# --- aggregation ---------------------------------------------------------------

class ZeroWeightMass(EstimationError):
    pass


class MissingCell(EstimationError):
    pass


# --- twfeiv --------------------------------------------------------------------

class NoInstrumentVariation(EstimationError):
    pass


class WeakFirstStage(EstimationError):
    pass


class UnsupportedLayout(EstimationError):
    pass


# --- pretrends / simulation ----------------------------------------------------

class NoPrePeriods(EstimationError):
    pass


class InfeasibleSpec(UsageError):
    pass
