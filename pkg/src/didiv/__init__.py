"""DID-IV estimation: Wald-DID, staggered cell estimators, summaries, TWFEIV, pretrends."""
from .aggregation import AggregateEstimate, aggregate, compute_weights, cohort_shares
from .data import NEVER, CohortMap, ObservationTable, derive_cohorts, load_csv, table_from_frame, validate
from .errors import DidIvError, EstimationError, UsageError
from .pretrends import PretrendResult, pretrend_test
from .sts import CellEstimate, CellSpec, build_cells, estimate_cell, estimate_cells, se_bootstrap
from .twfeiv import DecompositionReport, TwfeivResult, decompose_twfeiv, estimate_twfeiv
from .wald import wald_did, wald_did_panel, wald_did_rcs, wald_tdid

__version__ = "0.1.0"

__all__ = [
    "NEVER", "ObservationTable", "CohortMap", "load_csv", "table_from_frame", "derive_cohorts",
    "validate", "wald_did", "wald_did_panel", "wald_did_rcs", "wald_tdid", "CellSpec",
    "CellEstimate", "build_cells", "estimate_cell", "estimate_cells", "se_bootstrap",
    "AggregateEstimate", "aggregate", "compute_weights", "cohort_shares", "TwfeivResult",
    "DecompositionReport", "estimate_twfeiv", "decompose_twfeiv", "PretrendResult",
    "pretrend_test", "DidIvError", "EstimationError", "UsageError",
]
