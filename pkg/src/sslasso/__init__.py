"""Spike-and-slab LASSO regression.

Typical use::

    from sslasso import StandardizedDesign, SSLHyperParams, fit_path

    design = StandardizedDesign.from_arrays(X, y)
    path = fit_path(design, SSLHyperParams())
    path.final.support          # 0-based selected columns
"""

from .data import RawDataset, StandardizedDesign, destandardize, load_dataset, standardize
from .em import EMState, em_fit
from .exceptions import DataError, NumericalError, SSLError
from .inference import (
    IntervalTable,
    PrecisionEstimate,
    confidence_intervals,
    debias,
    precision_estimate,
)
from .penalty import PenaltyContext, SSLHyperParams, lambda_star, pen_singleton, pstar, threshold_delta
from .solver import FitPath, SolverState, cv_lasso, fit_at_rung, fit_path, lasso, weighted_lasso

__version__ = "0.1.0"

__all__ = [
    "RawDataset",
    "StandardizedDesign",
    "load_dataset",
    "standardize",
    "destandardize",
    "SSLHyperParams",
    "PenaltyContext",
    "pstar",
    "lambda_star",
    "pen_singleton",
    "threshold_delta",
    "SolverState",
    "FitPath",
    "fit_at_rung",
    "fit_path",
    "weighted_lasso",
    "lasso",
    "cv_lasso",
    "EMState",
    "em_fit",
    "PrecisionEstimate",
    "IntervalTable",
    "precision_estimate",
    "debias",
    "confidence_intervals",
    "SSLError",
    "DataError",
    "NumericalError",
]
