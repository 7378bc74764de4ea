"""Joint multi-quantile regression with adaptive-lasso and curvature penalties.

Estimation is a single linear program over all quantile levels, with
non-crossing constraints at the training rows. Around it sit model scoring
and selection (:mod:`mqrlr.calibrate`), Monte Carlo scenario generation
(:mod:`mqrlr.scenario`) and evaluation studies (:mod:`mqrlr.evalharness`).
"""

from .core import (DesignMatrix, NormStats, QuantileGrid, TimeSeries, apply_norm, build_lag_matrix, normalize,
                   pinball, read_series_csv, write_series_csv)
from .errors import (DegenerateCovariateError, DomainError, InputFormatError, InsufficientDataError,
                     InvalidWeightsError, MqrError, SolverFailure, TooManyFailuresError)
from .mqr import (MqrModel, QuantileFan, RegPair, SolverOptions, build_lp, estimate, load_model, predict_fan,
                  save_model)

__version__ = "0.1.0"

__all__ = [
    "DegenerateCovariateError", "DesignMatrix", "DomainError", "InputFormatError", "InsufficientDataError",
    "InvalidWeightsError", "MqrError", "MqrModel", "NormStats", "QuantileFan", "QuantileGrid", "RegPair",
    "SolverFailure", "SolverOptions", "TimeSeries", "TooManyFailuresError", "apply_norm", "build_lag_matrix",
    "build_lp", "estimate", "load_model", "normalize", "pinball", "predict_fan", "read_series_csv", "save_model",
    "write_series_csv",
]
