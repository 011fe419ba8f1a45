"""Weibull multi-parameter regression survival models.

Covariates enter both the scale and the shape of a Weibull hazard through
separate log-linear predictors, giving time-dependent hazard ratios, a
proportionality test and stagewise scale/shape variable selection.
"""

__version__ = "0.1.0"

from .curves import (  # noqa: E402
    HazardRatioCurve, KMCurve, crossing_time, hazard_ratio, hazard_ratio_averaged, kaplan_meier,
)
from .data import (  # noqa: E402
    Dataset, DesignMatrices, ModelSpec, encode_design, parse_dataset, read_dataset,
)
from .datasets import load_lung_synthetic  # noqa: E402
from .estimator import StepwiseMPR, WeibullMPR  # noqa: E402
from .exceptions import (  # noqa: E402
    ConvergenceError, DataError, MPRError, NumericalError, RankDeficiencyError,
)
from .inference import (  # noqa: E402
    Ellipse, TestResult, chi_square_sf, confidence_ellipse, information_criteria,
    likelihood_ratio_test, wald_joint, wald_single,
)
from .model import (  # noqa: E402
    FitOptions, FittedModel, Theta, fit, log_likelihood, observed_information, predict_hazard,
    predict_survivor, score,
)
from .selection import Criterion, SelectionTrace, compare_models, step_mpr  # noqa: E402

__all__ = [
    "ConvergenceError", "Criterion", "DataError", "Dataset", "DesignMatrices", "Ellipse",
    "FitOptions", "FittedModel", "HazardRatioCurve", "KMCurve", "MPRError", "ModelSpec",
    "NumericalError", "RankDeficiencyError", "SelectionTrace", "StepwiseMPR", "TestResult",
    "Theta", "WeibullMPR", "chi_square_sf", "compare_models", "confidence_ellipse",
    "crossing_time", "encode_design", "fit", "hazard_ratio", "hazard_ratio_averaged",
    "information_criteria", "kaplan_meier", "likelihood_ratio_test", "load_lung_synthetic",
    "log_likelihood", "observed_information", "parse_dataset", "predict_hazard",
    "predict_survivor", "read_dataset", "score", "step_mpr", "wald_joint", "wald_single",
]
