"""scikit-learn style estimators wrapping the functional API.

``X`` is a table of covariates (pandas DataFrame, mapping of columns, a
2-D numeric array, or a :class:`~mprsurv.data.Dataset`) and ``y`` holds the
survival outcome as ``(time, status)``: a tuple of arrays, an ``(n, 2)``
array, or a structured array with ``time``/``status`` fields.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import curves, inference, model
from .data import (
    Dataset, DataError, DesignMatrices, ModelSpec, check_survival_arrays, design_block,
    encode_design,
)
from .selection import COMPONENTS, Criterion, step_mpr


def check_survival_y(y):
    """Split ``y`` into validated ``(time, status)`` arrays."""
    if isinstance(y, tuple) and len(y) == 2:
        time, status = y
    else:
        arr = np.asarray(y)
        if arr.dtype.names:
            names = {n.lower(): n for n in arr.dtype.names}
            t_key = names.get("time")
            s_key = names.get("status", names.get("event"))
            if t_key is None or s_key is None:
                raise DataError("structured y needs 'time' and 'status' (or 'event') fields")
            time, status = arr[t_key], arr[s_key]
        elif arr.ndim == 2 and arr.shape[1] == 2:
            time, status = arr[:, 0], arr[:, 1]
        else:
            raise DataError("y must be (time, status), an (n, 2) array or a structured array")
    status = np.asarray(status)
    if status.dtype == bool:
        status = status.astype(int)
    return check_survival_arrays(time, status)


def check_covariates(X) -> dict:
    """Return ``X`` as a dict of named columns."""
    if isinstance(X, Dataset):
        return {name: cov.values for name, cov in X.covariates.items()}
    if hasattr(X, "columns") and hasattr(X, "__getitem__"):
        return {str(c): np.asarray(X[c]) for c in X.columns}
    if isinstance(X, Mapping):
        return {str(k): np.asarray(v) for k, v in X.items()}
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DataError("X must be two-dimensional")
    return {f"x{j}": arr[:, j] for j in range(arr.shape[1])}


def _n_rows(columns):
    lengths = {len(v) for v in columns.values()}
    if len(lengths) > 1:
        raise DataError("covariate columns have different lengths")
    return lengths.pop() if lengths else None


def _as_dataset(X, y, categorical=None) -> Dataset:
    if isinstance(X, Dataset) and y is None:
        return X
    time, status = check_survival_y(y)
    cols = check_covariates(X) if X is not None else {}
    if cols and _n_rows(cols) != len(time):
        raise DataError(f"X has {_n_rows(cols)} rows but y has {len(time)}")
    return Dataset.from_columns(time, status, cols, categorical)


def _terms(value):
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(t for t in value.split(",") if t.strip() and t.strip() != "1")
    return tuple(value)


class WeibullMPR(BaseEstimator):
    """Weibull regression with covariates in both the scale and the shape.

    Parameters
    ----------
    scale : sequence of str
        Covariates in the log-scale linear predictor.
    shape : sequence of str
        Covariates in the log-shape linear predictor. Empty gives the
        proportional-hazards Weibull model.
    reference_levels : dict, optional
        Reference level per categorical covariate.
    categorical : sequence of str, optional
        Numeric-looking columns to treat as categorical.
    tol : float
        Absolute score tolerance for convergence.
    max_iter : int
        Maximum Newton iterations.

    Attributes
    ----------
    model_ : FittedModel
    coef_ : dict
        Coefficients keyed by ``"scale:<column>"`` / ``"shape:<column>"``.
    covariance_ : ndarray
    loglik_, aic_, bic_ : float
    converged_ : bool
    n_iter_ : int
    """

    def __init__(self, scale=(), shape=(), reference_levels=None, categorical=None,
                 tol=1e-8, max_iter=100):
        self.scale = scale
        self.shape = shape
        self.reference_levels = reference_levels
        self.categorical = categorical
        self.tol = tol
        self.max_iter = max_iter

    def _spec(self):
        return ModelSpec(_terms(self.scale), _terms(self.shape), dict(self.reference_levels or {}))

    def fit(self, X, y=None, start=None):
        ds = _as_dataset(X, y, self.categorical)
        d = encode_design(ds, self._spec())
        opts = model.FitOptions(tol_grad=self.tol, max_iter=self.max_iter, start=start)
        return self._set_fitted(model.fit(d, opts))

    def _set_fitted(self, fitted):
        self.model_ = fitted
        self.coef_ = fitted.coefficients()
        self.covariance_ = fitted.covariance
        self.loglik_ = fitted.loglik
        self.aic_ = fitted.aic
        self.bic_ = fitted.bic
        self.converged_ = fitted.converged
        self.n_iter_ = fitted.iterations
        self.feature_names_in_ = np.array(
            list(dict.fromkeys(fitted.spec.scale_terms + fitted.spec.shape_terms)), dtype=object
        )
        return self

    @property
    def scale_coef_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.beta

    @property
    def shape_coef_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.alpha

    @property
    def standard_errors_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.standard_errors

    def weibull_parameters(self, X):
        """Per-row ``(lam, gam)`` arrays for covariate table ``X``."""
        check_is_fitted(self, "model_")
        d = self.model_.design
        cols = check_covariates(X)
        n = _n_rows(cols) or 1
        Xs = design_block(d.spec.scale_terms, d.encodings, cols, n)
        Zs = design_block(d.spec.shape_terms, d.encodings, cols, n)
        return np.exp(Xs @ self.model_.beta), np.exp(Zs @ self.model_.alpha)

    def predict_cumulative_hazard(self, X, times):
        lam, gam = self.weibull_parameters(X)
        t = np.asarray(times, dtype=float)
        return lam[:, None] * np.power(t[None, :], gam[:, None])

    def predict_survival_function(self, X, times):
        """Survivor probabilities, shape ``(n_samples, n_times)``."""
        return np.exp(-self.predict_cumulative_hazard(X, times))

    def predict_hazard(self, X, times):
        lam, gam = self.weibull_parameters(X)
        return np.vstack([model.weibull_hazard(l_, g_, times) for l_, g_ in zip(lam, gam)])

    def predict(self, X):
        """Median survival time per row."""
        lam, gam = self.weibull_parameters(X)
        return (np.log(2.0) / lam) ** (1.0 / gam)

    def score(self, X, y=None):
        """Mean per-subject log-likelihood of ``(X, y)`` under the fitted coefficients."""
        check_is_fitted(self, "model_")
        ds = _as_dataset(X, y, self.categorical)
        spec = self.model_.spec
        d = self.model_.design
        cols = {t: ds[t].values for t in dict.fromkeys(spec.scale_terms + spec.shape_terms)}
        new = DesignMatrices(
            design_block(spec.scale_terms, d.encodings, cols, ds.n),
            design_block(spec.shape_terms, d.encodings, cols, ds.n),
            d.scale_columns, d.shape_columns, ds.time, ds.status, d.encodings, spec,
        )
        return model.log_likelihood(self.model_.theta, new) / ds.n

    def hazard_ratio(self, covariate, z_tilde=None, times=None, level=0.95):
        check_is_fitted(self, "model_")
        return curves.hazard_ratio(self.model_, covariate, z_tilde, times, level)

    def crossing_time(self, covariate, z_tilde=None):
        check_is_fitted(self, "model_")
        return curves.crossing_time(self.model_, covariate, z_tilde)

    def wald_joint(self, covariate):
        check_is_fitted(self, "model_")
        return inference.wald_joint(self.model_, covariate)

    def confidence_ellipse(self, covariate, level=0.95, n_points=100):
        check_is_fitted(self, "model_")
        return inference.confidence_ellipse(self.model_, covariate, level, n_points)


class StepwiseMPR(BaseEstimator):
    """Stagewise scale/shape variable selection followed by a final fit.

    Parameters
    ----------
    candidates : sequence of str, optional
        Covariates eligible for selection (default: every column of ``X``).
    criterion : {"aic", "bic", "lrt"}
    alpha : float
        Significance level for the ``"lrt"`` criterion.
    forward_only : bool
    components : tuple
        Allowed move components; ``("scale",)`` restricts to PH selection.
    reference_levels : dict, optional
    categorical : sequence of str, optional

    Attributes
    ----------
    trace_ : SelectionTrace
    selected_scale_, selected_shape_ : tuple of str
    best_estimator_ : WeibullMPR
    """

    def __init__(self, candidates=None, criterion="aic", alpha=0.05, forward_only=False,
                 components=COMPONENTS, reference_levels=None, categorical=None):
        self.candidates = candidates
        self.criterion = criterion
        self.alpha = alpha
        self.forward_only = forward_only
        self.components = components
        self.reference_levels = reference_levels
        self.categorical = categorical

    def fit(self, X, y=None):
        ds = _as_dataset(X, y, self.categorical)
        candidates = list(self.candidates) if self.candidates is not None else list(ds.names)
        start = ModelSpec(reference_levels=dict(self.reference_levels or {}))
        trace = step_mpr(ds, candidates, Criterion(self.criterion, self.alpha),
                         forward_only=self.forward_only, start=start,
                         components=tuple(self.components))
        self.trace_ = trace
        self.selected_scale_ = trace.final_spec.scale_terms
        self.selected_shape_ = trace.final_spec.shape_terms
        best = WeibullMPR(self.selected_scale_, self.selected_shape_, self.reference_levels,
                          self.categorical)
        self.best_estimator_ = best._set_fitted(trace.final_fit)
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)

    def predict_survival_function(self, X, times):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict_survival_function(X, times)

    def score(self, X, y=None):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.score(X, y)
