"""Time-dependent hazard ratios, crossing times and the Kaplan-Meier estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Dataset, DataError, design_block
from .inference import normal_quantile
from .model import LOG_MAX


@dataclass(frozen=True)
class HazardRatioCurve:
    covariate: str
    times: np.ndarray
    hr: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    z_tilde_policy: str
    crossing_time: float | None = None

    def rows(self):
        for t, e, lo, hi in zip(self.times, self.hr, self.lower, self.upper):
            yield {"covariate": self.covariate, "time": t, "estimate": e, "lower": lo, "upper": hi}


@dataclass(frozen=True)
class KMCurve:
    event_times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray

    def __call__(self, t) -> np.ndarray:
        """Step-function value of the estimate at ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        padded = np.concatenate([[1.0], self.survival])
        return padded[idx]


class _HRParts:
    """Indices and shape offsets needed to evaluate the hazard ratio of one column."""

    def __init__(self, fit, covariate):
        d = fit.design
        k = d.X.shape[1]
        scale = [j for j, c in enumerate(d.scale_columns) if c.label == covariate]
        if not scale:
            raise DataError(
                f"{covariate!r} is not in the scale component; include it in the scale "
                "terms (the hazard ratio needs its scale coefficient, even if zero)"
            )
        self.jb = scale[0]
        shape = [j for j, c in enumerate(d.shape_columns) if c.label == covariate]
        self.ja = k + shape[0] if shape else None
        # columns of the shape block that belong to the same covariate are zeroed in z~
        owner = d.scale_columns[self.jb].covariate
        self.block = np.array(
            [c.label == covariate or (owner is not None and c.covariate == owner)
             for c in d.shape_columns]
        )
        self.k = k
        self.fit = fit

    @property
    def beta_c(self):
        return float(self.fit.theta[self.jb])

    @property
    def alpha_c(self):
        return 0.0 if self.ja is None else float(self.fit.theta[self.ja])

    def z_tilde(self, z_tilde):
        d = self.fit.design
        if z_tilde is None:
            z = np.zeros(d.Z.shape[1])
            z[0] = 1.0
        elif isinstance(z_tilde, Mapping):
            values = {t: z_tilde.get(t, _reference_value(d.encodings[t])) for t in d.spec.shape_terms}
            z = design_block(d.spec.shape_terms, d.encodings, values, n=1)[0]
        else:
            z = np.array(z_tilde, dtype=float)
            if z.shape != (d.Z.shape[1],):
                raise DataError(f"z_tilde must have {d.Z.shape[1]} entries (intercept included)")
        z = np.atleast_2d(z).copy()
        z[:, self.block] = 0.0
        return z

    def log_hr_and_grad(self, Zt, weights, times):
        """Weighted mean hazard ratio over rows ``Zt``, its log and the log's gradient."""
        theta = self.fit.theta
        alpha = theta[self.k:]
        b, a = self.beta_c, self.alpha_c
        logt = np.log(times)
        s = np.exp(Zt @ alpha)  # exp(z~'alpha) per profile
        ea = math.exp(a)
        expo = np.outer(logt, s * (ea - 1.0))  # (T, m)
        hr_i = np.exp(b + a + expo)
        hr = hr_i @ weights
        w = (hr_i * weights) / hr[:, None]  # profile weights within the mean, per time
        grad = np.zeros((len(times), len(theta)))
        grad[:, self.jb] = 1.0
        if self.ja is not None:
            grad[:, self.ja] += 1.0 + (w * np.outer(logt, s * ea)).sum(axis=1)
        # other shape coefficients enter through exp(z~'alpha)
        grad[:, self.k:] += (w * expo) @ Zt
        return hr, np.log(hr), grad


def _reference_value(enc):
    return enc.reference if enc.is_categorical else 0.0


def default_time_grid(fit, n_points=100) -> np.ndarray:
    d = fit.design
    ev = d.time[d.status == 1]
    return np.linspace(ev.min(), ev.max(), n_points)


def _band(hr, log_hr, grad, cov, level):
    var = np.einsum("ij,jk,ik->i", grad, cov, grad)
    se = np.sqrt(np.maximum(var, 0.0))
    zq = normal_quantile(0.5 + level / 2.0)
    return hr, np.exp(log_hr - zq * se), np.exp(log_hr + zq * se)


def hazard_ratio(fit, covariate: str, z_tilde=None, times=None, level: float = 0.95) -> HazardRatioCurve:
    """Hazard ratio of ``covariate`` = 1 versus 0 over ``times`` with a delta-method band.

    ``z_tilde`` fixes the remaining shape covariates: ``None`` uses the
    reference/zero profile, a mapping gives raw covariate values, and an
    array gives a full shape design row. The band is computed on the log
    scale and back-transformed.
    """
    parts = _HRParts(fit, covariate)
    times = default_time_grid(fit) if times is None else np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DataError("hazard-ratio times must be positive")
    Zt = parts.z_tilde(z_tilde)
    hr, lo, hi = _band(*parts.log_hr_and_grad(Zt, np.ones(1), times), fit.covariance, level)
    policy = "reference profile" if z_tilde is None else "supplied profile"
    return HazardRatioCurve(covariate, times, hr, lo, hi, level, policy,
                            _crossing(parts, Zt[0]))


def _crossing(parts, z):
    a = parts.alpha_c
    if a == 0.0:
        return None
    s = math.exp(float(z @ parts.fit.theta[parts.k:]))
    log_tc = (parts.beta_c + a) / (s * -math.expm1(a))
    # a vanishing shape effect pushes the crossing out to 0 or infinity
    if log_tc > LOG_MAX:
        return math.inf
    return math.exp(log_tc)


def crossing_time(fit, covariate: str, z_tilde=None) -> float | None:
    """Time at which the hazard ratio equals one, or ``None`` when the shape effect is zero."""
    parts = _HRParts(fit, covariate)
    return _crossing(parts, parts.z_tilde(z_tilde)[0])


def hazard_ratio_averaged(fit, covariate: str, ds: Dataset | None = None, times=None,
                          level: float = 0.95) -> HazardRatioCurve:
    """Hazard ratio averaged over the empirical distribution of the other shape covariates.

    Each subject's shape profile, with ``covariate`` removed, contributes one
    hazard-ratio curve; the result is their pointwise mean. ``ds`` defaults
    to the data the model was fitted on.
    """
    parts = _HRParts(fit, covariate)
    d = fit.design
    if ds is None:
        Zrows = np.array(d.Z)
    else:
        if ds.n == 0:
            raise DataError("empty dataset")
        values = {t: ds[t].values for t in d.spec.shape_terms}
        Zrows = design_block(d.spec.shape_terms, d.encodings, values, ds.n)
    Zrows[:, parts.block] = 0.0
    profiles, counts = np.unique(Zrows, axis=0, return_counts=True)
    weights = counts / counts.sum()
    times = default_time_grid(fit) if times is None else np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DataError("hazard-ratio times must be positive")
    hr, lo, hi = _band(*parts.log_hr_and_grad(profiles, weights, times), fit.covariance, level)
    return HazardRatioCurve(covariate, times, hr, lo, hi, level, "empirical average")


def kaplan_meier(time, status) -> KMCurve:
    """Product-limit estimate over the distinct event times.

    At tied times events are counted before censorings, so subjects censored
    at an event time are still in that time's risk set.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status)
    if time.size == 0:
        raise DataError("empty input")
    if time.shape != status.shape:
        raise DataError("time and status lengths differ")
    if np.any(time <= 0):
        raise DataError("times must be positive")
    ev_times, n_events = np.unique(time[status == 1], return_counts=True)
    at_risk = len(time) - np.searchsorted(np.sort(time), ev_times, side="left")
    surv = np.cumprod(1.0 - n_events / at_risk)
    return KMCurve(ev_times, surv, at_risk.astype(int), n_events)
