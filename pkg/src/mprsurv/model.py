"""Weibull multi-parameter regression: likelihood, derivatives and fitting.

The hazard is ``lam * gam * t**(gam - 1)`` with ``log(lam) = X @ beta`` and
``log(gam) = Z @ alpha``. Parameter vectors are always laid out as
``theta = concat(beta, alpha)``.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import scipy.linalg

from .data import DesignMatrices, design_block
from .exceptions import DataError, NumericalError
from .inference import information_criteria

logger = logging.getLogger(__name__)

LOG_MAX = math.log(sys.float_info.max)


class Theta(NamedTuple):
    beta: np.ndarray
    alpha: np.ndarray

    @classmethod
    def split(cls, theta, d: DesignMatrices) -> "Theta":
        theta = np.asarray(theta, dtype=float)
        k = d.X.shape[1]
        if theta.shape != (d.n_params,):
            raise DataError(f"theta has shape {theta.shape}, design needs ({d.n_params},)")
        return cls(theta[:k], theta[k:])

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.beta, self.alpha])


class _Terms(NamedTuple):
    eta: np.ndarray  # log lambda
    zeta: np.ndarray  # log gamma
    gamma: np.ndarray
    logt: np.ndarray
    H: np.ndarray  # cumulative hazard lam * t**gam


def _terms(theta, d: DesignMatrices) -> _Terms:
    beta, alpha = Theta.split(theta, d)
    eta = d.X @ beta
    zeta = d.Z @ alpha
    if np.any(zeta > LOG_MAX):
        i = int(np.argmax(zeta))
        raise NumericalError(f"shape parameter overflows for subject {i}", index=i)
    gamma = np.exp(zeta)
    logt = np.log(d.time)
    logH = eta + gamma * logt
    if not np.all(logH <= LOG_MAX):
        i = int(np.flatnonzero(~(logH <= LOG_MAX))[0])
        raise NumericalError(f"lam * t**gam overflows for subject {i}", index=i)
    return _Terms(eta, zeta, gamma, logt, np.exp(logH))


def loglik_contributions(theta, d: DesignMatrices) -> np.ndarray:
    """Per-subject log-likelihood contributions."""
    tm = _terms(theta, d)
    delta = d.status
    return delta * (tm.eta + tm.zeta + (tm.gamma - 1.0) * tm.logt) - tm.H


def log_likelihood(theta, d: DesignMatrices) -> float:
    """Censored Weibull log-likelihood at ``theta``.

    Raises
    ------
    NumericalError
        When ``lam * t**gam`` overflows; ``index`` names the offending subject.
    """
    value = float(np.sum(loglik_contributions(theta, d)))
    if not math.isfinite(value):
        raise NumericalError("log-likelihood is not finite")
    return value


def score(theta, d: DesignMatrices) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood`, ordered (beta, alpha)."""
    tm = _terms(theta, d)
    resid = d.status - tm.H
    g_beta = d.X.T @ resid
    g_alpha = d.Z.T @ (tm.gamma * tm.logt * resid + d.status)
    return np.concatenate([g_beta, g_alpha])


def observed_information(theta, d: DesignMatrices) -> np.ndarray:
    """Negative Hessian of the log-likelihood, assembled in (beta, alpha) blocks."""
    tm = _terms(theta, d)
    gL = tm.gamma * tm.logt
    w_bb = tm.H
    w_ba = tm.H * gL
    w_aa = tm.H * gL * gL - gL * (d.status - tm.H)
    X, Z = d.X, d.Z
    I_bb = X.T @ (w_bb[:, None] * X)
    I_ba = X.T @ (w_ba[:, None] * Z)
    I_aa = Z.T @ (w_aa[:, None] * Z)
    info = np.block([[I_bb, I_ba], [I_ba.T, I_aa]])
    # exact symmetry regardless of floating-point summation order
    return np.triu(info) + np.triu(info, 1).T


@dataclass(frozen=True)
class FitOptions:
    tol_grad: float = 1e-8
    tol_loglik: float = 1e-10
    max_iter: int = 100
    max_halvings: int = 30
    start: np.ndarray | None = None


@dataclass(frozen=True)
class FittedModel:
    theta_hat: Theta
    loglik: float
    covariance: np.ndarray
    n: int
    p: int
    q: int
    converged: bool
    iterations: int
    design: DesignMatrices = field(repr=False)
    max_abs_score: float = float("nan")

    @property
    def theta(self) -> np.ndarray:
        return self.theta_hat.ravel()

    @property
    def beta(self) -> np.ndarray:
        return self.theta_hat.beta

    @property
    def alpha(self) -> np.ndarray:
        return self.theta_hat.alpha

    @property
    def design_labels(self) -> tuple:
        return self.design.column_labels

    @property
    def n_params(self) -> int:
        return self.p + self.q + 2

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def aic(self) -> float:
        return information_criteria(self.loglik, self.n_params, self.n)[0]

    @property
    def bic(self) -> float:
        return information_criteria(self.loglik, self.n_params, self.n)[1]

    @property
    def spec(self):
        return self.design.spec

    def index(self, label: str) -> int:
        """Position of coefficient ``label`` (e.g. ``"shape:age"``) in theta."""
        try:
            return self.design_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown coefficient {label!r}") from None

    def coefficients(self) -> dict:
        return dict(zip(self.design_labels, self.theta.tolist()))


def initial_theta(d: DesignMatrices) -> np.ndarray:
    """Exponential-model start: crude-rate intercept, all other entries zero."""
    theta = np.zeros(d.n_params)
    theta[0] = math.log(d.status.sum() / d.time.sum())
    return theta


def _safe_loglik(theta, d):
    try:
        return log_likelihood(theta, d)
    except NumericalError:
        return -math.inf


def _newton_direction(info, g):
    """Solve ``info @ step = g``, inflating the diagonal if not positive definite."""
    k = len(g)
    tau = 0.0
    for _ in range(20):
        try:
            c = scipy.linalg.cho_factor(info + tau * np.eye(k))
            return scipy.linalg.cho_solve(c, g), tau
        except (np.linalg.LinAlgError, ValueError):
            tau = 1e-8 if tau == 0.0 else tau * 10.0
    return g / max(1.0, float(np.max(np.abs(g)))), math.inf


def fit(d: DesignMatrices, options: FitOptions | None = None) -> FittedModel:
    """Maximum-likelihood fit by Newton-Raphson with step halving.

    Converges when both ``max|score| < tol_grad`` and the relative
    log-likelihood improvement falls below ``tol_loglik``. Hitting
    ``max_iter`` returns a model flagged ``converged=False``.

    Raises
    ------
    NumericalError
        If the observed information at a converged estimate is singular.
    """
    options = options or FitOptions()
    theta = initial_theta(d) if options.start is None else np.array(options.start, dtype=float)
    if theta.shape != (d.n_params,):
        raise DataError(f"start has shape {theta.shape}, expected ({d.n_params},)")
    ll = log_likelihood(theta, d)

    converged = False
    it = 0
    g = score(theta, d)
    while it < options.max_iter:
        it += 1
        info = observed_information(theta, d)
        step, _ = _newton_direction(info, g)
        t = 1.0
        # changes below this are rounding noise in the summed log-likelihood
        noise = 1e-12 * max(abs(ll), 1.0)
        for _ in range(options.max_halvings + 1):
            cand = theta + t * step
            ll_new = _safe_loglik(cand, d)
            if ll_new >= ll - noise:
                break
            t *= 0.5
        else:
            # no ascent possible along the step; only acceptable at a stationary point
            converged = bool(np.max(np.abs(g)) < options.tol_grad)
            break
        rel = abs(ll_new - ll) / max(abs(ll), 1.0)
        theta, ll = cand, ll_new
        g = score(theta, d)
        if np.max(np.abs(g)) < options.tol_grad and rel < options.tol_loglik:
            converged = True
            break

    info = observed_information(theta, d)
    try:
        c = scipy.linalg.cho_factor(info)
        cov = scipy.linalg.cho_solve(c, np.eye(len(theta)))
        cov = 0.5 * (cov + cov.T)
    except (np.linalg.LinAlgError, ValueError):
        if converged:
            raise NumericalError("observed information is singular at the estimate") from None
        cov = np.full((len(theta),) * 2, np.nan)
    if not converged:
        logger.warning("fit did not converge after %d iterations (max|score|=%.3g)",
                       it, float(np.max(np.abs(g))))
    return FittedModel(
        theta_hat=Theta.split(theta, d),
        loglik=log_likelihood(theta, d),
        covariance=cov,
        n=d.n,
        p=d.p,
        q=d.q,
        converged=converged,
        iterations=it,
        design=d,
        max_abs_score=float(np.max(np.abs(g))),
    )


def _design_row(fit: FittedModel, row, component: str) -> np.ndarray:
    d = fit.design
    if component == "scale":
        terms, width = d.spec.scale_terms, d.X.shape[1]
    else:
        terms, width = d.spec.shape_terms, d.Z.shape[1]
    if isinstance(row, Mapping):
        return design_block(terms, d.encodings, row, n=1)[0]
    row = np.atleast_1d(np.asarray(row, dtype=float))
    if row.shape != (width,):
        raise DataError(f"{component} row has {row.size} entries, design has {width} columns")
    return row


def weibull_parameters(fit: FittedModel, x_row, z_row) -> tuple:
    """Return ``(lam, gam)`` for one covariate profile.

    Rows are either numeric design rows (intercept included) or mappings of
    raw covariate values keyed by covariate name.
    """
    x = _design_row(fit, x_row, "scale")
    z = _design_row(fit, z_row, "shape")
    return math.exp(float(x @ fit.beta)), math.exp(float(z @ fit.alpha))


def weibull_survival(lam, gam, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DataError("times must be non-negative")
    return np.exp(-lam * np.power(times, gam))


def weibull_hazard(lam, gam, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DataError("times must be non-negative")
    if gam < 1 and np.any(times == 0):
        raise NumericalError("hazard is infinite at t = 0 when the shape is below 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lam * gam * np.power(times, gam - 1.0)
    if gam == 1:
        out = np.where(times == 0, lam, out)
    return out


def predict_survivor(fit: FittedModel, x_row, z_row, times) -> np.ndarray:
    """Model survivor curve ``exp(-lam * t**gam)`` on ``times``."""
    lam, gam = weibull_parameters(fit, x_row, z_row)
    return weibull_survival(lam, gam, times)


def predict_hazard(fit: FittedModel, x_row, z_row, times) -> np.ndarray:
    """Model hazard ``lam * gam * t**(gam - 1)`` on ``times``."""
    lam, gam = weibull_parameters(fit, x_row, z_row)
    return weibull_hazard(lam, gam, times)
