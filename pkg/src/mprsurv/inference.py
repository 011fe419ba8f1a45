"""Wald and likelihood-ratio tests, confidence ellipses and information criteria."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .exceptions import ConvergenceError, DataError, NumericalError

logger = logging.getLogger(__name__)

_EPS = 1e-16
_MAX_TERMS = 10_000


def _lower_series(a, x):
    # P(a, x) by the power series; converges fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_continued_fraction(a, x):
    # Q(a, x) by modified Lentz; converges fast for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_upper_gamma(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _lower_series(a, x)))
    return min(1.0, max(0.0, _upper_continued_fraction(a, x)))


def chi_square_sf(x: float, df: int) -> float:
    """Survival function of the chi-square distribution with ``df`` degrees of freedom."""
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi-square statistic must be non-negative, got {x}")
    if df <= 0:
        raise ValueError("df must be positive")
    return regularized_upper_gamma(0.5 * df, 0.5 * x)


def chi_square_quantile(p: float, df: int) -> float:
    """Value ``x`` with ``P(X <= x) = p`` for ``X ~ chi2(df)``."""
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    if df == 2:
        return -2.0 * math.log1p(-p)
    lo, hi = 0.0, max(1.0, 2.0 * df)
    while 1.0 - chi_square_sf(hi, df) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - chi_square_sf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def information_criteria(loglik: float, k: int, n: int) -> tuple:
    """Return ``(AIC, BIC)`` for a model with ``k`` parameters fitted to ``n`` subjects."""
    if k < 1:
        raise DataError("k must be at least 1 (intercepts are always estimated)")
    if n < 1:
        raise DataError("n must be at least 1")
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * math.log(n)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    kind: str
    label: str = ""
    note: str = ""

    __test__ = False  # keep pytest from collecting this class

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            **({"note": self.note} if self.note else {}),
        }


@dataclass(frozen=True)
class Ellipse:
    center: np.ndarray
    boundary: np.ndarray  # (n_points, 2) rows of (beta_c, alpha_c)
    level: float
    covariance: np.ndarray
    label: str = ""

    @property
    def radius2(self) -> float:
        return chi_square_quantile(self.level, 2)

    def quadratic_form(self, points) -> np.ndarray:
        diff = np.atleast_2d(points) - self.center
        return np.einsum("ij,jk,ik->i", diff, np.linalg.inv(self.covariance), diff)

    def contains(self, point) -> bool:
        """Point-in-polygon test against the discretized boundary (ray casting)."""
        x, y = float(point[0]), float(point[1])
        bx, by = self.boundary[:, 0], self.boundary[:, 1]
        bx2, by2 = np.roll(bx, -1), np.roll(by, -1)
        crosses = (by > y) != (by2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = bx + (y - by) * (bx2 - bx) / (by2 - by)
        return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def wald_single(fit, coefficient: str) -> TestResult:
    """Wald test of one coefficient being zero; ``coefficient`` like ``"scale:age"``."""
    j = fit.index(coefficient)
    est = float(fit.theta[j])
    var = float(fit.covariance[j, j])
    if not var > 0:
        raise NumericalError(f"non-positive variance for {coefficient!r}")
    stat = est * est / var
    return TestResult(stat, 1, chi_square_sf(stat, 1), "wald_single", coefficient)


def joint_indices(fit, covariate: str) -> tuple:
    """Indices into theta of ``covariate``'s scale and shape coefficients.

    ``covariate`` is either a covariate name (all of its columns, so a factor
    contributes every non-reference level) or a single column label such as
    ``"treatment[Chemo]"``.
    """
    d = fit.design
    k = d.X.shape[1]

    def pick(columns):
        return [j for j, c in enumerate(columns) if c.label != "(Intercept)"
                and (c.label == covariate or c.covariate == covariate)]

    s_idx, a_idx = pick(d.scale_columns), pick(d.shape_columns)
    if not s_idx or not a_idx:
        missing = "scale" if not s_idx else "shape"
        raise DataError(f"{covariate!r} is not in the {missing} component")
    s_lab = [d.scale_columns[j].label for j in s_idx]
    a_lab = [d.shape_columns[j].label for j in a_idx]
    if s_lab != a_lab:
        raise DataError(f"{covariate!r} is coded differently in the scale and shape components")
    return s_idx, [k + j for j in a_idx]


def wald_quadratic_form(estimate, covariance, null=None) -> float:
    estimate = np.asarray(estimate, dtype=float)
    diff = estimate - (0.0 if null is None else np.asarray(null, dtype=float))
    try:
        L = np.linalg.cholesky(np.asarray(covariance, dtype=float))
    except np.linalg.LinAlgError:
        raise NumericalError("covariance sub-matrix is not positive definite") from None
    w = np.linalg.solve(L, diff)
    return float(w @ w)


def wald_joint(fit, covariate: str) -> TestResult:
    """Joint Wald test that all scale and shape coefficients of ``covariate`` are zero.

    For a binary or numeric covariate this is a 2 df test. A factor with L
    levels present in both components gives a 2(L-1) df test built from the
    full sub-vector and sub-matrix.
    """
    s_idx, a_idx = joint_indices(fit, covariate)
    idx = s_idx + a_idx
    est = fit.theta[idx]
    cov = fit.covariance[np.ix_(idx, idx)]
    stat = wald_quadratic_form(est, cov)
    note = "factor-level generalization" if len(s_idx) > 1 else ""
    return TestResult(stat, len(idx), chi_square_sf(stat, len(idx)), "wald_joint", covariate, note)


def ellipse_points(center, covariance, level=0.95, n_points=100) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if n_points < 3:
        raise ValueError("n_points must be at least 3")
    w, V = np.linalg.eigh(cov)
    if np.any(w <= 0):
        raise NumericalError("covariance sub-matrix is not positive definite")
    r = math.sqrt(chi_square_quantile(level, 2))
    phi = 2.0 * np.pi * np.arange(1, n_points + 1) / n_points
    unit = np.vstack([np.cos(phi), np.sin(phi)])
    return center + (r * (V * np.sqrt(w)) @ unit).T


def confidence_ellipse(fit, covariate: str, level: float = 0.95, n_points: int = 100) -> Ellipse:
    """Joint confidence ellipse for ``(beta_c, alpha_c)`` of a scalar covariate."""
    s_idx, a_idx = joint_indices(fit, covariate)
    if len(s_idx) != 1:
        raise DataError(
            f"{covariate!r} has {len(s_idx)} columns per component; pass a single level label"
        )
    idx = [s_idx[0], a_idx[0]]
    center = fit.theta[idx].copy()
    cov = fit.covariance[np.ix_(idx, idx)].copy()
    return Ellipse(center, ellipse_points(center, cov, level, n_points), level, cov, covariate)


def likelihood_ratio_test(full, reduced) -> TestResult:
    """Likelihood-ratio test of ``reduced`` nested in ``full``."""
    if not (full.converged and reduced.converged):
        raise ConvergenceError("likelihood-ratio test needs two converged fits")
    if full.n != reduced.n:
        raise DataError("models were fitted to different numbers of subjects")
    if not reduced.spec.is_nested_in(full.spec):
        raise DataError("reduced model is not nested in the full model")
    df = full.n_params - reduced.n_params
    stat = 2.0 * (full.loglik - reduced.loglik)
    if stat < -1e-8:
        raise NumericalError(
            f"negative likelihood-ratio statistic {stat:.3g}; the full fit is not at its maximum"
        )
    if stat < 0:
        logger.warning("clamping likelihood-ratio statistic %.3g to 0", stat)
        stat = 0.0
    p = 1.0 if df == 0 or stat == 0 else chi_square_sf(stat, df)
    return TestResult(stat, df, p, "likelihood_ratio")
