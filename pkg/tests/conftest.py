import numpy as np
import pytest

from mprsurv import model
from mprsurv.data import design_from_arrays


def simulate_design(n, beta, alpha, seed, censor_rate=0.0, numeric=False):
    """Weibull MPR sample with x = z; covariates binary (or standard normal)."""
    rng = np.random.default_rng(seed)
    p = len(beta) - 1
    B = rng.normal(size=(n, p)) if numeric else (rng.random((n, p)) < 0.5).astype(float)
    X = np.column_stack([np.ones(n), B])
    lam = np.exp(X @ np.asarray(beta, float))
    gam = np.exp(X @ np.asarray(alpha, float))
    T = (rng.standard_exponential(n) / lam) ** (1.0 / gam)
    if censor_rate > 0:
        C = rng.standard_exponential(n) / censor_rate
        status = (T <= C).astype(int)
        time = np.minimum(T, C)
    else:
        status = np.ones(n, dtype=int)
        time = T
    if status.sum() == 0:
        status[0] = 1
    return design_from_arrays(time, status, X, X)


def fake_fit(theta, cov, labels=("(Intercept)", "c"), loglik=0.0, converged=True):
    """FittedModel with prescribed estimates and covariance on a tiny design."""
    k = len(labels)
    n = 5
    X = np.column_stack([np.ones(n)] + [np.arange(n) % 2 + j for j in range(k - 1)])
    d = design_from_arrays(np.arange(1.0, n + 1), np.ones(n), X, X, labels, labels)
    th = model.Theta.split(np.asarray(theta, float), d)
    return model.FittedModel(th, loglik, np.asarray(cov, float), n, k - 1, k - 1, converged, 1, d)


@pytest.fixture
def small_design():
    return simulate_design(200, [-1.0, 0.5, -0.3], [0.1, 0.3, -0.2], seed=11, censor_rate=0.3)


def two_covariate_dataset(seed, n=1000, censoring_rate=0.25, effect=(-1.0, 0.4)):
    """Strong scale+shape covariate x1 alongside a null covariate x9."""
    from mprsurv.data import Dataset

    rng = np.random.default_rng(seed)
    x1 = (rng.random(n) < 0.5).astype(float)
    x9 = (rng.random(n) < 0.5).astype(float)
    lam = np.exp(-1.0 + effect[0] * x1)
    gam = np.exp(0.2 + effect[1] * x1)
    T = (rng.standard_exponential(n) / lam) ** (1 / gam)
    C = rng.standard_exponential(n) / censoring_rate
    return Dataset.from_columns(np.minimum(T, C), (T <= C).astype(int), {"x1": x1, "x9": x9})


def lattice_optimum(ds, candidates, criterion):
    """Best (scale, shape) pair over every model in the candidates' scale/shape lattice."""
    from itertools import chain, combinations

    from mprsurv.data import ModelSpec, encode_design

    def subsets(items):
        return chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))

    best = None
    for x in subsets(candidates):
        for z in subsets(candidates):
            f = model.fit(encode_design(ds, ModelSpec(x, z)))
            assert f.converged
            value = f.bic if criterion == "bic" else f.aic
            if best is None or value < best[0]:
                best = (value, (set(x), set(z)))
    return best
