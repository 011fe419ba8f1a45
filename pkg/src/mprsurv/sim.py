"""Data generation and Monte-Carlo harnesses for Weibull MPR models.

Every replicate draws from its own counter-based stream keyed by
``(seed, replicate)``, so results do not depend on execution order and
replicates can be run in parallel.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import Dataset, DataError, design_from_arrays
from .exceptions import ConvergenceError, MPRError
from .model import fit

logger = logging.getLogger(__name__)

PILOT_DRAWS = 100_000
MAX_EXCLUDED = 0.05

# two independent binaries; scale then shape coefficients, intercept first
CORRELATION_BETA = (-3.0, -0.2, -2.3)
CORRELATION_ALPHA = (-0.2, 0.1, 0.5)
# ten independent binaries
SELECTION_BETA = (-1.5, -1.0, 1.0, 0.5, -0.5, 0.0, 0.0, -0.8, 0.5, 0.0, 0.0)
SELECTION_ALPHA = (0.5, 0.4, -0.4, 0.2, -0.2, 0.4, -0.2, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SimDesign:
    beta_true: tuple
    alpha_true: tuple
    n: int = 1000
    target_censoring: float = 0.2
    replicates: int = 100
    seed: int = 0
    bernoulli_p: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "alpha_true", tuple(float(a) for a in self.alpha_true))
        if len(self.beta_true) != len(self.alpha_true):
            raise DataError("beta_true and alpha_true must have the same length (x = z)")
        if not all(math.isfinite(v) for v in self.beta_true + self.alpha_true):
            raise DataError("true coefficients must be finite")
        if not 0 <= self.target_censoring <= 0.95:
            raise DataError("target_censoring must be in [0, 0.95]")
        if self.n < 1 or self.replicates < 1:
            raise DataError("n and replicates must be positive")
        if not 0 < self.bernoulli_p < 1:
            raise DataError("bernoulli_p must be in (0, 1)")

    @property
    def n_covariates(self) -> int:
        return len(self.beta_true) - 1

    @property
    def covariate_names(self) -> tuple:
        return tuple(f"x{k}" for k in range(1, self.n_covariates + 1))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent Philox stream for one replicate."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1, replicate))))


def pilot_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))


def generate_event_times(X, Z, beta, alpha, rng=None, u=None) -> np.ndarray:
    """Weibull MPR event times by inversion, ``T = (-log U / lam) ** (1 / gam)``.

    Pass ``u`` to supply the uniforms directly; otherwise they come from ``rng``.
    """
    lam = np.exp(np.asarray(X) @ np.asarray(beta, dtype=float))
    gam = np.exp(np.asarray(Z) @ np.asarray(alpha, dtype=float))
    if u is None:
        e = rng.standard_exponential(len(lam))
    else:
        e = -np.log(np.asarray(u, dtype=float))
    return (e / lam) ** (1.0 / gam)


def draw_covariates(design: SimDesign, n: int, rng) -> np.ndarray:
    """Design matrix (intercept first) of independent Bernoulli covariates."""
    B = (rng.random((n, design.n_covariates)) < design.bernoulli_p).astype(float)
    return np.column_stack([np.ones(n), B])


def censoring_fraction(rate: float, event_times) -> float:
    """Expected censored share ``mean(P(C < T))`` for ``C ~ Exp(rate)`` given event times."""
    if rate == 0:
        return 0.0
    return float(np.mean(-np.expm1(-rate * np.asarray(event_times))))


def calibrate_censoring(design: SimDesign, pilot_draws: int = PILOT_DRAWS) -> float:
    """Exponential censoring rate giving the design's target censored share.

    Solves ``mean(1 - exp(-r * T)) = target`` by bisection over a pilot
    sample of event times drawn from the design with a fixed stream.

    Raises
    ------
    DataError
        If the target cannot be reached.
    """
    target = design.target_censoring
    if not 0 <= target <= 0.95:
        raise DataError("target censoring must be in [0, 0.95]")
    if target == 0:
        return 0.0
    rng = pilot_rng(design.seed)
    X = draw_covariates(design, pilot_draws, rng)
    T = generate_event_times(X, X, design.beta_true, design.alpha_true, rng)
    T = T[np.isfinite(T)]
    if T.size == 0 or np.all(T == 0):
        raise DataError("censoring target unreachable: degenerate event-time distribution")
    scale = 1.0 / float(np.median(T))
    lo, hi = 0.0, scale
    while censoring_fraction(hi, T) < target:
        hi *= 2.0
        if hi > 1e300:
            raise DataError("censoring target unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if censoring_fraction(mid, T) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def simulate_replicate(design: SimDesign, rate: float, replicate: int):
    """One simulated sample: ``(X, time, status)`` with X including the intercept."""
    rng = replicate_rng(design.seed, replicate)
    X = draw_covariates(design, design.n, rng)
    T = generate_event_times(X, X, design.beta_true, design.alpha_true, rng)
    if rate > 0:
        C = rng.standard_exponential(design.n) / rate
        status = (T <= C).astype(np.int8)
        time = np.minimum(T, C)
    else:
        status = np.ones(design.n, dtype=np.int8)
        time = T
    return X, time, status


def replicate_dataset(design: SimDesign, rate: float, replicate: int) -> Dataset:
    X, time, status = simulate_replicate(design, rate, replicate)
    covs = {name: X[:, k + 1] for k, name in enumerate(design.covariate_names)}
    return Dataset.from_columns(time, status, covs)


def _check_exclusions(n_failed, total):
    if n_failed > MAX_EXCLUDED * total:
        raise ConvergenceError(f"{n_failed} of {total} replicates failed (more than 5%)")


def _map(func, items, n_jobs):
    if n_jobs == 1:
        return list(map(func, items))
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(func, items))


@dataclass
class CorrelationReport:
    design: SimDesign
    rate: float
    labels: tuple
    estimates: np.ndarray  # (kept replicates, 2 * (p + 1)) incl. intercepts
    standard_errors: np.ndarray
    kept: list
    failed: list
    achieved_censoring: float
    wall_time: float = 0.0

    @property
    def covariate_labels(self) -> tuple:
        return tuple(lab for lab in self.labels if "(Intercept)" not in lab)

    @property
    def correlation(self) -> np.ndarray:
        """Correlation matrix of covariate coefficients (intercepts omitted)."""
        keep = [j for j, lab in enumerate(self.labels) if "(Intercept)" not in lab]
        return np.corrcoef(self.estimates[:, keep], rowvar=False)


class _CorrelationTask:
    def __init__(self, design, rate):
        self.design, self.rate = design, rate

    def __call__(self, r):
        X, time, status = simulate_replicate(self.design, self.rate, r)
        censored = 1.0 - status.mean()
        try:
            res = fit(design_from_arrays(time, status, X, X))
        except MPRError as exc:
            logger.warning("replicate %d failed: %s", r, exc)
            return r, None, None, censored
        if not res.converged:
            return r, None, None, censored
        return r, res.theta, res.standard_errors, censored


def run_correlation_study(design: SimDesign, n_jobs: int = 1) -> CorrelationReport:
    """Fit the full MPR model to each replicate and collect the coefficient estimates."""
    start = _time.perf_counter()
    rate = calibrate_censoring(design)
    results = _map(_CorrelationTask(design, rate), range(design.replicates), n_jobs)
    kept = [r for r, th, _, _ in results if th is not None]
    failed = [r for r, th, _, _ in results if th is None]
    _check_exclusions(len(failed), design.replicates)
    est = np.array([th for _, th, _, _ in results if th is not None])
    ses = np.array([se for _, th, se, _ in results if th is not None])
    names = ("(Intercept)",) + design.covariate_names
    labels = tuple(f"scale:{n}" for n in names) + tuple(f"shape:{n}" for n in names)
    return CorrelationReport(design, rate, labels, est, ses, kept, failed,
                             float(np.mean([c for *_, c in results])),
                             _time.perf_counter() - start)


@dataclass
class FrequencyReport:
    design: SimDesign
    criterion: str
    rate: float
    covariates: tuple
    scale_frequency: np.ndarray
    shape_frequency: np.ndarray
    selections: list  # per kept replicate: (replicate, scale terms, shape terms)
    failed: list
    achieved_censoring: float
    wall_time: float = 0.0

    @property
    def seeds(self) -> dict:
        return {"seed": self.design.seed, "replicates": list(range(self.design.replicates))}

    def frequencies(self) -> dict:
        return {
            c: (float(s), float(z))
            for c, s, z in zip(self.covariates, self.scale_frequency, self.shape_frequency)
        }


class _SelectionTask:
    def __init__(self, design, rate, criterion):
        self.design, self.rate, self.criterion = design, rate, criterion

    def __call__(self, r):
        from .selection import step_mpr

        ds = replicate_dataset(self.design, self.rate, r)
        censored = 1.0 - ds.status.mean()
        try:
            trace = step_mpr(ds, self.design.covariate_names, self.criterion)
        except MPRError as exc:
            logger.warning("replicate %d failed: %s", r, exc)
            return r, None, censored
        return r, (trace.final_spec.scale_terms, trace.final_spec.shape_terms), censored


def run_selection_study(design: SimDesign, criterion="aic", n_jobs: int = 1) -> FrequencyReport:
    """Run stagewise selection on every replicate and tabulate selection frequencies."""
    start = _time.perf_counter()
    rate = calibrate_censoring(design)
    results = _map(_SelectionTask(design, rate, criterion), range(design.replicates), n_jobs)
    kept = [(r, sel) for r, sel, _ in results if sel is not None]
    failed = [r for r, sel, _ in results if sel is None]
    _check_exclusions(len(failed), design.replicates)
    names = design.covariate_names
    in_scale = np.array([[c in sel[0] for c in names] for _, sel in kept], dtype=float)
    in_shape = np.array([[c in sel[1] for c in names] for _, sel in kept], dtype=float)
    return FrequencyReport(
        design, str(getattr(criterion, "name", criterion)), rate, names,
        in_scale.mean(axis=0), in_shape.mean(axis=0),
        [(r, list(sel[0]), list(sel[1])) for r, sel in kept], failed,
        float(np.mean([c for *_, c in results])), _time.perf_counter() - start,
    )


def design_to_dict(design: SimDesign) -> dict:
    d = asdict(design)
    d["beta_true"] = list(design.beta_true)
    d["alpha_true"] = list(design.alpha_true)
    return d


@dataclass(frozen=True)
class StudyConfig:
    """A simulation study: one design per censoring level, shared everything else."""

    study: str
    beta_true: tuple
    alpha_true: tuple
    n: tuple = (1000,)
    censoring: tuple = (0.2, 0.5, 0.8)
    replicates: int = 100
    seed: int = 0
    criteria: tuple = ("aic",)
    bernoulli_p: float = 0.5
    n_jobs: int = 1

    def designs(self):
        for n in self.n:
            for cens in self.censoring:
                yield SimDesign(self.beta_true, self.alpha_true, n, cens,
                                self.replicates, self.seed, self.bernoulli_p)


def study_config(raw: dict) -> StudyConfig:
    """Validate a config mapping (e.g. parsed JSON) into a :class:`StudyConfig`."""
    raw = dict(raw)
    study = raw.pop("study", None)
    if study not in ("correlation", "selection"):
        raise DataError("config 'study' must be 'correlation' or 'selection'")
    defaults = {
        "correlation": (CORRELATION_BETA, CORRELATION_ALPHA),
        "selection": (SELECTION_BETA, SELECTION_ALPHA),
    }[study]
    known = {"beta_true", "alpha_true", "n", "censoring", "replicates", "seed", "criteria",
             "bernoulli_p", "n_jobs"}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def as_tuple(v):
        return tuple(v) if isinstance(v, (list, tuple)) else (v,)

    cfg = StudyConfig(
        study,
        tuple(raw.get("beta_true", defaults[0])),
        tuple(raw.get("alpha_true", defaults[1])),
        tuple(int(v) for v in as_tuple(raw.get("n", 1000))),
        tuple(float(v) for v in as_tuple(raw.get("censoring", (0.2, 0.5, 0.8)))),
        int(raw.get("replicates", 100)),
        int(raw.get("seed", 0)),
        tuple(str(c).lower() for c in as_tuple(raw.get("criteria", "aic"))),
        float(raw.get("bernoulli_p", 0.5)),
        int(raw.get("n_jobs", 1)),
    )
    for c in cfg.criteria:
        if c not in ("aic", "bic", "lrt"):
            raise DataError(f"unknown criterion {c!r}")
    list(cfg.designs())  # validates every scenario up front
    return cfg


# -- synthetic dataset with the layout of a registry lung-cancer cohort -------------

_FACTORS = {
    # name: (levels, probabilities, scale effects, shape effects); first level = reference
    "treatment": (("Palliative", "Surgery", "Chemo", "Radio", "C+R"),
                  (0.42, 0.10, 0.08, 0.30, 0.10),
                  (0.0, -3.0, -0.45, -1.1, -2.6), (0.0, 0.45, 0.05, 0.30, 0.75)),
    "age_group": (("<60", "60-69", "70-79", "80+"), (0.2, 0.35, 0.32, 0.13),
                  (0.0, 0.05, 0.15, 0.3), (0.0, 0.0, 0.0, 0.0)),
    "who_status": (("0-1", "2", "3-4", "Missing"), (0.45, 0.25, 0.2, 0.1),
                   (0.0, 0.5, 1.1, 0.4), (0.0, 0.0, 0.0, 0.0)),
    "sex": (("Male", "Female"), (0.65, 0.35), (0.0, -0.05), (0.0, 0.0)),
    "smoker": (("Current", "Ex", "Never", "Missing"), (0.5, 0.3, 0.1, 0.1),
               (0.0, -0.05, -0.15, 0.0), (0.0, 0.05, 0.1, 0.0)),
    "cell_type": (("Squamous", "Small", "Adeno", "Large", "Missing"),
                  (0.35, 0.2, 0.15, 0.1, 0.2), (0.0, 0.35, 0.15, 0.2, 0.1), (0.0,) * 5),
    "metastases": (("No", "Yes", "Missing"), (0.5, 0.35, 0.15), (0.0, 0.6, 0.3), (0.0, 0.1, 0.05)),
    "sodium": (("Normal", "Low", "Missing"), (0.6, 0.15, 0.25), (0.0, 0.35, 0.05), (0.0,) * 3),
    "albumen": (("Normal", "Low", "Missing"), (0.55, 0.2, 0.25), (0.0, 0.4, 0.1), (0.0, 0.05, 0.0)),
}
_LUNG_SCALE_INTERCEPT = -2.3
_LUNG_SHAPE_INTERCEPT = -0.2


def simulate_lung_like(n: int = 855, seed: int = 1991) -> str:
    """CSV text for a synthetic cohort of ``n`` subjects with nine categorical covariates.

    Times are in months with administrative censoring between 8 and 20
    months of follow-up; "Missing" appears as empty cells.
    """
    rng = replicate_rng(seed, 0)
    cols, eta, zeta = {}, np.full(n, _LUNG_SCALE_INTERCEPT), np.full(n, _LUNG_SHAPE_INTERCEPT)
    for name, (levels, probs, b, a) in _FACTORS.items():
        idx = rng.choice(len(levels), size=n, p=probs)
        cols[name] = [("" if levels[i] == "Missing" else levels[i]) for i in idx]
        eta += np.asarray(b)[idx]
        zeta += np.asarray(a)[idx]
    T = (rng.standard_exponential(n) / np.exp(eta)) ** (1.0 / np.exp(zeta))
    follow_up = rng.uniform(8.0, 20.0, n)
    time = np.maximum(np.round(np.minimum(T, follow_up), 3), 0.001)
    status = (T <= follow_up).astype(int)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["time", "status", *cols])
    for i in range(n):
        w.writerow([f"{time[i]:.3f}", status[i], *(cols[c][i] for c in cols)])
    return out.getvalue()


def with_censoring(design: SimDesign, target: float) -> SimDesign:
    return replace(design, target_censoring=target)
