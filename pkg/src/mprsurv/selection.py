"""Stagewise variable selection over scale and shape components.

Starting from a model ``M(x, z)`` (the null model by default), every
iteration evaluates each legal single move: adding a covariate to the scale,
to the shape, or to both, and in stagewise mode removing it from the scale,
the shape, or both. The best criterion-improving move is accepted; the
search stops when no move improves. Factors enter and leave as whole dummy
blocks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, ModelSpec, encode_design
from .exceptions import ConvergenceError, DataError, MPRError
from .inference import likelihood_ratio_test
from .model import FitOptions, FittedModel, fit, initial_theta

logger = logging.getLogger(__name__)

COMPONENTS = ("scale", "shape", "both")


@dataclass(frozen=True)
class Criterion:
    """Model-comparison rule: ``"aic"``, ``"bic"`` or ``"lrt"`` at level ``alpha``."""

    name: str = "aic"
    alpha: float = 0.05

    def __post_init__(self):
        if self.name not in ("aic", "bic", "lrt"):
            raise DataError(f"unknown criterion {self.name!r}")
        if not 0 < self.alpha < 1:
            raise DataError("alpha must be in (0, 1)")

    @classmethod
    def coerce(cls, value) -> "Criterion":
        if isinstance(value, Criterion):
            return value
        return cls(str(value).lower())

    def value(self, fitted: FittedModel) -> float:
        """Scalar recorded in traces (AIC for the LRT rule)."""
        return fitted.bic if self.name == "bic" else fitted.aic


@dataclass(frozen=True)
class Comparison:
    better: bool
    margin: float
    p_value: float | None = None


def compare_models(current: FittedModel, candidate: FittedModel, criterion) -> Comparison:
    """Decide whether ``candidate`` improves on ``current``.

    Information criteria need a strict decrease; the margin is the decrease.
    The LRT rule applies to nested pairs only: an added term must be
    significant (p < alpha) and a removed term must not be (p > alpha).
    """
    criterion = Criterion.coerce(criterion)
    if not (current.converged and candidate.converged):
        raise ConvergenceError("model comparison needs two converged fits")
    if criterion.name != "lrt":
        margin = criterion.value(current) - criterion.value(candidate)
        return Comparison(margin > 0, margin)
    if current.spec.is_nested_in(candidate.spec) and current.spec != candidate.spec:
        p = likelihood_ratio_test(candidate, current).p_value
        return Comparison(p < criterion.alpha, criterion.alpha - p, p)
    if candidate.spec.is_nested_in(current.spec):
        p = likelihood_ratio_test(current, candidate).p_value
        return Comparison(p > criterion.alpha, p - criterion.alpha, p)
    raise DataError("likelihood-ratio comparison requested for non-nested models")


@dataclass(frozen=True)
class Step:
    iteration: int
    direction: str
    component: str
    covariate: str
    criterion_before: float
    criterion_after: float
    accepted: bool
    p_value: float | None = None
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "direction": self.direction,
            "component": self.component,
            "covariate": self.covariate,
            "criterion_before": self.criterion_before,
            "criterion_after": self.criterion_after,
            "accepted": self.accepted,
            "p_value": self.p_value,
            "note": self.note,
        }


@dataclass
class SelectionTrace:
    criterion: Criterion
    steps: list = field(default_factory=list)
    final_spec: ModelSpec | None = None
    final_fit: FittedModel | None = None
    iterations: int = 0
    hit_iteration_limit: bool = False

    @property
    def accepted(self) -> list:
        return [s for s in self.steps if s.accepted]

    def log_lines(self) -> list:
        lines = []
        for s in self.steps:
            mark = "*" if s.accepted else " "
            after = "failed" if math.isnan(s.criterion_after) else f"{s.criterion_after:.3f}"
            extra = f"  p={s.p_value:.4g}" if s.p_value is not None else ""
            note = f"  ({s.note})" if s.note else ""
            lines.append(
                f"{mark} iter {s.iteration:>2}  {s.direction:<8} {s.component:<5} "
                f"{s.covariate:<20} {s.criterion_before:.3f} -> {after}{extra}{note}"
            )
        return lines


def legal_moves(spec: ModelSpec, candidates: Sequence[str], forward_only: bool = False,
                components=COMPONENTS):
    """Yield ``(direction, component, covariate)`` in tie-breaking order."""
    x, z = set(spec.scale_terms), set(spec.shape_terms)
    for c in candidates:
        for comp in components:
            if comp == "scale":
                inside = c in x
            elif comp == "shape":
                inside = c in z
            else:
                if (c in x) != (c in z):
                    continue
                inside = c in x
            if not inside:
                yield "forward", comp, c
            elif not forward_only:
                yield "backward", comp, c


def apply_move(spec: ModelSpec, move, order: Sequence[str]) -> ModelSpec:
    direction, comp, c = move
    x, z = set(spec.scale_terms), set(spec.shape_terms)
    op = set.add if direction == "forward" else set.discard
    if comp in ("scale", "both"):
        op(x, c)
    if comp in ("shape", "both"):
        op(z, c)
    rank = {name: i for i, name in enumerate(order)}
    key = lambda t: (rank.get(t, len(rank)), t)  # noqa: E731
    return spec.with_terms(sorted(x, key=key), sorted(z, key=key))


def warm_start(previous: FittedModel, d) -> np.ndarray:
    """Start values for design ``d`` copied from ``previous`` by column label; new entries 0."""
    old = previous.coefficients()
    return np.array([old.get(lab, 0.0) for lab in d.column_labels])


class _Fitter:
    def __init__(self, ds, options):
        self.ds = ds
        self.options = options or FitOptions()
        self.cache = {}

    def __call__(self, spec: ModelSpec, previous: FittedModel | None):
        key = (spec.scale_terms, spec.shape_terms)
        if key not in self.cache:
            try:
                d = encode_design(self.ds, spec)
                start = initial_theta(d) if previous is None else warm_start(previous, d)
                opts = FitOptions(self.options.tol_grad, self.options.tol_loglik,
                                  self.options.max_iter, self.options.max_halvings, start)
                result = fit(d, opts)
                if not result.converged and previous is not None:
                    # a poor warm start can stall; retry from the default start
                    result = fit(d, FitOptions(self.options.tol_grad, self.options.tol_loglik,
                                               self.options.max_iter, self.options.max_halvings))
                self.cache[key] = result
            except MPRError as exc:
                self.cache[key] = exc
        return self.cache[key]


def step_mpr(ds: Dataset, candidates: Sequence[str], criterion="aic", forward_only: bool = False,
             start: ModelSpec | None = None, components=COMPONENTS,
             options: FitOptions | None = None, max_iter: int | None = None) -> SelectionTrace:
    """Stagewise (or forward-only) selection over the scale/shape model lattice.

    Parameters
    ----------
    ds : Dataset
    candidates : sequence of str
        Covariates eligible for selection; their order breaks ties.
    criterion : {"aic", "bic", "lrt"} or Criterion
    forward_only : bool
        Only evaluate additions, as in plain forward selection.
    start : ModelSpec, optional
        Starting model (default: the null model). Its reference levels are
        used for every fit.
    components : tuple
        Restrict move components, e.g. ``("scale",)`` for PH-only selection.
    max_iter : int, optional
        Hard iteration bound; defaults to ``6 * len(candidates)``.
    """
    criterion = Criterion.coerce(criterion)
    candidates = list(dict.fromkeys(candidates))
    if not candidates:
        raise DataError("no candidate covariates")
    unknown = [c for c in candidates if c not in ds.covariates]
    if unknown:
        raise DataError(f"unknown candidate covariates: {', '.join(unknown)}")
    bad = [c for c in components if c not in COMPONENTS]
    if bad:
        raise DataError(f"unknown components: {bad}")
    max_iter = 6 * len(candidates) if max_iter is None else max_iter

    fitter = _Fitter(ds, options)
    spec = start or ModelSpec()
    current = fitter(spec, None)
    if isinstance(current, Exception) or not current.converged:
        raise ConvergenceError("the starting model could not be fitted")

    trace = SelectionTrace(criterion)
    order = candidates + [t for t in spec.scale_terms + spec.shape_terms if t not in candidates]
    for it in range(1, max_iter + 1):
        trace.iterations = it
        before = criterion.value(current)
        best = None
        attempts = []
        for move in legal_moves(spec, candidates, forward_only, components):
            cand_spec = apply_move(spec, move, order)
            result = fitter(cand_spec, current)
            if isinstance(result, Exception) or not result.converged:
                why = str(result) if isinstance(result, Exception) else "did not converge"
                logger.warning("skipping %s %s %s: %s", *move, why)
                attempts.append([move, math.nan, None, why])
                continue
            cmp = compare_models(current, result, criterion)
            attempts.append([move, criterion.value(result), cmp.p_value, ""])
            if cmp.better and (best is None or cmp.margin > best[1].margin):
                best = (len(attempts) - 1, cmp, cand_spec, result)
        for j, (move, after, p, note) in enumerate(attempts):
            trace.steps.append(Step(it, *move, before, after,
                                    best is not None and j == best[0], p, note))
        if best is None:
            break
        spec, current = best[2], best[3]
    else:
        trace.hit_iteration_limit = True
        logger.warning("selection stopped at the iteration bound (%d)", max_iter)

    trace.final_spec = spec
    trace.final_fit = current
    return trace
