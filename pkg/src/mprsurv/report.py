"""Text and machine-readable renderings of fits, tests, curves and traces."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .data import INTERCEPT


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def fit_record(fit) -> dict:
    """JSON-serializable summary of a :class:`~mprsurv.model.FittedModel`."""
    se = fit.standard_errors
    return {
        "coefficients": [
            {"label": lab, "estimate": _num(est), "se": _num(s)}
            for lab, est, s in zip(fit.design_labels, fit.theta, se)
        ],
        "covariance": [[_num(v) for v in row] for row in fit.covariance],
        "loglik": fit.loglik,
        "aic": fit.aic,
        "bic": fit.bic,
        "n": fit.n,
        "p": fit.p,
        "q": fit.q,
        "n_params": fit.n_params,
        "scale_terms": list(fit.spec.scale_terms),
        "shape_terms": list(fit.spec.shape_terms),
        "reference_levels": {
            name: enc.reference for name, enc in fit.design.encodings.items() if enc.is_categorical
        },
        "convergence": {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "max_abs_score": _num(fit.max_abs_score),
        },
    }


def coefficient_table(fits: dict) -> str:
    """Side-by-side scale/shape coefficient table with standard errors in brackets.

    ``fits`` maps a column heading (e.g. ``"MPR"``, ``"PH"``) to a fitted model.
    """
    rows = []
    for fit in fits.values():
        for c in fit.design.scale_columns + fit.design.shape_columns:
            if c.label not in rows:
                rows.append(c.label)
    rows.sort(key=lambda lab: lab != INTERCEPT)

    def cell(fit, comp, label):
        labels = fit.design_labels
        key = f"{comp}:{label}"
        if key not in labels:
            return "------", ""
        j = labels.index(key)
        return f"{fit.theta[j]:.2f}", f"({fit.standard_errors[j]:.2f})"

    width = max([len(r) for r in rows] + [9])
    head1 = " " * width + "".join(f"  {name:^33}" for name in fits)
    head2 = " " * width + "  " + "  ".join(f"{'Scale':^16}{'Shape':^17}" for _ in fits)
    lines = [head1, head2]
    for label in rows:
        parts = [f"{label:<{width}}"]
        for fit in fits.values():
            for comp in ("scale", "shape"):
                est, se = cell(fit, comp, label)
                parts.append(f"{est:>8} {se:<8}")
        lines.append("  ".join(parts))
    lines.append("")
    for key in ("loglik", "aic", "bic"):
        name = {"loglik": "loglik", "aic": "AIC", "bic": "BIC"}[key]
        vals = "".join(f"  {getattr(f, key):^33.1f}" for f in fits.values())
        lines.append(f"{name:<{width}}{vals}")
    conv = "".join(
        f"  {('converged' if f.converged else 'NOT CONVERGED') + f' ({f.iterations} it)':^33}"
        for f in fits.values()
    )
    lines.append(f"{'status':<{width}}{conv}")
    return "\n".join(lines)


def tests_table(results) -> str:
    lines = [f"{'test':<32}{'kind':<18}{'statistic':>11}{'df':>5}{'p-value':>12}"]
    for r in results:
        note = f"  [{r.note}]" if r.note else ""
        lines.append(
            f"{r.label:<32}{r.kind:<18}{r.statistic:>11.3f}{r.df:>5}{r.p_value:>12.4g}{note}"
        )
    return "\n".join(lines)


def selection_table(trace, candidates) -> str:
    """Per-covariate markers: beta = selected in scale, alpha = selected in shape."""
    spec = trace.final_spec
    lines = [f"{'covariate':<20}selected"]
    for c in candidates:
        marks = [m for m, inside in (("beta", c in spec.scale_terms), ("alpha", c in spec.shape_terms)) if inside]
        lines.append(f"{c:<20}{','.join(marks) if marks else '---'}")
    f = trace.final_fit
    lines.append("")
    lines.append(f"{trace.criterion.name.upper()} of selected model: "
                 f"{(f.bic if trace.criterion.name == 'bic' else f.aic):.1f}")
    return "\n".join(lines)


def trace_record(trace, candidates) -> dict:
    return {
        "criterion": trace.criterion.name,
        "alpha": trace.criterion.alpha if trace.criterion.name == "lrt" else None,
        "iterations": trace.iterations,
        "hit_iteration_limit": trace.hit_iteration_limit,
        "steps": [s.as_dict() for s in trace.steps],
        "selected": {
            c: {"scale": c in trace.final_spec.scale_terms, "shape": c in trace.final_spec.shape_terms}
            for c in candidates
        },
        "final_fit": fit_record(trace.final_fit),
    }


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None:
        return ""
    return str(v)


def write_csv(path, fieldnames, rows):
    """Write tidy CSV (header row, ``.`` decimals, UTF-8)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in fieldnames])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
