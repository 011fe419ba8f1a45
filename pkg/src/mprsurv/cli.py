"""Command-line interface.

Exit codes: 0 success, 1 usage/input error, 2 non-convergence, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time as _time

import numpy as np

from . import __version__, curves, inference, report, sim
from .data import DataError, ModelSpec, encode_design, read_dataset
from .exceptions import ConvergenceError, MPRError, NumericalError, RankDeficiencyError
from .model import FitOptions, fit, weibull_survival
from .selection import Criterion, step_mpr

logger = logging.getLogger("mprsurv")

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _terms(text):
    if text is None:
        return ()
    terms = tuple(t.strip() for t in text.split(",") if t.strip())
    return () if terms == ("1",) else terms


def _references(items):
    refs = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--reference expects NAME=LEVEL, got {item!r}")
        name, level = item.split("=", 1)
        refs[name.strip()] = level.strip()
    return refs


def _type_hints(args):
    hints = {c: "categorical" for c in _terms(getattr(args, "categorical", None))}
    hints.update({c: "numeric" for c in _terms(getattr(args, "numeric", None))})
    return hints


def _load(args):
    if not os.path.exists(args.input):
        raise FileNotFoundError(f"input file not found: {args.input}")
    return read_dataset(args.input, args.time, args.status, _type_hints(args))


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _add_data_args(p, model_terms=True):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--time", default="time", help="follow-up time column (default: time)")
    p.add_argument("--status", default="status", help="event indicator column, 1 = event")
    p.add_argument("--categorical", help="comma-separated columns forced categorical")
    p.add_argument("--numeric", help="comma-separated columns forced numeric")
    p.add_argument("--reference", action="append", metavar="NAME=LEVEL",
                   help="reference level for a categorical covariate (repeatable)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    if model_terms:
        p.add_argument("--scale", help="comma-separated scale covariates; '1' = intercept only")
        p.add_argument("--shape", help="comma-separated shape covariates; '1' = intercept only")


def _spec(args):
    return ModelSpec(_terms(args.scale), _terms(args.shape), _references(args.reference))


def _scalar_joint_labels(fitted):
    scale = {c.label for c in fitted.design.scale_columns[1:]}
    return [c.label for c in fitted.design.shape_columns[1:] if c.label in scale]


def _joint_covariates(fitted):
    scale = {c.covariate for c in fitted.design.scale_columns[1:]}
    return [t for t in fitted.spec.shape_terms if t in scale]


def cmd_fit(args) -> int:
    ds = _load(args)
    spec = _spec(args)
    options = FitOptions(max_iter=args.max_iter)
    fitted = fit(encode_design(ds, spec), options)
    fits = {"MPR": fitted}
    tests = []
    if fitted.converged:
        for lab in fitted.design_labels:
            if not lab.endswith("(Intercept)"):
                tests.append(inference.wald_single(fitted, lab))
        for cov in _joint_covariates(fitted):
            tests.append(inference.wald_joint(fitted, cov))
    ph = None
    if args.ph:
        ph = fit(encode_design(ds, spec.with_terms(shape_terms=())), options)
        fits["PH"] = ph
        if fitted.converged and ph.converged and spec.shape_terms:
            lrt = inference.likelihood_ratio_test(fitted, ph)
            tests.append(inference.TestResult(lrt.statistic, lrt.df, lrt.p_value, lrt.kind,
                                              "MPR vs PH"))

    out = _outdir(args)
    text = [f"n = {ds.n}, events = {int(ds.status.sum())}", "", report.coefficient_table(fits)]
    if tests:
        text += ["", report.tests_table(tests)]
    ellipse_rows = []
    if fitted.converged:
        for lab in _scalar_joint_labels(fitted):
            ell = inference.confidence_ellipse(fitted, lab, args.level, args.n_points)
            ellipse_rows += [
                {"label": lab, "level": args.level, "point": k, "beta": b, "alpha": a}
                for k, (b, a) in enumerate(ell.boundary)
            ]
    report.write_csv(os.path.join(out, "ellipses.csv"),
                     ["label", "level", "point", "beta", "alpha"], ellipse_rows)
    record = {"models": {name: report.fit_record(f) for name, f in fits.items()},
              "tests": [t.as_dict() for t in tests]}
    report.write_json(os.path.join(out, "fit.json"), record)
    with open(os.path.join(out, "fit_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(text) + "\n")
    print("\n".join(text))
    if not all(f.converged for f in fits.values()):
        print("error: model did not converge", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_step(args) -> int:
    ds = _load(args)
    candidates = list(_terms(args.candidates)) if args.candidates else list(ds.names)
    criterion = Criterion(args.criterion, args.alpha)
    components = ("scale",) if args.ph_only else ("scale", "shape", "both")
    trace = step_mpr(ds, candidates, criterion, forward_only=args.forward_only,
                     start=ModelSpec(reference_levels=_references(args.reference)),
                     components=components)
    out = _outdir(args)
    log = trace.log_lines()
    with open(os.path.join(out, "trace.log"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(log) + "\n")
    report.write_json(os.path.join(out, "trace.json"), report.trace_record(trace, candidates))
    text = [report.selection_table(trace, candidates), "",
            report.coefficient_table({"selected": trace.final_fit})]
    with open(os.path.join(out, "selection_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(text) + "\n")
    print("\n".join(log))
    print()
    print("\n".join(text))
    return EXIT_OK


def _hr_labels(fitted, covariate):
    labels = [c.label for c in fitted.design.scale_columns[1:]
              if c.label == covariate or c.covariate == covariate]
    if not labels:
        raise DataError(f"{covariate!r} is not in the scale component")
    return labels


def cmd_hr(args) -> int:
    ds = _load(args)
    fitted = fit(encode_design(ds, _spec(args)))
    if not fitted.converged:
        raise ConvergenceError("model did not converge")
    if args.times:
        times = np.array([float(t) for t in args.times.split(",")])
    else:
        times = curves.default_time_grid(fitted, args.grid)
    rows, summary = [], []
    for lab in _hr_labels(fitted, args.covariate):
        if args.average:
            curve = curves.hazard_ratio_averaged(fitted, lab, ds, times, args.level)
            tc = None
        else:
            curve = curves.hazard_ratio(fitted, lab, None, times, args.level)
            tc = curve.crossing_time
        rows += list(curve.rows())
        summary.append({"covariate": lab, "crossing_time": tc, "policy": curve.z_tilde_policy,
                        "level": args.level})
    out = _outdir(args)
    report.write_csv(os.path.join(out, "hr.csv"),
                     ["covariate", "time", "estimate", "lower", "upper"], rows)
    report.write_json(os.path.join(out, "hr.json"), {"curves": summary})
    for s in summary:
        tc = "none" if s["crossing_time"] is None else f"{s['crossing_time']:.4g}"
        print(f"{s['covariate']}: crossing time {tc} ({s['policy']})")
    return EXIT_OK


def cmd_km(args) -> int:
    ds = _load(args)
    groups = [("all", np.ones(ds.n, dtype=bool))]
    if args.by:
        cov = ds[args.by]
        if not cov.is_categorical:
            raise DataError(f"--by column {args.by!r} must be categorical")
        groups = [(lv, cov.values == lv) for lv in cov.levels]
    rows = []
    curves_by_group = {}
    for name, mask in groups:
        km = curves.kaplan_meier(ds.time[mask], ds.status[mask]) if ds.status[mask].any() else None
        curves_by_group[name] = km
        if km is None:
            continue
        rows += [{"group": name, "time": t, "at_risk": r, "events": e, "survival": s}
                 for t, r, e, s in zip(km.event_times, km.at_risk, km.n_events, km.survival)]
    out = _outdir(args)
    report.write_csv(os.path.join(out, "km.csv"),
                     ["group", "time", "at_risk", "events", "survival"], rows)
    if args.scale is not None or args.shape is not None:
        fitted = fit(encode_design(ds, _spec(args)))
        if not fitted.converged:
            raise ConvergenceError("model did not converge")
        grid = np.linspace(0.0, float(ds.time.max()), args.grid)
        d = fitted.design
        lam = np.exp(d.X @ fitted.beta)
        gam = np.exp(d.Z @ fitted.alpha)
        model_rows = []
        for name, mask in groups:
            # average of subject-level survivor curves within the group
            surv = np.mean([weibull_survival(lm, gm, grid) for lm, gm in zip(lam[mask], gam[mask])],
                           axis=0)
            model_rows += [{"group": name, "time": t, "survival": s} for t, s in zip(grid, surv)]
        report.write_csv(os.path.join(out, "km_model.csv"), ["group", "time", "survival"],
                         model_rows)
    for name, km in curves_by_group.items():
        if km is not None:
            print(f"{name}: {len(km.event_times)} event times, final S = {km.survival[-1]:.4f}")
    return EXIT_OK


def _study_config(args):
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{args.config}: invalid JSON ({exc})") from None
    else:
        if not args.study:
            raise UsageError("simulate needs --config or --study")
        raw = {"study": args.study}
    for key, value in (("seed", args.seed), ("replicates", args.replicates)):
        if value is not None:
            raw[key] = value
    if args.n:
        raw["n"] = [int(v) for v in args.n.split(",")]
    if args.censoring:
        raw["censoring"] = [float(v) for v in args.censoring.split(",")]
    if args.criterion:
        raw["criteria"] = [c.strip() for c in args.criterion.split(",")]
    return raw, sim.study_config(raw)


def cmd_simulate(args) -> int:
    raw, cfg = _study_config(args)
    out = _outdir(args)
    start = _time.perf_counter()
    manifest = {"version": __version__, "config": {**raw, "study": cfg.study},
                "design": {"beta_true": list(cfg.beta_true), "alpha_true": list(cfg.alpha_true),
                           "bernoulli_p": cfg.bernoulli_p,
                           "censoring_mechanism": "independent exponential"},
                "seed": cfg.seed, "scenarios": []}
    rows = []
    for design in cfg.designs():
        scen = f"n={design.n},p={design.target_censoring:g}"
        if cfg.study == "correlation":
            rep = sim.run_correlation_study(design, cfg.n_jobs)
            labels = rep.covariate_labels
            corr = rep.correlation
            rows += [{"scenario": scen, "n": design.n, "target_censoring": design.target_censoring,
                      "row": labels[i], "col": labels[j], "correlation": corr[i, j]}
                     for i in range(len(labels)) for j in range(len(labels))]
            manifest["scenarios"].append({
                "scenario": scen, "censoring_rate": rep.rate,
                "achieved_censoring": rep.achieved_censoring,
                "replicates": list(range(design.replicates)), "excluded": rep.failed,
                "wall_time": rep.wall_time,
            })
        else:
            for crit in cfg.criteria:
                rep = sim.run_selection_study(design, crit, cfg.n_jobs)
                rows += [{"scenario": scen, "n": design.n,
                          "target_censoring": design.target_censoring,
                          "achieved_censoring": rep.achieved_censoring, "criterion": crit,
                          "covariate": c, "scale_frequency": s, "shape_frequency": z}
                         for c, (s, z) in rep.frequencies().items()]
                manifest["scenarios"].append({
                    "scenario": scen, "criterion": crit, "censoring_rate": rep.rate,
                    "achieved_censoring": rep.achieved_censoring,
                    "replicates": list(range(design.replicates)), "excluded": rep.failed,
                    "wall_time": rep.wall_time,
                })
    if cfg.study == "correlation":
        report.write_csv(os.path.join(out, "correlation.csv"),
                         ["scenario", "n", "target_censoring", "row", "col", "correlation"], rows)
    else:
        report.write_csv(os.path.join(out, "frequencies.csv"),
                         ["scenario", "n", "target_censoring", "achieved_censoring", "criterion",
                          "covariate", "scale_frequency", "shape_frequency"], rows)
    manifest["wall_time"] = _time.perf_counter() - start
    report.write_json(os.path.join(out, "manifest.json"), manifest)
    print(f"wrote {len(rows)} rows for {len(manifest['scenarios'])} scenario(s) to {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    text = sim.simulate_lung_like(args.n, args.seed)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(f"wrote {args.n} rows to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mprsurv", description="Weibull multi-parameter regression survival models")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model and report coefficients, tests and ellipses")
    _add_data_args(p)
    p.add_argument("--ph", action="store_true", help="also fit the shape-intercept-only (PH) model")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--n-points", type=int, default=100, help="points per confidence ellipse")
    p.add_argument("--max-iter", type=int, default=100, help="Newton iteration limit")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("step", help="stagewise scale/shape variable selection")
    _add_data_args(p, model_terms=False)
    p.add_argument("--candidates", help="comma-separated candidates (default: all covariates)")
    p.add_argument("--criterion", choices=("aic", "bic", "lrt"), default="aic")
    p.add_argument("--alpha", type=float, default=0.05, help="LRT significance level")
    p.add_argument("--forward-only", action="store_true")
    p.add_argument("--ph-only", action="store_true", help="scale steps only")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("hr", help="hazard-ratio curves with delta-method bands")
    _add_data_args(p)
    p.add_argument("--covariate", required=True, help="column label or factor name")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--grid", type=int, default=100, help="number of grid points")
    p.add_argument("--times", help="comma-separated time points (overrides --grid)")
    p.add_argument("--average", action="store_true",
                   help="average over the empirical distribution of other shape covariates")
    p.set_defaults(func=cmd_hr)

    p = sub.add_parser("km", help="Kaplan-Meier curves, optionally with model overlays")
    _add_data_args(p)
    p.add_argument("--by", help="categorical column defining groups")
    p.add_argument("--grid", type=int, default=100)
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--config", help="JSON study config")
    p.add_argument("--study", choices=("correlation", "selection"))
    p.add_argument("--n", help="comma-separated sample sizes")
    p.add_argument("--censoring", help="comma-separated censoring targets")
    p.add_argument("--replicates", type=int)
    p.add_argument("--criterion", help="comma-separated criteria for selection studies")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="write the bundled-style synthetic cohort as CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--n", type=int, default=855)
    p.add_argument("--seed", type=int, default=1991)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (NumericalError, RankDeficiencyError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, MPRError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"input error: unknown name {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
