"""Command-line front end: fit, simulate, mc, and coeffs subcommands.

Exit codes: 0 on success (fit: converged), 2 when a fit did not meet the
convergence criteria (the report is still written), 1 on input errors.
stdout carries only the written report path, or the JSON itself with
--stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from fracfit.css import AdmissibleSet, OptimizerOptions, estimate
from fracfit.filtering import ParamPoint
from fracfit.fraccoef import frac_coeffs
from fracfit.mc import load_config, run_mc
from fracfit.multivar import MvModel, one_step, restriction_from_spec
from fracfit.report import (
    fit_figure,
    fit_report_dict,
    mc_figure,
    mc_report_dict,
    mv_report_dict,
    read_series_csv,
    write_estimates_csv,
    write_report,
    write_series_csv,
)
from fracfit.shortmem import check_admissible, from_string
from fracfit.simulate import INNOVATION_LAWS, SimSpec, simulate

__all__ = ["main"]


def _parse_delta_range(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"delta range must be 'lo,hi', got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ValueError(f"delta range must be numeric, got {text!r}") from None
    return lo, hi


def _parse_floats(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_restriction(text: str, r: int):
    name = text.strip()
    if name.lower().startswith("map:"):
        asg = name[4:].split(",")
        try:
            return restriction_from_spec([int(tok) for tok in asg], r)
        except ValueError as err:
            raise ValueError(f"bad restriction map {text!r}: {err}") from None
    return restriction_from_spec(name, r)


def _optimizer_options(args) -> OptimizerOptions:
    kwargs = {}
    if args.grid_step is not None:
        kwargs["grid_step"] = args.grid_step
    if args.tol is not None:
        kwargs["tol"] = args.tol
    return OptimizerOptions(**kwargs)


def _clamped_phi_start(spec, phi_start, aset) -> np.ndarray | None:
    if phi_start is None:
        return None
    phi = np.asarray(_parse_floats(phi_start), float)
    if phi.size != spec.param_dim:
        raise ValueError(f"phi start has {phi.size} entries but the filter takes {spec.param_dim}")
    phi = aset.clip_phi(phi)
    clamped = False
    for _ in range(60):
        ok, _why = check_admissible(spec, phi, aset.root_margin)
        if ok:
            break
        phi = 0.9 * phi
        clamped = True
    else:
        raise ValueError("could not clamp phi start into the admissible region")
    if clamped:
        print("warning: phi start outside the admissible region; clamped", file=sys.stderr)
    return phi


def _emit(report: dict, out_path: Path, args) -> None:
    if args.stdout:
        from fracfit.report import dumps_report

        sys.stdout.write(dumps_report(report))
        if args.output:
            write_report(report, out_path)
    else:
        write_report(report, out_path)
        print(out_path)


def cmd_fit(args) -> int:
    lo, hi = _parse_delta_range(args.delta_range)
    aset = AdmissibleSet(lo, hi)
    opts = _optimizer_options(args)
    X = read_series_csv(args.input)
    out_path = Path(args.output) if args.output else Path(args.input).with_suffix(".fit.json")

    if args.restriction:
        r = X.shape[0]
        spec = from_string(args.model)
        model = MvModel((spec,) * r, _parse_restriction(args.restriction, r))
        row_deltas = np.empty(r)
        row_phis = []
        for i in range(r):
            fit = estimate(X[i], model.blocks[i], aset, opts)
            row_deltas[i] = fit.tau_hat.delta
            row_phis.append(fit.tau_hat.phi)
        frak, *_ = np.linalg.lstsq(model.restriction.matrix, row_deltas, rcond=None)
        phi = np.concatenate(row_phis) if row_phis else np.empty(0)
        res = one_step(X, model, frak, phi, aset=aset)
        report = mv_report_dict(res, model, n=X.shape[1], delta_range=(lo, hi))
        if res.projected:
            print("warning: one-step estimate projected back into the admissible set", file=sys.stderr)
        _emit(report, out_path, args)
        if args.figures:
            print("warning: figures are only rendered for univariate fits", file=sys.stderr)
        return 2 if res.projected else 0

    if X.shape[0] > 1 and args.column is None:
        raise ValueError(f"{args.input} has {X.shape[0]} columns; pick one with --column")
    column = 1 if args.column is None else args.column
    if not (1 <= column <= X.shape[0]):
        raise ValueError(f"--column {column} out of range 1..{X.shape[0]}")
    x = X[column - 1]
    spec = from_string(args.model)
    phi_start = _clamped_phi_start(spec, args.phi_start, aset)
    fit = estimate(x, spec, aset, opts, phi_start=phi_start)
    for note in fit.warnings:
        print(f"warning: {note}", file=sys.stderr)
    report = fit_report_dict(fit, n=len(x), delta_range=(lo, hi))
    _emit(report, out_path, args)
    if args.figures:
        fig_path = out_path.with_suffix(".png")
        fit_figure(fit, fig_path)
        if not args.stdout:
            print(fig_path)
    return 0 if fit.converged else 2


def cmd_simulate(args) -> int:
    spec = from_string(args.model)
    tau0 = ParamPoint(args.delta0, _parse_floats(args.phi0), spec)
    sim = SimSpec(
        n=args.n,
        tau0=tau0,
        innovation=args.innovation,
        sigma2=args.sigma2,
        df=args.df,
        seed=args.seed,
        replication=args.replication,
    )
    x, _ = simulate(sim)
    write_series_csv(x, args.output)
    print(args.output)
    return 0


def cmd_mc(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    report = run_mc(cfg)
    base = Path(args.output) if args.output else Path(args.config).with_suffix(".mc")
    json_path = base.with_suffix(base.suffix + ".json")
    csv_path = base.with_suffix(base.suffix + ".csv")
    doc = mc_report_dict(report)
    if report.flagged:
        print(
            f"warning: exclusion rate {report.exclusion_rate:.1%} exceeds 2%; summaries may be biased",
            file=sys.stderr,
        )
    if args.stdout:
        from fracfit.report import dumps_report

        sys.stdout.write(dumps_report(doc))
    write_report(doc, json_path)
    write_estimates_csv(report, csv_path)
    if not args.stdout:
        print(json_path)
        print(csv_path)
    if args.figures:
        png_path = base.with_suffix(base.suffix + ".png")
        mc_figure(report, png_path)
        if not args.stdout:
            print(png_path)
    return 0


def cmd_coeffs(args) -> int:
    weights = frac_coeffs(args.zeta, args.m)
    print(", ".join("%.12g" % c for c in weights.coeffs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracfit",
        description="Fractional time series estimation by conditional sum of squares.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    fit = sub.add_parser("fit", help="estimate a model from a CSV series")
    fit.add_argument("--input", required=True, help="CSV series file (one column per series)")
    fit.add_argument("--output", help="report path (default: <input>.fit.json)")
    fit.add_argument("--model", required=True, help="fd | farima:<p1>,d,<p2> | bloomfield:<p>")
    fit.add_argument(
        "--delta-range",
        required=True,
        help="admissible memory interval 'lo,hi' (use --delta-range=-1,2 for negatives)",
    )
    fit.add_argument("--column", type=int, help="1-based column to fit (univariate)")
    fit.add_argument("--grid-step", type=float, help="memory grid step (default 0.05)")
    fit.add_argument("--tol", type=float, help="gradient tolerance (default 1e-8)")
    fit.add_argument("--phi-start", help="comma-separated filter parameter start")
    fit.add_argument(
        "--restriction",
        help="multivariate: unrestricted | common | map:<i1>,<i2>,... (fits all columns)",
    )
    fit.add_argument("--stdout", action="store_true", help="print the JSON report to stdout")
    fit.add_argument("--figures", action="store_true", help="render the objective profile to PNG")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="generate a series to CSV")
    sim.add_argument("--model", required=True)
    sim.add_argument("--delta0", type=float, required=True, help="true memory parameter")
    sim.add_argument("--phi0", default="", help="true filter parameters, comma-separated")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--innovation", default="gaussian", choices=INNOVATION_LAWS)
    sim.add_argument("--sigma2", type=float, default=1.0)
    sim.add_argument("--df", type=float, default=8.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--replication", type=int, default=0)
    sim.add_argument("--output", required=True, help="CSV path to write")
    sim.set_defaults(func=cmd_simulate)

    mc = sub.add_parser("mc", help="run a Monte Carlo experiment from a JSON config")
    mc.add_argument("--config", required=True, help="JSON experiment config")
    mc.add_argument("--output", help="output base path (default: <config>.mc)")
    mc.add_argument("--reps", type=int, help="override replication count")
    mc.add_argument("--seed", type=int, help="override master seed")
    mc.add_argument("--workers", type=int, help="override worker count (capped by FRACFIT_THREADS)")
    mc.add_argument("--stdout", action="store_true", help="print the JSON report to stdout")
    mc.add_argument("--figures", action="store_true", help="render standardized histograms to PNG")
    mc.set_defaults(func=cmd_mc)

    co = sub.add_parser("coeffs", help="print fractional filter coefficients")
    co.add_argument("--zeta", type=float, required=True)
    co.add_argument("--m", type=int, required=True)
    co.set_defaults(func=cmd_coeffs)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # argparse reads a negative lower bound ("--delta-range -1,2") as a new
    # option; merge the pair so the space form works like the = form.
    for i, tok in enumerate(argv[:-1]):
        if tok == "--delta-range" and argv[i + 1].startswith("-"):
            argv[i : i + 2] = [f"--delta-range={argv[i + 1]}"]
            break
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
