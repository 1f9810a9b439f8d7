"""Report serialization: JSON fit/MC reports, CSV series files, figures.

Output is deliberately reproducible: JSON keys are sorted and carry no
timestamps, CSV floats use 17 significant digits (exact binary roundtrip),
and figures are rendered on the Agg backend with metadata stripped, so a
repeated run with the same inputs produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from fracfit.asymptotics import info_matrix
from fracfit.css import FitResult
from fracfit.mc import McReport
from fracfit.multivar import MvModel, MvStepResult
from fracfit.shortmem import to_model_string

__all__ = [
    "SCHEMA_VERSION",
    "write_series_csv",
    "read_series_csv",
    "fit_report_dict",
    "mv_report_dict",
    "mc_report_dict",
    "dumps_report",
    "write_report",
    "write_estimates_csv",
    "fit_figure",
    "mc_figure",
]

SCHEMA_VERSION = 1

_FLOAT_FMT = "%.17g"


def _fmt(value: float) -> str:
    return _FLOAT_FMT % float(value)


def write_series_csv(X, path) -> None:
    """Write series columns y1..yr with a header row."""
    X = np.atleast_2d(np.asarray(X, float))
    r, n = X.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{i + 1}" for i in range(r)])
        for t in range(n):
            writer.writerow([_fmt(X[i, t]) for i in range(r)])


def read_series_csv(path) -> np.ndarray:
    """Read a series file into an (r, n) array, one series per column.

    The header row is optional and auto-detected (any cell that does not
    parse as a number).  Cells must be finite; errors carry the 1-based row
    and column of the offending cell.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"{path}: no data rows")

    def parse_row(row, rownum):
        out = []
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"{path}: row {rownum}, column {j + 1}: could not parse {cell.strip()!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"{path}: row {rownum}, column {j + 1}: non-finite value {cell.strip()!r}")
            out.append(value)
        return out

    def looks_numeric(row):
        try:
            [float(cell) for cell in row]
        except ValueError:
            return False
        return True

    start = 0 if looks_numeric(rows[0]) else 1
    if start == 1 and len(rows) == 1:
        raise ValueError(f"{path}: header only, no data rows")
    width = len(rows[start])
    data = []
    for idx in range(start, len(rows)):
        row = rows[idx]
        if len(row) != width:
            raise ValueError(f"{path}: row {idx + 1} has {len(row)} cells, expected {width}")
        data.append(parse_row(row, idx + 1))
    return np.asarray(data, float).T


def _as_list(arr) -> list:
    return np.asarray(arr, float).tolist()


def _labeled(labels, values) -> dict:
    return {label: float(v) for label, v in zip(labels, values)}


def fit_report_dict(fit: FitResult, *, n: int, delta_range) -> dict:
    """JSON-ready summary of a univariate fit.

    Headline standard errors come from the asymptotic information matrix
    evaluated at the estimate (inv(A)/n); the Hessian-based observed ones are
    reported alongside.
    """
    tau = fit.tau_hat
    labels = tau.labels()
    warnings = list(fit.warnings)
    report = {
        "schema": SCHEMA_VERSION,
        "kind": "fit",
        "model": to_model_string(tau.spec),
        "n": int(n),
        "delta_range": [float(delta_range[0]), float(delta_range[1])],
        "labels": list(labels),
        "estimates": _labeled(labels, tau.as_vector()),
        "objective": float(fit.objective),
        "sigma2": float(fit.sigma2_hat),
        "converged": bool(fit.converged),
        "boundary": bool(fit.boundary),
        "newton_iters": int(fit.newton_iters),
        "hessian": fit.hessian_kind,
        "standard_errors_observed": _labeled(labels, fit.se),
        "covariance_observed": _as_list(fit.cov),
        "grid": {
            "delta": [d for d, _ in fit.grid_trace],
            "objective": [v for _, v in fit.grid_trace],
        },
    }
    im = info_matrix(tau.spec, tau.phi)
    if im.singular:
        warnings.append("asymptotic information matrix singular at the estimate")
    else:
        cov_theory = im.covariance / n
        report["standard_errors"] = _labeled(labels, np.sqrt(np.diag(cov_theory)))
        report["covariance_theory_scaled"] = _as_list(im.covariance)
    report["warnings"] = warnings
    return report


def mv_report_dict(res: MvStepResult, model: MvModel, *, n: int, delta_range) -> dict:
    """JSON-ready summary of a multivariate one-step fit."""
    labels = model.labels()
    return {
        "schema": SCHEMA_VERSION,
        "kind": "fit-multivariate",
        "blocks": [to_model_string(b) for b in model.blocks],
        "restriction_matrix": _as_list(model.restriction.matrix),
        "n": int(n),
        "delta_range": [float(delta_range[0]), float(delta_range[1])],
        "labels": list(labels),
        "estimates": _labeled(labels, res.as_vector()),
        "standard_errors": _labeled(labels, res.se),
        "covariance": _as_list(res.cov),
        "innovation_covariance": _as_list(res.Sigma_n),
        "H_condition": float(res.H_cond),
        "projected": bool(res.projected),
        "newton_steps": int(res.steps),
    }


def _mc_config_dict(report: McReport) -> dict:
    cfg = report.config
    out = {
        "mode": cfg.mode,
        "n": cfg.n,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "innovation": cfg.innovation,
        "df": cfg.df,
        "delta_range": [cfg.aset.delta_lo, cfg.aset.delta_hi],
        "grid_step": cfg.options.grid_step,
        "tol": cfg.options.tol,
        "workers": cfg.workers,
    }
    if cfg.mode == "css":
        out["model"] = to_model_string(cfg.tau0.spec)
        out["delta0"] = float(cfg.tau0.delta)
        out["phi0"] = _as_list(cfg.tau0.phi)
        out["sigma2"] = cfg.sigma2
    else:
        out["blocks"] = [to_model_string(b) for b in cfg.model.blocks]
        out["restriction_matrix"] = _as_list(cfg.model.restriction.matrix)
        out["delta0"] = _as_list(cfg.delta0)
        out["phi0"] = _as_list(cfg.phi0)
        out["sigma0"] = _as_list(cfg.sigma0)
        out["steps"] = cfg.steps
    return out


def mc_report_dict(report: McReport) -> dict:
    """JSON-ready Monte Carlo summary with both covariance targets labeled."""
    labels = report.labels
    return {
        "schema": SCHEMA_VERSION,
        "kind": "mc",
        "config": _mc_config_dict(report),
        "labels": list(labels),
        "R": report.R,
        "retained": int(report.retained.sum()),
        "failures": report.failures,
        "exclusion_rate": float(report.exclusion_rate),
        "exclusion_flagged": bool(report.flagged),
        "mean": _labeled(labels, report.mean),
        "bias": _labeled(labels, report.bias),
        "sd": _labeled(labels, report.sd),
        "rmse": _labeled(labels, report.rmse),
        "coverage_95": _labeled(labels, report.coverage),
        "empirical_covariance_scaled": _as_list(report.emp_cov),
        "theory_covariance_scaled": _as_list(report.theory_cov),
        "theory_source": "A-inverse" if report.config.mode == "css" else "B-inverse",
    }


def dumps_report(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_report(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(obj))


def write_estimates_csv(report: McReport, path) -> None:
    """Per-replication estimates and standard errors, one row per stream."""
    labels = list(report.labels)
    header = ["rep", "retained"] + labels + [f"se_{lab}" for lab in labels]
    if report.row_deltas is not None:
        header += [f"row{i + 1}_delta" for i in range(report.row_deltas.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rep in range(report.R):
            row = [str(rep), str(int(report.retained[rep]))]
            row += [_fmt(v) for v in report.estimates[rep]]
            row += [_fmt(v) for v in report.ses[rep]]
            if report.row_deltas is not None:
                row += [_fmt(v) for v in report.row_deltas[rep]]
            writer.writerow(row)


def _get_pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def fit_figure(fit: FitResult, path) -> None:
    """Objective profile over the delta grid with the refined estimate."""
    plt = _get_pyplot()
    deltas = [d for d, _ in fit.grid_trace]
    values = [v for _, v in fit.grid_trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(deltas, values, marker=".", lw=1.0, label="grid profile")
    ax.axvline(fit.tau_hat.delta, color="C3", lw=1.0, ls="--", label="estimate")
    ax.set_xlabel("memory parameter")
    ax.set_ylabel("objective")
    ax.set_title(f"profile, {to_model_string(fit.tau_hat.spec)}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def mc_figure(report: McReport, path) -> None:
    """Standardized estimate histograms against the standard normal."""
    plt = _get_pyplot()
    labels = list(report.labels)
    dim = len(labels)
    kept = report.estimates[report.retained]
    tau0 = report.config.tau0_vector
    scale = np.sqrt(np.diag(report.theory_cov))
    fig, axes = plt.subplots(1, dim, figsize=(4.0 * dim, 3.2), squeeze=False)
    grid = np.linspace(-4.0, 4.0, 201)
    pdf = np.exp(-0.5 * grid**2) / math.sqrt(2.0 * math.pi)
    for u, ax in enumerate(axes[0]):
        z = math.sqrt(report.config.n) * (kept[:, u] - tau0[u]) / scale[u]
        ax.hist(z, bins=24, density=True, alpha=0.6)
        ax.plot(grid, pdf, color="C3", lw=1.2)
        ax.set_title(labels[u])
        ax.set_xlim(-4.0, 4.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
