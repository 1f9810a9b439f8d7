"""Monte Carlo harness: replicate simulate -> estimate and aggregate.

Config is a flat JSON object.  Common keys:

    mode        "css" (univariate, default) or "one-step" (multivariate)
    n           series length
    reps        replication count (>= 2)
    seed        master seed; replication k uses stream (seed, k)
    innovation  "gaussian" | "student-t" | "rademacher-mixture"
    df          student-t degrees of freedom (default 8)
    delta_range [lo, hi] admissible memory interval (required)
    grid_step, tol   optimizer knobs (optional)
    workers     process count (default 1; env FRACFIT_THREADS caps it)

"css" mode adds:

    model       "fd" | "farima:<p1>,d,<p2>" | "bloomfield:<p>"
    delta0      true memory parameter (scalar)
    phi0        true filter parameters (list, may be empty)
    sigma2      innovation variance (default 1)

"one-step" mode adds:

    blocks      list of per-series model strings
    restriction "unrestricted" | "common" | assignment list like [0, 1, 0]
    delta0      true free memory parameters (list)
    phi0        concatenated true filter parameters
    sigma0      innovation covariance matrix
    steps       Newton steps from the row-wise initial fits (default 1)

Replications are independent Philox streams keyed by (seed, replication), so
the report is invariant to the worker count and any scheduling order;
aggregation walks replication indices in order.  Non-converged fits are
counted, reported, and excluded from the moment summaries; an exclusion rate
above 2% flags the report.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from fracfit.asymptotics import info_matrix
from fracfit.css import AdmissibleSet, OptimizerOptions, estimate
from fracfit.filtering import ParamPoint
from fracfit.multivar import MvModel, matrix_B, one_step, restriction_from_spec
from fracfit.shortmem import from_string
from fracfit.simulate import INNOVATION_LAWS, MvSimSpec, SimSpec, simulate, simulate_mv

__all__ = ["McConfig", "McReport", "config_from_dict", "load_config", "run_mc", "resolve_workers"]

# Two-sided 95% normal quantile used for the Wald coverage counts.
Z_95 = 1.959963984540054

# Exclusion rates above this are flagged in the report.
EXCLUSION_FLAG_RATE = 0.02

_COMMON_KEYS = {
    "mode",
    "n",
    "reps",
    "seed",
    "innovation",
    "df",
    "delta_range",
    "grid_step",
    "tol",
    "workers",
    "delta0",
    "phi0",
}
_CSS_KEYS = _COMMON_KEYS | {"model", "sigma2"}
_MV_KEYS = _COMMON_KEYS | {"blocks", "restriction", "sigma0", "steps"}


@dataclass(frozen=True)
class McConfig:
    """Validated experiment design; see the module docstring for the schema."""

    mode: str
    n: int
    reps: int
    seed: int
    innovation: str
    df: float
    aset: AdmissibleSet
    options: OptimizerOptions
    workers: int = 1
    # css mode
    tau0: ParamPoint | None = None
    sigma2: float = 1.0
    # one-step mode
    model: MvModel | None = None
    delta0: np.ndarray | None = None
    phi0: np.ndarray | None = None
    sigma0: np.ndarray | None = None
    steps: int = 1

    def __post_init__(self):
        if self.mode not in ("css", "one-step"):
            raise ValueError(f"mode must be 'css' or 'one-step', got {self.mode!r}")
        if self.reps < 2:
            raise ValueError("reps must be at least 2")
        if self.n < 8:
            raise ValueError("n must be at least 8")
        if self.innovation not in INNOVATION_LAWS:
            raise ValueError(f"unknown innovation law {self.innovation!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.mode == "css":
            if self.tau0 is None:
                raise ValueError("css mode needs tau0")
        else:
            if self.model is None or self.delta0 is None or self.sigma0 is None:
                raise ValueError("one-step mode needs model, delta0, and sigma0")
            if self.steps < 1:
                raise ValueError("steps must be at least 1")

    @property
    def labels(self) -> list[str]:
        if self.mode == "css":
            return self.tau0.labels()
        return self.model.labels()

    @property
    def tau0_vector(self) -> np.ndarray:
        if self.mode == "css":
            return self.tau0.as_vector()
        return np.concatenate([self.delta0, self.phi0])


def config_from_dict(raw: dict) -> McConfig:
    """Build and validate an McConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    mode = str(raw.get("mode", "css"))
    if mode not in ("css", "one-step"):
        raise ValueError(f"mode must be 'css' or 'one-step', got {mode!r}")
    allowed = _CSS_KEYS if mode == "css" else _MV_KEYS
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("n", "reps", "delta_range"):
        if key not in raw:
            raise ValueError(f"config is missing required key {key!r}")
    rng = raw["delta_range"]
    if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
        raise ValueError("delta_range must be [lo, hi]")
    aset = AdmissibleSet(float(rng[0]), float(rng[1]))
    opt_kwargs = {}
    if "grid_step" in raw:
        opt_kwargs["grid_step"] = float(raw["grid_step"])
    if "tol" in raw:
        opt_kwargs["tol"] = float(raw["tol"])
    options = OptimizerOptions(**opt_kwargs)
    base = dict(
        mode=mode,
        n=int(raw["n"]),
        reps=int(raw["reps"]),
        seed=int(raw.get("seed", 0)),
        innovation=str(raw.get("innovation", "gaussian")),
        df=float(raw.get("df", 8.0)),
        aset=aset,
        options=options,
        workers=int(raw.get("workers", 1)),
    )
    if mode == "css":
        if "model" not in raw or "delta0" not in raw:
            raise ValueError("css mode needs 'model' and 'delta0'")
        spec = from_string(str(raw["model"]))
        tau0 = ParamPoint(float(raw["delta0"]), raw.get("phi0", []), spec)
        return McConfig(tau0=tau0, sigma2=float(raw.get("sigma2", 1.0)), **base)
    blocks = raw.get("blocks")
    if not isinstance(blocks, (list, tuple)) or not blocks:
        raise ValueError("one-step mode needs a nonempty 'blocks' list")
    specs = tuple(from_string(str(b)) for b in blocks)
    restriction = restriction_from_spec(raw.get("restriction", "unrestricted"), len(specs))
    model = MvModel(specs, restriction)
    delta0 = np.atleast_1d(np.asarray(raw["delta0"], float))
    phi0 = np.asarray(raw.get("phi0", []), float).reshape(-1)
    sigma0 = np.asarray(raw["sigma0"], float) if "sigma0" in raw else None
    if sigma0 is None:
        raise ValueError("one-step mode needs 'sigma0'")
    return McConfig(
        model=model,
        delta0=delta0,
        phi0=phi0,
        sigma0=sigma0,
        steps=int(raw.get("steps", 1)),
        **base,
    )


def load_config(path) -> McConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def resolve_workers(requested: int) -> int:
    """Apply the FRACFIT_THREADS cap, if set."""
    cap = os.environ.get("FRACFIT_THREADS", "").strip()
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            raise ValueError(f"FRACFIT_THREADS must be an integer, got {cap!r}") from None
    return requested


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo results.

    Moment summaries (mean/bias/sd/rmse, emp_cov, coverage) run over the
    retained replications only; the exclusion rate records how many fits were
    dropped for non-convergence, and ``flagged`` marks rates above 2%.
    ``row_deltas`` carries the per-series univariate memory estimates backing
    the one-step initial values (one-step mode only).
    """

    config: McConfig
    R: int
    labels: tuple[str, ...]
    estimates: np.ndarray
    ses: np.ndarray
    retained: np.ndarray
    mean: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    rmse: np.ndarray
    emp_cov: np.ndarray
    theory_cov: np.ndarray
    coverage: np.ndarray
    failures: int
    exclusion_rate: float
    flagged: bool
    row_deltas: np.ndarray | None = None


def _replicate_css(config: McConfig, rep: int):
    spec = SimSpec(
        n=config.n,
        tau0=config.tau0,
        innovation=config.innovation,
        sigma2=config.sigma2,
        df=config.df,
        seed=config.seed,
        replication=rep,
    )
    x, _ = simulate(spec)
    fit = estimate(x, config.tau0.spec, config.aset, config.options)
    return fit.tau_hat.as_vector(), fit.se, bool(fit.converged), None


def _replicate_mv(config: McConfig, rep: int):
    model = config.model
    spec = MvSimSpec(
        n=config.n,
        model=model,
        delta0=config.delta0,
        phi0=config.phi0,
        sigma0=config.sigma0,
        innovation=config.innovation,
        df=config.df,
        seed=config.seed,
        replication=rep,
    )
    X, _ = simulate_mv(spec)
    row_deltas = np.empty(model.r)
    row_phis = []
    ok = True
    for i in range(model.r):
        fit = estimate(X[i], model.blocks[i], config.aset, config.options)
        row_deltas[i] = fit.tau_hat.delta
        row_phis.append(fit.tau_hat.phi)
        ok = ok and fit.converged
    frak, *_ = np.linalg.lstsq(model.restriction.matrix, row_deltas, rcond=None)
    phi = np.concatenate(row_phis) if row_phis else np.empty(0)
    res = one_step(X, model, frak, phi, aset=config.aset, steps=config.steps)
    ok = ok and not res.projected
    return res.as_vector(), res.se, ok, row_deltas


def _replicate(args):
    config, rep = args
    worker = _replicate_css if config.mode == "css" else _replicate_mv
    try:
        return rep, worker(config, rep)
    except Exception as err:
        raise RuntimeError(
            f"replication {rep} (seed {config.seed}, stream {rep}) failed: {err}"
        ) from err


def _theory_cov(config: McConfig) -> np.ndarray:
    if config.mode == "css":
        A = info_matrix(config.tau0.spec, config.tau0.phi).A
        return np.linalg.inv(A)
    B = matrix_B(config.model, config.phi0, config.sigma0)
    return np.linalg.inv(B)


def run_mc(config: McConfig) -> McReport:
    """Run the experiment and aggregate; replication errors abort the run."""
    R = config.reps
    workers = resolve_workers(config.workers)
    jobs = [(config, rep) for rep in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_replicate, jobs, chunksize=max(1, R // (4 * workers))))
    else:
        raw = [_replicate(job) for job in jobs]
    raw.sort(key=lambda item: item[0])

    dim = config.tau0_vector.size
    estimates = np.empty((R, dim))
    ses = np.empty((R, dim))
    retained = np.zeros(R, dtype=bool)
    row_deltas = np.empty((R, config.model.r)) if config.mode == "one-step" else None
    for rep, (tau_vec, se_vec, ok, rows) in raw:
        estimates[rep] = tau_vec
        ses[rep] = se_vec
        retained[rep] = ok
        if row_deltas is not None:
            row_deltas[rep] = rows

    failures = int(R - retained.sum())
    if retained.sum() < 2:
        raise ValueError(f"only {int(retained.sum())} of {R} replications converged; nothing to summarize")
    kept = estimates[retained]
    kept_se = ses[retained]
    tau0 = config.tau0_vector
    mean = kept.mean(axis=0)
    bias = mean - tau0
    sd = kept.std(axis=0, ddof=1)
    rmse = np.sqrt(bias**2 + sd**2 * (kept.shape[0] - 1) / kept.shape[0])
    scaled = np.sqrt(config.n) * (kept - tau0)
    emp_cov = np.cov(scaled, rowvar=False).reshape(dim, dim)
    hits = np.abs(kept - tau0) <= Z_95 * kept_se
    coverage = hits.mean(axis=0)
    exclusion_rate = failures / R
    return McReport(
        config=config,
        R=R,
        labels=tuple(config.labels),
        estimates=estimates,
        ses=ses,
        retained=retained,
        mean=mean,
        bias=bias,
        sd=sd,
        rmse=rmse,
        emp_cov=emp_cov,
        theory_cov=_theory_cov(config),
        coverage=coverage,
        failures=failures,
        exclusion_rate=exclusion_rate,
        flagged=exclusion_rate > EXCLUSION_FLAG_RATE,
        row_deltas=row_deltas,
    )
