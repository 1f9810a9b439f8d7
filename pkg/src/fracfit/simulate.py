"""Type-II fractional process generation with reproducible streams.

Generation mirrors the residual filter exactly: innovations are drawn for
t = 1..n only, passed through the truncated short-memory filter, then through
the truncated fractional integration filter.  No burn-in exists or is needed;
pre-sample values are identically zero, which is what makes
``residuals(simulate(tau0), tau0)`` return the drawn innovations to round-off.

Streams are counter-based (Philox) and keyed by (seed, replication), so any
replication can be regenerated in isolation and parallel schedules cannot
change the numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fracfit.fraccoef import frac_coeffs
from fracfit.filtering import ParamPoint, trunc_filter
from fracfit.shortmem import expand

__all__ = [
    "SimSpec",
    "MvSimSpec",
    "INNOVATION_LAWS",
    "rng_stream",
    "draw_innovations",
    "simulate",
    "simulate_mv",
]

INNOVATION_LAWS = ("gaussian", "student-t", "rademacher-mixture")

# Scales of the two-point mixture law: with probability 1/2 the innovation is
# +-_MIX_A, else +-_MIX_B, signs symmetric; variances average to one.
_MIX_A = 0.5
_MIX_B = math.sqrt(1.75)


@dataclass(frozen=True)
class SimSpec:
    """Configuration of one univariate replication."""

    n: int
    tau0: ParamPoint
    innovation: str = "gaussian"
    sigma2: float = 1.0
    df: float = 8.0
    seed: int = 0
    replication: int = 0

    def __post_init__(self):
        _validate_innovation(self.innovation, self.sigma2, self.df)
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class MvSimSpec:
    """Configuration of one multivariate replication.

    delta0 holds the free memory parameters (length model.q); sigma0 is the
    innovation covariance, factorized once per call.
    """

    n: int
    model: "fracfit.multivar.MvModel"
    delta0: np.ndarray
    phi0: np.ndarray
    sigma0: np.ndarray
    innovation: str = "gaussian"
    df: float = 8.0
    seed: int = 0
    replication: int = 0

    def __post_init__(self):
        object.__setattr__(self, "delta0", np.atleast_1d(np.asarray(self.delta0, float)))
        object.__setattr__(self, "phi0", np.asarray(self.phi0, float).reshape(-1))
        object.__setattr__(self, "sigma0", np.asarray(self.sigma0, float))
        _validate_innovation(self.innovation, 1.0, self.df)
        if self.n < 1:
            raise ValueError("n must be positive")


def _validate_innovation(law: str, sigma2: float, df: float) -> None:
    if law not in INNOVATION_LAWS:
        raise ValueError(f"unknown innovation law {law!r}; choose one of {INNOVATION_LAWS}")
    if not (sigma2 > 0 and np.isfinite(sigma2)):
        raise ValueError("sigma2 must be positive and finite")
    if law == "student-t" and df < 5:
        raise ValueError("student-t needs df >= 5 for a finite fourth moment")


def rng_stream(seed: int, replication: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replication)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, replication], dtype=np.uint64)))


def draw_innovations(gen: np.random.Generator, law: str, size, *, sigma2: float = 1.0, df: float = 8.0) -> np.ndarray:
    """Draw zero-mean innovations with variance sigma2 under the given law."""
    if law == "gaussian":
        out = gen.standard_normal(size)
    elif law == "student-t":
        out = gen.standard_t(df, size) * math.sqrt((df - 2.0) / df)
    elif law == "rademacher-mixture":
        # Draw order is fixed (scales then signs) so streams stay reproducible.
        pick = gen.random(size) < 0.5
        signs = gen.integers(0, 2, size) * 2.0 - 1.0
        out = np.where(pick, _MIX_A, _MIX_B) * signs
    else:
        raise ValueError(f"unknown innovation law {law!r}")
    return math.sqrt(sigma2) * out


def simulate(spec: SimSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generate one series; returns (x, innovations).

    x = Delta^{-delta0} theta(L) eps under full truncation, computed with the
    same truncated convolutions the residual filter inverts.
    """
    gen = rng_stream(spec.seed, spec.replication)
    eps = draw_innovations(gen, spec.innovation, spec.n, sigma2=spec.sigma2, df=spec.df)
    tau = spec.tau0
    exp = expand(tau.spec, tau.phi, spec.n - 1)
    u = trunc_filter(exp.theta, eps)
    x = trunc_filter(frac_coeffs(tau.delta, spec.n - 1).coeffs, u)
    return x, eps


def simulate_mv(spec: MvSimSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generate an r-variate system; returns (X, innovations), both (r, n).

    Row i is integrated at delta_i as given by the model's restriction map
    applied to delta0; innovations are sigma0-correlated via its lower
    Cholesky factor.
    """
    model = spec.model
    r, n = model.r, spec.n
    if spec.sigma0.shape != (r, r):
        raise ValueError(f"sigma0 must be ({r}, {r})")
    try:
        chol = np.linalg.cholesky(spec.sigma0)
    except np.linalg.LinAlgError as err:
        raise ValueError("sigma0 must be symmetric positive definite") from err
    gen = rng_stream(spec.seed, spec.replication)
    z = draw_innovations(gen, spec.innovation, (r, n), df=spec.df)
    eps = chol @ z
    deltas = model.restriction.apply(spec.delta0)
    X = np.empty((r, n))
    for i, (block, params) in enumerate(zip(model.blocks, model.split_phi(spec.phi0))):
        exp = expand(block, params, n - 1)
        u = trunc_filter(exp.theta, eps[i])
        X[i] = trunc_filter(frac_coeffs(deltas[i], n - 1).coeffs, u)
    return X, eps
