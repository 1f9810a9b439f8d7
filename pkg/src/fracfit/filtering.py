"""Truncated residual filtering for type-II fractional processes.

The residual at parameter tau = (delta, phi) is

    eps_t(tau) = Delta^delta theta^{-1}(L; phi) x_t,    t = 1..n,

with all pre-sample values treated as zero, so every filter is a truncated
convolution using at most t - 1 lags.  The memory-parameter derivative runs
through the operator identity log(1 - L) = -sum_{j>=1} L^j / j, giving

    d eps_t / d delta = -sum_{j=1}^{t-1} eps_{t-j}(tau) / j,

and the short-memory derivatives reuse the expansion derivatives of the
inverse filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fracfit.fraccoef import convolve_trunc, frac_coeffs, log_weights
from fracfit.shortmem import ShortMemSpec, check_admissible, expand

__all__ = [
    "ParamPoint",
    "ResidualPath",
    "residuals",
    "cj_weights",
    "trunc_filter",
    "log_filter",
]


@dataclass(frozen=True)
class ParamPoint:
    """A parameter point tau = (delta, phi) for a given short-memory family."""

    delta: float
    phi: np.ndarray
    spec: ShortMemSpec

    def __post_init__(self):
        object.__setattr__(self, "phi", np.atleast_1d(np.asarray(self.phi, dtype=float)))
        if self.phi.shape != (self.spec.param_dim,):
            raise ValueError(
                f"phi has shape {self.phi.shape}, spec {self.spec.describe()} "
                f"needs ({self.spec.param_dim},)"
            )
        if not np.isfinite(self.delta):
            raise ValueError("delta must be finite")

    @property
    def dim(self) -> int:
        return 1 + self.spec.param_dim

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.delta], self.phi])

    def labels(self) -> list[str]:
        if self.spec.param_dim == 0:
            return ["delta"]
        if self.spec.kind == "arma":
            p1, p2 = self.spec.orders
            names = [f"ar{i + 1}" for i in range(p1)] + [f"ma{i + 1}" for i in range(p2)]
        else:
            names = [f"c{i + 1}" for i in range(self.spec.param_dim)]
        return ["delta"] + names


@dataclass(frozen=True)
class ResidualPath:
    """Residuals eps_1..eps_n and, on request, their tau-derivatives.

    deps has shape (1+p, n) with the delta row first; d2eps has shape
    (1+p, 1+p, n).
    """

    eps: np.ndarray
    deps: np.ndarray | None = None
    d2eps: np.ndarray | None = None


def trunc_filter(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y_t = sum_{j=0}^{t-1} coeffs_j x_{t-j}: truncated one-sided filter."""
    n = len(x)
    return np.convolve(coeffs[:n], x)[:n]


def log_filter(y: np.ndarray) -> np.ndarray:
    """Apply log(1 - L) under truncation: out_t = -sum_{j=1}^{t-1} y_{t-j} / j."""
    n = len(y)
    kernel = np.zeros(n)
    if n > 1:
        kernel[1:] = -log_weights(n - 1)
    return trunc_filter(kernel, y)


def _validate_series(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("x must be a nonempty one-dimensional series")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    return x


def residuals(x, tau: ParamPoint, derivs: int = 0) -> ResidualPath:
    """Residual path eps_t(tau) with optional analytic derivatives.

    Parameters
    ----------
    x : array-like
        Observed series, length n >= 1.
    tau : ParamPoint
    derivs : {0, 1, 2}
        Derivative level: 1 fills deps, 2 also fills d2eps.

    Notes
    -----
    The inverse short-memory filter is applied first, then fractional
    differencing; the two orders agree under truncation and the composite
    equals convolution with the cj_weights sequence.
    """
    x = _validate_series(x)
    n = len(x)
    exp = expand(tau.spec, tau.phi, n - 1, derivs)
    a_minus_delta = frac_coeffs(-tau.delta, n - 1).coeffs
    w = trunc_filter(exp.phi, x)
    eps = trunc_filter(a_minus_delta, w)
    if derivs == 0:
        return ResidualPath(eps=eps)

    p = tau.spec.param_dim
    deps = np.empty((1 + p, n))
    deps[0] = log_filter(eps)
    for i in range(p):
        deps[1 + i] = trunc_filter(a_minus_delta, trunc_filter(exp.dphi[i], x))
    if derivs == 1:
        return ResidualPath(eps=eps, deps=deps)

    d2eps = np.empty((1 + p, 1 + p, n))
    d2eps[0, 0] = log_filter(deps[0])
    for i in range(p):
        cross = log_filter(deps[1 + i])
        d2eps[0, 1 + i] = cross
        d2eps[1 + i, 0] = cross
        for l in range(i, p):
            block = trunc_filter(a_minus_delta, trunc_filter(exp.d2phi[i, l], x))
            d2eps[1 + i, 1 + l] = block
            d2eps[1 + l, 1 + i] = block
    return ResidualPath(eps=eps, deps=deps, d2eps=d2eps)


def cj_weights(tau: ParamPoint, m: int) -> np.ndarray:
    """Data weights of the residual filter: eps_t = sum_{j<t} c_j x_{t-j}.

    c = phi-expansion convolved with frac_coeffs(-delta), c_0 = 1.
    """
    exp = expand(tau.spec, tau.phi, m, 0)
    return convolve_trunc(exp.phi, frac_coeffs(-tau.delta, m), m)
