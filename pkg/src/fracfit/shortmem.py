"""Parametric short-memory filters and their truncated expansions.

Three parameterizations of the one-sided filter theta(L) with theta_0 = 1:

* ARMA(p1, p2): theta(s) = beta(s) / alpha(s) with alpha(s) = 1 - sum alpha_k s^k
  and beta(s) = 1 + sum beta_k s^k, parameter layout (alpha_1..alpha_p1,
  beta_1..beta_p2).
* Bloomfield(p): theta(s) = exp(sum_{l<=p} c_l s^l).
* Identity: theta(s) = 1, no parameters.

``expand`` returns the expansion coefficients of theta, of the inverse filter
phi = 1/theta, and (on request) their first derivatives plus the second
derivatives of phi in the parameters.  Derivatives come from closed-form
series identities rather than numerical differencing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from fracfit.fraccoef import convolve_trunc

__all__ = [
    "ShortMemSpec",
    "FilterExpansion",
    "identity",
    "arma",
    "bloomfield",
    "from_string",
    "to_model_string",
    "expand",
    "check_admissible",
    "ROOT_MARGIN",
    "COMMON_ROOT_TOL",
]

KIND_IDENTITY = "identity"
KIND_ARMA = "arma"
KIND_BLOOMFIELD = "bloomfield"

# Roots of the AR and MA polynomials must satisfy |z| >= 1 + ROOT_MARGIN,
# and no AR root may sit within COMMON_ROOT_TOL of an MA root.
ROOT_MARGIN = 1e-3
COMMON_ROOT_TOL = 1e-6


@dataclass(frozen=True)
class ShortMemSpec:
    """Which short-memory family, and its orders."""

    kind: str
    orders: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in (KIND_IDENTITY, KIND_ARMA, KIND_BLOOMFIELD):
            raise ValueError(f"unknown short-memory kind: {self.kind!r}")
        if self.kind == KIND_IDENTITY and self.orders != ():
            raise ValueError("identity filter takes no orders")
        if self.kind == KIND_ARMA:
            if len(self.orders) != 2 or min(self.orders) < 0:
                raise ValueError("arma orders must be a pair of nonnegative integers")
        if self.kind == KIND_BLOOMFIELD:
            if len(self.orders) != 1 or self.orders[0] < 1:
                raise ValueError("bloomfield order must be a positive integer")

    @property
    def param_dim(self) -> int:
        if self.kind == KIND_IDENTITY:
            return 0
        if self.kind == KIND_ARMA:
            return self.orders[0] + self.orders[1]
        return self.orders[0]

    def describe(self) -> str:
        if self.kind == KIND_IDENTITY:
            return "identity"
        if self.kind == KIND_ARMA:
            return f"arma({self.orders[0]},{self.orders[1]})"
        return f"bloomfield({self.orders[0]})"


def identity() -> ShortMemSpec:
    return ShortMemSpec(KIND_IDENTITY)


def arma(p1: int, p2: int) -> ShortMemSpec:
    return ShortMemSpec(KIND_ARMA, (int(p1), int(p2)))


def bloomfield(p: int) -> ShortMemSpec:
    return ShortMemSpec(KIND_BLOOMFIELD, (int(p),))


def from_string(text: str) -> ShortMemSpec:
    """Parse a model string: "fd" | "farima:<p1>,d,<p2>" | "bloomfield:<p>".

    Case-insensitive; "fd" is the pure fractional model (identity filter) and
    the middle farima token is the literal letter d.
    """
    bad = ValueError(
        f"unrecognized model {text!r}; expected 'fd', 'farima:<p1>,d,<p2>', or 'bloomfield:<p>'"
    )
    s = text.strip().lower()
    if s == "fd":
        return identity()
    head, sep, rest = s.partition(":")
    if not sep:
        raise bad
    if head == "farima":
        parts = [t.strip() for t in rest.split(",")]
        if len(parts) != 3 or parts[1] != "d" or not parts[0].isdigit() or not parts[2].isdigit():
            raise bad
        return arma(int(parts[0]), int(parts[2]))
    if head == "bloomfield":
        if not rest.strip().isdigit():
            raise bad
        return bloomfield(int(rest.strip()))
    raise bad


def to_model_string(spec: ShortMemSpec) -> str:
    """Inverse of from_string, for config echoes in reports."""
    if spec.kind == KIND_IDENTITY:
        return "fd"
    if spec.kind == KIND_ARMA:
        return f"farima:{spec.orders[0]},d,{spec.orders[1]}"
    return f"bloomfield:{spec.orders[0]}"


@dataclass(frozen=True)
class FilterExpansion:
    """Truncated expansions of theta, its inverse phi, and derivatives.

    theta, phi have shape (m+1,); dtheta, dphi have shape (p, m+1); d2phi,
    present only at derivative level 2, has shape (p, p, m+1).
    """

    theta: np.ndarray
    phi: np.ndarray
    dtheta: np.ndarray | None = None
    dphi: np.ndarray | None = None
    d2phi: np.ndarray | None = None


def _roots_outside(poly_low: np.ndarray) -> np.ndarray:
    """Roots of a polynomial given in ascending order (constant term first).

    Top-degree coefficients below 1e-12 of the polynomial scale are dropped
    first: their roots sit near infinity, cannot violate any margin, and
    overflow the companion-matrix normalization.
    """
    coeffs = np.asarray(poly_low, dtype=float)
    scale = np.max(np.abs(coeffs))
    keep = len(coeffs)
    while keep > 1 and abs(coeffs[keep - 1]) <= 1e-12 * scale:
        keep -= 1
    if keep <= 1:
        return np.empty(0, dtype=complex)
    return np.roots(coeffs[:keep][::-1])


def _arma_polys(spec: ShortMemSpec, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p1, p2 = spec.orders
    alpha = np.concatenate([[1.0], -params[:p1]])
    beta = np.concatenate([[1.0], params[p1:]])
    return alpha, beta


def check_admissible(spec: ShortMemSpec, params, root_margin: float = ROOT_MARGIN) -> tuple[bool, str | None]:
    """Check that the parameter point lies in the admissible set.

    Returns (True, None) when admissible, else (False, diagnostic).  ARMA
    points need every AR and MA root at modulus >= 1 + root_margin and no
    common AR/MA root; Bloomfield and identity points are always admissible
    when finite.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.param_dim,):
        raise ValueError(
            f"expected {spec.param_dim} parameters for {spec.describe()}, got {params.shape}"
        )
    if params.size and not np.all(np.isfinite(params)):
        return False, "non-finite parameter"
    if spec.kind != KIND_ARMA:
        return True, None
    alpha, beta = _arma_polys(spec, params)
    ar_roots = _roots_outside(alpha)
    ma_roots = _roots_outside(beta)
    bound = 1.0 + root_margin
    for name, roots in (("AR", ar_roots), ("MA", ma_roots)):
        if len(roots) and np.min(np.abs(roots)) < bound:
            worst = np.min(np.abs(roots))
            return False, f"{name} root at modulus {worst:.6g} inside margin {bound:.6g}"
    if len(ar_roots) and len(ma_roots):
        dist = np.abs(ar_roots[:, None] - ma_roots[None, :])
        if np.min(dist) < COMMON_ROOT_TOL:
            return False, f"common zero: AR and MA roots within {COMMON_ROOT_TOL:g}"
    return True, None


def _impulse_response(num: np.ndarray, den: np.ndarray, m: int) -> np.ndarray:
    """Expansion of num(s)/den(s) through lag m (den has constant term 1)."""
    imp = np.zeros(m + 1)
    imp[0] = 1.0
    return lfilter(num, den, imp)


def _shift(series: np.ndarray, lag: int, m: int) -> np.ndarray:
    out = np.zeros(m + 1)
    if lag <= m:
        out[lag:] = series[: m + 1 - lag]
    return out


def _exp_series(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Power series of exp(g(s)) for polynomial g with g(0) = 0.

    Uses c_j = (1/j) sum_{l=1}^{min(j,p)} l g_l c_{j-l}.
    """
    p = len(coeffs)
    out = np.zeros(m + 1)
    out[0] = 1.0
    lg = np.arange(1, p + 1) * coeffs
    for j in range(1, m + 1):
        top = min(j, p)
        out[j] = np.dot(lg[:top], out[j - top : j][::-1]) / j
    return out


def expand(spec: ShortMemSpec, params, m: int, derivs: int = 0) -> FilterExpansion:
    """Expand theta and phi = 1/theta through lag m.

    Parameters
    ----------
    spec : ShortMemSpec
    params : array-like
        Parameter vector, length spec.param_dim.
    m : int
        Largest lag retained.
    derivs : {0, 1, 2}
        0 returns only theta/phi; 1 adds dtheta/dphi; 2 adds d2phi.

    Raises
    ------
    ValueError
        If the parameters are inadmissible (diagnostic names the violated
        condition) or the arguments are malformed.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if derivs not in (0, 1, 2):
        raise ValueError("derivs must be 0, 1, or 2")
    params = np.asarray(params, dtype=float)
    ok, why = check_admissible(spec, params)
    if not ok:
        raise ValueError(f"inadmissible parameters for {spec.describe()}: {why}")

    p = spec.param_dim
    if spec.kind == KIND_IDENTITY:
        theta = np.zeros(m + 1)
        theta[0] = 1.0
        empty1 = np.zeros((0, m + 1))
        return FilterExpansion(
            theta=theta,
            phi=theta.copy(),
            dtheta=empty1 if derivs >= 1 else None,
            dphi=empty1.copy() if derivs >= 1 else None,
            d2phi=np.zeros((0, 0, m + 1)) if derivs == 2 else None,
        )

    if spec.kind == KIND_ARMA:
        p1, p2 = spec.orders
        alpha, beta = _arma_polys(spec, params)
        theta = _impulse_response(beta, alpha, m)
        phi = _impulse_response(alpha, beta, m)
        dtheta = dphi = d2phi = None
        if derivs >= 1:
            inv_alpha = _impulse_response(np.array([1.0]), alpha, m)
            inv_beta = _impulse_response(np.array([1.0]), beta, m)
            theta_over_alpha = convolve_trunc(theta, inv_alpha, m)
            phi_over_beta = convolve_trunc(phi, inv_beta, m)
            dtheta = np.empty((p, m + 1))
            dphi = np.empty((p, m + 1))
            for i in range(p1):
                lag = i + 1
                dtheta[i] = _shift(theta_over_alpha, lag, m)
                dphi[i] = -_shift(inv_beta, lag, m)
            for i in range(p2):
                lag = i + 1
                dtheta[p1 + i] = _shift(inv_alpha, lag, m)
                dphi[p1 + i] = -_shift(phi_over_beta, lag, m)
        if derivs == 2:
            inv_beta2 = convolve_trunc(inv_beta, inv_beta, m)
            phi_inv_beta2 = convolve_trunc(phi, inv_beta2, m)
            d2phi = np.zeros((p, p, m + 1))
            for i in range(p):
                lag_i = i + 1 if i < p1 else i - p1 + 1
                for l in range(i, p):
                    lag_l = l + 1 if l < p1 else l - p1 + 1
                    lag = lag_i + lag_l
                    if i < p1 and l < p1:
                        block = np.zeros(m + 1)
                    elif i >= p1 and l >= p1:
                        block = 2.0 * _shift(phi_inv_beta2, lag, m)
                    else:
                        block = _shift(inv_beta2, lag, m)
                    d2phi[i, l] = block
                    d2phi[l, i] = block
        return FilterExpansion(theta=theta, phi=phi, dtheta=dtheta, dphi=dphi, d2phi=d2phi)

    # Bloomfield: theta = exp(g), phi = exp(-g).
    theta = _exp_series(params, m)
    phi = _exp_series(-params, m)
    dtheta = dphi = d2phi = None
    if derivs >= 1:
        dtheta = np.empty((p, m + 1))
        dphi = np.empty((p, m + 1))
        for i in range(p):
            lag = i + 1
            dtheta[i] = _shift(theta, lag, m)
            dphi[i] = -_shift(phi, lag, m)
    if derivs == 2:
        d2phi = np.empty((p, p, m + 1))
        for i in range(p):
            for l in range(p):
                d2phi[i, l] = _shift(phi, i + l + 2, m)
    return FilterExpansion(theta=theta, phi=phi, dtheta=dtheta, dphi=dphi, d2phi=d2phi)
