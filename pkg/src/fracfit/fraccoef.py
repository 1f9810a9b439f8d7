"""Truncated fractional-difference coefficients and small series utilities.

The expansion of (1 - L)**(-zeta) has coefficients

    a_0 = 1,    a_j = a_{j-1} * (j - 1 + zeta) / j,

which equals Gamma(j + zeta) / (Gamma(zeta) * Gamma(j + 1)) away from the
poles and extends it continuously across nonpositive integer zeta, where
the expansion terminates (binomial case).  Everything here works on plain
float64 arrays truncated at a fixed lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FracWeights",
    "frac_coeffs",
    "log_weights",
    "convolve_trunc",
    "digamma",
]


@dataclass(frozen=True)
class FracWeights:
    """Coefficients a_0 .. a_m of (1 - L)**(-zeta)."""

    zeta: float
    coeffs: np.ndarray

    @property
    def m(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, j):
        return self.coeffs[j]


def frac_coeffs(zeta: float, m: int) -> FracWeights:
    """Expansion coefficients of (1 - L)**(-zeta) through lag m.

    Parameters
    ----------
    zeta : float
        Exponent.  (1 - L)**delta corresponds to ``frac_coeffs(-delta, m)``.
    m : int
        Largest lag, m >= 0.

    Returns
    -------
    FracWeights
        Coefficients a_0 .. a_m with a_0 = 1.  At nonpositive integer zeta
        the sequence terminates exactly: a_j = 0 for j > -zeta.
    """
    if not math.isfinite(zeta):
        raise ValueError("zeta must be finite")
    if m < 0:
        raise ValueError("m must be nonnegative")
    j = np.arange(1.0, m + 1.0)
    out = np.empty(m + 1)
    out[0] = 1.0
    if m > 0:
        out[1:] = np.cumprod((j - 1.0 + zeta) / j)
    return FracWeights(zeta=float(zeta), coeffs=out)


def log_weights(m: int) -> np.ndarray:
    """Weights (1, 1/2, ..., 1/m) of -log(1 - L) = sum_j L**j / j."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return 1.0 / np.arange(1.0, m + 1.0)


def _as_coeff_array(a) -> np.ndarray:
    coeffs = getattr(a, "coeffs", a)
    return np.asarray(coeffs, dtype=float)


def convolve_trunc(a, b, m: int) -> np.ndarray:
    """Truncated Cauchy product: c_j = sum_{k<=j} a_k b_{j-k} for j = 0..m.

    Inputs shorter than m+1 are treated as zero-padded.  Accepts plain
    arrays or FracWeights.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    av = _as_coeff_array(a)[: m + 1]
    bv = _as_coeff_array(b)[: m + 1]
    full = np.convolve(av, bv)[: m + 1]
    if len(full) < m + 1:
        full = np.concatenate([full, np.zeros(m + 1 - len(full))])
    return full


# Coefficients of the asymptotic series psi(x) ~ log x - 1/(2x) - sum_k c_k x^(-2k),
# c_k = B_{2k} / (2k) for k = 1..6.
_ASY = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)


def digamma(x: float) -> float:
    """Digamma function psi(x) = d log Gamma(x) / dx.

    Upward recurrence pushes the argument to x >= 8, then a six-term
    asymptotic series finishes the job; arguments below 1/2 go through
    the reflection formula first.  Accurate to better than 1e-12
    relative for x > 0.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("digamma requires a finite argument")
    if x <= 0.0 and x == math.floor(x):
        raise ValueError(f"digamma pole at x = {x:g}")
    if x < 0.5:
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = 0.0
    for c in reversed(_ASY):
        tail = (tail + c) * inv2
    return acc + math.log(x) - 0.5 / x - tail
