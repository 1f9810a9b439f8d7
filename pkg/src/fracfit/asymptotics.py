"""Asymptotic covariance of the CSS estimator and Wald tests.

The limiting distribution is sqrt(n) (tau_hat - tau0) -> N(0, inv(A)) with

    A = [[pi^2/6,        -sum_j b_j'/j],
         [-sum_j b_j/j,   sum_j b_j b_j']],

where b_j = sum_{k=0}^{j-1} theta_k d phi_{j-k} / d phi stacks the
short-memory sensitivity of the inverse expansion.  b_j decays geometrically
for admissible parameters, so the series is truncated adaptively and a
geometric tail estimate is added; the pi^2/6 corner is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from fracfit.fraccoef import convolve_trunc
from fracfit.shortmem import ShortMemSpec, expand

__all__ = ["InfoMatrixA", "info_matrix", "wald_test"]

_TERM_TOL = 1e-12
_MAX_M = 1 << 15


@dataclass(frozen=True)
class InfoMatrixA:
    """Information matrix with its truncation point and tail estimate."""

    A: np.ndarray
    M: int
    tail_bound: float
    singular: bool

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.A)


def _b_sequence(spec: ShortMemSpec, phi, M: int) -> np.ndarray:
    """b_j for j = 0..M (b_0 = 0), shape (p, M+1)."""
    exp = expand(spec, phi, M, derivs=1)
    p = spec.param_dim
    out = np.empty((p, M + 1))
    for i in range(p):
        out[i] = convolve_trunc(exp.theta, exp.dphi[i], M)
    return out


def info_matrix(spec: ShortMemSpec, phi, M: int | None = None) -> InfoMatrixA:
    """Assemble the limiting information matrix for the given filter.

    Parameters
    ----------
    spec : ShortMemSpec
    phi : array-like
        Short-memory parameters (admissible).
    M : int, optional
        Series truncation.  Defaults to adaptive: stop once the running
        term of sum b_j b_j' falls below 1e-12, capped at 32768.

    Returns
    -------
    InfoMatrixA
        ``A`` is (1+p) x (1+p); ``singular`` flags a numerically singular
        matrix (inference is unavailable there) rather than raising.
    """
    p = spec.param_dim
    phi = np.asarray(phi, dtype=float).reshape(p)
    if p == 0:
        return InfoMatrixA(A=np.array([[math.pi**2 / 6.0]]), M=0, tail_bound=0.0, singular=False)

    if M is None:
        m_cur = 256
        b = _b_sequence(spec, phi, m_cur)
        while np.sum(b[:, m_cur] ** 2) > _TERM_TOL and m_cur < _MAX_M:
            m_cur *= 2
            b = _b_sequence(spec, phi, m_cur)
        M = m_cur
    else:
        if M < 1:
            raise ValueError("M must be at least 1")
        b = _b_sequence(spec, phi, M)

    j = np.arange(1.0, M + 1.0)
    off = -(b[:, 1:] / j).sum(axis=1)
    corner = b[:, 1:] @ b[:, 1:].T

    # Geometric tail from the decay ratio over the last few terms.
    norms = np.linalg.norm(b[:, 1:], axis=0)
    tail_off = np.zeros(p)
    tail_corner = 0.0
    span = 4
    if M > span and norms[-span - 1] > 0:
        ratio = (norms[-1] / norms[-span - 1]) ** (1.0 / span)
        ratio = min(max(ratio, 0.0), 0.999)
        last = b[:, M]
        tail_off = -last * (ratio / (1.0 - ratio)) / M
        tail_corner_mat = np.outer(last, last) * (ratio**2 / (1.0 - ratio**2))
        off = off + tail_off
        corner = corner + tail_corner_mat
        tail_corner = float(np.linalg.norm(tail_corner_mat))

    A = np.empty((1 + p, 1 + p))
    A[0, 0] = math.pi**2 / 6.0
    A[0, 1:] = off
    A[1:, 0] = off
    A[1:, 1:] = corner
    tail_bound = float(np.linalg.norm(tail_off) + tail_corner)

    eigvals = np.linalg.eigvalsh((A + A.T) / 2.0)
    singular = bool(eigvals[0] <= 1e-12 * max(eigvals[-1], 1.0))
    return InfoMatrixA(A=A, M=int(M), tail_bound=tail_bound, singular=singular)


def wald_test(fit, Rmat, rvec) -> tuple[float, int, float]:
    """Wald test of R tau = r against the fitted covariance.

    Parameters
    ----------
    fit : FitResult
        Provides the estimate vector and its covariance.
    Rmat : array-like, shape (q, 1+p)
        Restriction matrix, full row rank.
    rvec : array-like, shape (q,)

    Returns
    -------
    (statistic, dof, p_value)
    """
    Rmat = np.atleast_2d(np.asarray(Rmat, dtype=float))
    rvec = np.atleast_1d(np.asarray(rvec, dtype=float))
    tau = fit.tau_hat.as_vector()
    q, k = Rmat.shape
    if k != len(tau):
        raise ValueError(f"Rmat has {k} columns but tau has {len(tau)} entries")
    if rvec.shape != (q,):
        raise ValueError("rvec length must match the number of restrictions")
    if np.linalg.matrix_rank(Rmat) < q:
        raise ValueError("Rmat is rank deficient")
    gap = Rmat @ tau - rvec
    inner = Rmat @ fit.cov @ Rmat.T
    try:
        solved = np.linalg.solve(inner, gap)
    except np.linalg.LinAlgError as err:
        raise ValueError("restricted covariance is singular") from err
    stat = float(gap @ solved)
    if stat < 0:
        stat = 0.0
    return stat, q, float(chi2.sf(stat, q))
