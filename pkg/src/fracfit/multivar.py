"""Multivariate fractional systems and the one-step Newton estimator.

The model is a diagonal fractional operator applied row-wise, with the memory
parameters tied together by a linear restriction map, followed by per-row
short-memory filters (diagonal blocks; a fully general matrix filter is out of
scope for v1).  Estimation takes an initial value from per-row univariate fits
and applies one (or a few) Newton steps on the weighted least-squares surface,
which is enough to reach the efficient limit when the initial value is
root-n consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fracfit.css import AdmissibleSet, OptimizerOptions, estimate
from fracfit.fraccoef import FracWeights, convolve_trunc, frac_coeffs
from fracfit.filtering import log_filter, trunc_filter
from fracfit.shortmem import ShortMemSpec, check_admissible, expand

__all__ = [
    "Restriction",
    "unrestricted",
    "common",
    "from_assignment",
    "restriction_from_spec",
    "MvModel",
    "MvStepResult",
    "mv_residuals",
    "det_objective",
    "initial_estimate",
    "one_step",
    "matrix_B",
]

_B_TERM_TOL = 1e-12
_B_MAX_M = 1 << 15


@dataclass(frozen=True)
class Restriction:
    """Linear map from free memory parameters to per-row integration orders.

    ``matrix`` is the (r, q) Jacobian: row i gives d delta_i / d coordinates.
    Linear maps cover the unrestricted, common-memory, and assignment cases;
    second derivatives vanish identically.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, float)
        if m.ndim != 2 or m.size == 0:
            raise ValueError("restriction matrix must be 2-D and nonempty")
        if not np.all(np.isfinite(m)):
            raise ValueError("restriction matrix must be finite")
        r, q = m.shape
        if q > r:
            raise ValueError("more free memory parameters than series")
        if np.linalg.matrix_rank(m) < q:
            raise ValueError("restriction matrix must have full column rank")
        object.__setattr__(self, "matrix", m)

    @property
    def r(self) -> int:
        return self.matrix.shape[0]

    @property
    def q(self) -> int:
        return self.matrix.shape[1]

    def apply(self, frak) -> np.ndarray:
        frak = np.atleast_1d(np.asarray(frak, float))
        if frak.shape != (self.q,):
            raise ValueError(f"expected {self.q} free memory parameters, got {frak.shape}")
        return self.matrix @ frak


def unrestricted(r: int) -> Restriction:
    """One free memory parameter per series."""
    return Restriction(np.eye(int(r)))


def common(r: int) -> Restriction:
    """A single memory parameter shared by all series."""
    return Restriction(np.ones((int(r), 1)))


def restriction_from_spec(value, r: int) -> Restriction:
    """Build a restriction from config shorthand.

    Accepts "unrestricted", "common", or a length-r assignment list of 0-based
    coordinate indices.
    """
    if isinstance(value, str):
        name = value.strip().lower()
        if name == "unrestricted":
            return unrestricted(r)
        if name == "common":
            return common(r)
        raise ValueError(f"unknown restriction {value!r}; use 'unrestricted', 'common', or an assignment list")
    rest = from_assignment(value)
    if rest.r != r:
        raise ValueError(f"assignment covers {rest.r} series but the model has {r}")
    return rest


def from_assignment(assignment) -> Restriction:
    """Map series i to free coordinate assignment[i] (0-based).

    Every coordinate in 0..max(assignment) must be used by at least one row.
    """
    idx = np.asarray(assignment, dtype=int).reshape(-1)
    if idx.size == 0 or np.any(idx < 0):
        raise ValueError("assignment must be nonempty with 0-based coordinates")
    q = int(idx.max()) + 1
    used = np.zeros(q, dtype=bool)
    used[idx] = True
    if not used.all():
        raise ValueError("every memory coordinate must be assigned to some series")
    m = np.zeros((idx.size, q))
    m[np.arange(idx.size), idx] = 1.0
    return Restriction(m)


@dataclass(frozen=True)
class MvModel:
    """Per-row short-memory blocks plus a memory restriction map."""

    blocks: tuple
    restriction: Restriction

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("need at least one series block")
        for b in blocks:
            if not isinstance(b, ShortMemSpec):
                raise TypeError("blocks must be ShortMemSpec instances")
        if self.restriction.r != len(blocks):
            raise ValueError(
                f"restriction maps {self.restriction.r} series but {len(blocks)} blocks given"
            )
        object.__setattr__(self, "blocks", blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def q(self) -> int:
        return self.restriction.q

    @property
    def p(self) -> int:
        return sum(b.param_dim for b in self.blocks)

    @property
    def dim(self) -> int:
        return self.q + self.p

    def split_phi(self, phi) -> list[np.ndarray]:
        phi = np.asarray(phi, float).reshape(-1)
        if phi.size != self.p:
            raise ValueError(f"expected {self.p} filter parameters, got {phi.size}")
        out, pos = [], 0
        for b in self.blocks:
            out.append(phi[pos : pos + b.param_dim])
            pos += b.param_dim
        return out

    def labels(self) -> list[str]:
        mem = ["delta"] if self.q == 1 else [f"delta{a + 1}" for a in range(self.q)]
        par = []
        for i, b in enumerate(self.blocks):
            if b.kind == "arma":
                p1, p2 = b.orders
                par += [f"y{i + 1}.ar{k + 1}" for k in range(p1)]
                par += [f"y{i + 1}.ma{k + 1}" for k in range(p2)]
            elif b.kind == "bloomfield":
                par += [f"y{i + 1}.c{k + 1}" for k in range(b.param_dim)]
        return mem + par

    def block_rows(self) -> list[int]:
        """Series index of each filter-parameter coordinate, in phi order."""
        rows = []
        for i, b in enumerate(self.blocks):
            rows += [i] * b.param_dim
        return rows


def _validate_matrix_series(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("series matrix must be (r, n) with n >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("series matrix contains non-finite values")
    return X


def mv_residuals(X, model: MvModel, frak, phi, derivs: int = 0):
    """Row-wise truncated residual filter; derivs=1 adds the Jacobian stack.

    Returns E of shape (r, n), and with derivs=1 also dE of shape
    (q + p, r, n) ordered memory coordinates first, then filter parameters in
    block order.  The time-1 derivative is identically zero.
    """
    X = _validate_matrix_series(X)
    r, n = X.shape
    if r != model.r:
        raise ValueError(f"model has {model.r} series but X has {r} rows")
    deltas = model.restriction.apply(frak)
    phis = model.split_phi(phi)
    J = model.restriction.matrix

    E = np.empty((r, n))
    expansions = []
    for i in range(r):
        exp = expand(model.blocks[i], phis[i], n - 1, derivs=1 if derivs else 0)
        y = trunc_filter(frac_coeffs(-deltas[i], n - 1).coeffs, X[i])
        E[i] = trunc_filter(exp.phi, y)
        expansions.append((exp, y))
    if not derivs:
        return E

    dE = np.zeros((model.dim, r, n))
    for i in range(r):
        dlog = log_filter(E[i])
        for a in range(model.q):
            if J[i, a] != 0.0:
                dE[a, i] = J[i, a] * dlog
    col = model.q
    for i in range(r):
        exp, y = expansions[i]
        for k in range(model.blocks[i].param_dim):
            dE[col, i] = trunc_filter(exp.dphi[k], y)
            col += 1
    return E, dE


def det_objective(X, model: MvModel, frak, phi) -> float:
    """Determinant of the innovation covariance of the filtered residuals."""
    E = mv_residuals(X, model, frak, phi)
    if not np.all(np.isfinite(E)):
        raise ValueError("residual filter produced non-finite values")
    n = E.shape[1]
    return float(np.linalg.det(E @ E.T / n))


def initial_estimate(X, model: MvModel, aset: AdmissibleSet, options: OptimizerOptions | None = None):
    """Per-row univariate fits, combined through the restriction map.

    Memory coordinates come from the least-squares fit of the per-row
    estimates onto the restriction Jacobian, which for selection maps is the
    arithmetic mean of the rows sharing a coordinate.
    """
    X = _validate_matrix_series(X)
    if X.shape[0] != model.r:
        raise ValueError(f"model has {model.r} series but X has {X.shape[0]} rows")
    deltas = np.empty(model.r)
    phis = []
    for i in range(model.r):
        fit = estimate(X[i], model.blocks[i], aset, options)
        deltas[i] = fit.tau_hat.delta
        phis.append(fit.tau_hat.phi)
    frak, *_ = np.linalg.lstsq(model.restriction.matrix, deltas, rcond=None)
    phi = np.concatenate(phis) if phis else np.empty(0)
    return frak, phi


@dataclass(frozen=True)
class MvStepResult:
    """One-step estimator output."""

    delta_hat: np.ndarray
    phi_hat: np.ndarray
    Sigma_n: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    H_cond: float
    projected: bool
    steps: int

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta_hat, self.phi_hat])


def _weighted_pieces(X, model, frak, phi):
    E, dE = mv_residuals(X, model, frak, phi, derivs=1)
    n = E.shape[1]
    Sigma = E @ E.T / n
    try:
        Sinv = np.linalg.inv(Sigma)
    except np.linalg.LinAlgError as err:
        raise ValueError("innovation covariance is singular at the evaluation point") from err
    H = np.einsum("ait,ij,bjt->ab", dE, Sinv, dE) / n
    h = np.einsum("ait,ij,jt->a", dE, Sinv, E) / n
    return Sigma, H, h


def _project(model, frak, phi, aset):
    """Clip a proposed point back into the admissible set; True if moved."""
    moved = False
    clipped = np.clip(frak, aset.delta_lo, aset.delta_hi)
    if not np.array_equal(clipped, frak):
        frak, moved = clipped, True
    phi2 = aset.clip_phi(phi)
    if not np.array_equal(phi2, phi):
        phi, moved = phi2, True
    return frak, phi, moved


def _admissible(model, phi) -> bool:
    for block, part in zip(model.blocks, model.split_phi(phi)):
        ok, _ = check_admissible(block, part)
        if not ok:
            return False
    return True


def one_step(
    X,
    model: MvModel,
    delta_tilde,
    phi_tilde,
    aset: AdmissibleSet | None = None,
    steps: int = 1,
) -> MvStepResult:
    """Newton step(s) on the weighted residual surface from an initial value.

    With a root-n consistent initial value a single step attains the efficient
    limit; ``steps`` allows iterating when the initial rate is slower.  A step
    leaving the admissible set is projected back and flagged.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    X = _validate_matrix_series(X)
    n = X.shape[1]
    frak = np.atleast_1d(np.asarray(delta_tilde, float)).copy()
    phi = np.asarray(phi_tilde, float).reshape(-1).copy()
    q = model.q
    projected = False

    for _ in range(steps):
        _, H, h = _weighted_pieces(X, model, frak, phi)
        cond = float(np.linalg.cond(H))
        if not np.isfinite(cond) or cond > 1e14:
            raise ValueError(f"H_n is numerically singular (condition number {cond:.3g})")
        step = np.linalg.solve(H, h)
        cand_frak = frak - step[:q]
        cand_phi = phi - step[q:]
        if aset is not None:
            cand_frak, cand_phi, moved = _project(model, cand_frak, cand_phi, aset)
            projected = projected or moved
        # A clipped point can still sit outside the filter's admissible
        # region; back off toward the current point until it is usable.
        tries = 0
        while not _admissible(model, cand_phi) and tries < 60:
            cand_phi = 0.5 * (cand_phi + phi)
            projected = True
            tries += 1
        if not _admissible(model, cand_phi):
            raise ValueError("Newton step could not be projected into the admissible set")
        frak, phi = cand_frak, cand_phi

    Sigma, H, _ = _weighted_pieces(X, model, frak, phi)
    H_cond = float(np.linalg.cond(H))
    if not np.isfinite(H_cond) or H_cond > 1e14:
        raise ValueError(f"H_n is numerically singular (condition number {H_cond:.3g})")
    cov = np.linalg.inv(H) / n
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return MvStepResult(
        delta_hat=frak,
        phi_hat=phi,
        Sigma_n=Sigma,
        cov=cov,
        se=se,
        H_cond=H_cond,
        projected=projected,
        steps=steps,
    )


def _block_sequences(model: MvModel, phi, M: int) -> np.ndarray:
    """Per filter-parameter coordinate: (dphi_k * theta) lag sequence, 0..M."""
    phis = model.split_phi(phi)
    g = np.zeros((model.p, M + 1))
    col = 0
    for block, part in zip(model.blocks, phis):
        if block.param_dim == 0:
            continue
        exp = expand(block, part, M, derivs=1)
        for k in range(block.param_dim):
            g[col] = convolve_trunc(exp.theta, exp.dphi[k], M)
            col += 1
    return g


def matrix_B(model: MvModel, phi, Sigma0, M: int | None = None) -> np.ndarray:
    """Asymptotic information matrix of the one-step estimator.

    The memory-by-memory block telescopes to an exact multiple of pi^2/6
    because the per-row filter and its inverse cancel lag by lag; the blocks
    involving filter parameters are geometric series summed to M terms.
    """
    Sigma0 = np.asarray(Sigma0, float)
    r = model.r
    if Sigma0.shape != (r, r):
        raise ValueError(f"Sigma0 must be ({r}, {r})")
    if not np.allclose(Sigma0, Sigma0.T, atol=1e-10):
        raise ValueError("Sigma0 must be symmetric")
    try:
        np.linalg.cholesky(Sigma0)
    except np.linalg.LinAlgError as err:
        raise ValueError("Sigma0 must be positive definite") from err
    Sinv = np.linalg.inv(Sigma0)
    J = model.restriction.matrix
    q, p = model.q, model.p

    # W[i, j] = Sinv[i, j] * Sigma0[j, i]; every trace below contracts to it.
    W = Sinv * Sigma0.T
    B = np.zeros((q + p, q + p))
    B[:q, :q] = (math.pi**2 / 6.0) * (J.T @ W @ J)
    if p == 0:
        return B

    if M is None:
        M = 256
        g = _block_sequences(model, phi, M)
        while M < _B_MAX_M and float(np.sum(g[:, -1] ** 2)) > _B_TERM_TOL:
            M *= 2
            g = _block_sequences(model, phi, M)
    else:
        if M < 1:
            raise ValueError("M must be positive")
        g = _block_sequences(model, phi, M)

    rows = model.block_rows()
    k = np.arange(1.0, M + 1.0)
    G = g[:, 1:]
    # Memory a by parameter b: -(sum_k g_b[k]/k) * tr{D_a Sinv E_ii Sigma0}.
    mem_weight = J.T @ W  # (q, r); column i is tr{D_a Sinv E_ii Sigma0}
    series_sum = G / k  # (p, M)
    for b in range(p):
        val = -float(np.sum(series_sum[b]))
        B[:q, q + b] = val * mem_weight[:, rows[b]]
        B[q + b, :q] = B[:q, q + b]
    # Parameter by parameter: (sum_k g_b g_c) * W[i_b, i_c] transposed trace.
    S2 = G @ G.T
    for b in range(p):
        for c in range(p):
            B[q + b, q + c] = S2[b, c] * W[rows[b], rows[c]]
    return 0.5 * (B + B.T)
