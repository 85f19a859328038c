"""Deterministic dense linear algebra: Jacobi SVD, subspace tools, builders.

Everything here is a pure function of its inputs. The SVD is a one-sided
Jacobi with cyclic sweeps rather than a LAPACK call so that results are
reproducible across builds and carry a fixed sign/ordering convention:
singular values descend, ties keep the working column order, and each left
singular vector has its largest-magnitude entry non-negative (ties broken
by lowest row index).
"""

from dataclasses import dataclass

import numpy as np

from lowrank_lab import _backend
from lowrank_lab.rng import Rng

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


class SvdConvergenceError(RuntimeError):
    """Jacobi sweeps hit the cap; carries the remaining off-diagonal residual."""

    def __init__(self, off_residual: float, sweeps: int):
        super().__init__(
            f"Jacobi SVD did not converge in {sweeps} sweeps "
            f"(off-diagonal residual {off_residual:.3e})"
        )
        self.off_residual = off_residual
        self.sweeps = sweeps


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be 2-D with at least one row and column")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ v.T`` with orthonormal u (m x k), v (n x k)."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def _complete_columns(u: np.ndarray, fix: np.ndarray) -> None:
    """Replace the columns of ``u`` flagged in ``fix`` by deterministic
    Gram-Schmidt completion against all remaining columns (in place)."""
    m = u.shape[0]
    kept = [j for j in range(u.shape[1]) if not fix[j]]
    basis = [u[:, j] for j in kept]
    cand = 0
    for j in range(u.shape[1]):
        if not fix[j]:
            continue
        while cand < m:
            vec = np.zeros(m)
            vec[cand] = 1.0
            cand += 1
            for b in basis:
                vec -= (b @ vec) * b
            for b in basis:  # second pass for stability
                vec -= (b @ vec) * b
            nrm = float(np.linalg.norm(vec))
            if nrm > 0.5:
                vec /= nrm
                u[:, j] = vec
                basis.append(vec)
                break
        else:
            raise RuntimeError("failed to complete orthonormal basis")


def svd(a) -> SvdResult:
    """One-sided Jacobi SVD.

    Converges when the largest off-diagonal Gram entry over a full sweep is
    at most 1e-12 times the largest squared column norm, with a cap of 60
    sweeps (raises :class:`SvdConvergenceError` past the cap).
    """
    m_in = as_matrix(a)
    rows, cols = m_in.shape
    transposed = rows < cols
    b = np.array(m_in.T if transposed else m_in, dtype=np.float64, order="C")
    n = b.shape[1]
    v = np.eye(n)
    sweeps, off, converged = _backend.jacobi_sweeps(b, v, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if not converged:
        raise SvdConvergenceError(off, sweeps)

    s = np.linalg.norm(b, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    b = b[:, order]
    v = v[:, order]

    smax = s[0] if s.size else 0.0
    tiny = s <= smax * 1e-12
    u = np.zeros_like(b)
    good = ~tiny
    u[:, good] = b[:, good] / s[good]
    _complete_columns(u, tiny)

    if transposed:
        u, v = v, u

    # sign convention: largest-|entry| of each left singular vector >= 0
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdResult(u=u, s=s, v=v)


def singular_values(a) -> np.ndarray:
    return svd(a).s


def numerical_rank(a, rel_tol: float = 1e-6) -> int:
    """Count of singular values above ``rel_tol`` times the largest one.

    Returns 0 for the zero matrix; the threshold is relative, so scaling the
    input leaves the answer unchanged.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = svd(a).s
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def nullspace(a, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) for {v : ||A v|| <= tol * sigma_1 * ||v||}.

    Includes the full rank-deficiency of wide matrices; for the zero matrix
    the whole space is returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = as_matrix(a)
    res = svd(m)
    n = m.shape[1]
    if res.s[0] == 0.0:
        return np.eye(n)
    rank = int(np.sum(res.s > tol * res.s[0]))
    k = res.s.shape[0]
    out = np.zeros((n, n - rank))
    out[:, : k - rank] = res.v[:, rank:]
    if n > k:
        fix = np.ones(n - rank, dtype=bool)
        fix[: k - rank] = False
        full = np.concatenate([res.v[:, :rank], out], axis=1)
        flags = np.concatenate([np.zeros(rank, dtype=bool), fix])
        _complete_columns(full, flags)
        out = full[:, rank:]
    return out


def principal_angles(u1, u2) -> np.ndarray:
    """Canonical angles (radians, ascending) between two column spans.

    Both inputs must have orthonormal columns (checked to 1e-6) and the same
    row count; the angles are arccos of the singular values of u1.T @ u2,
    clamped into [0, 1].
    """
    b1 = as_matrix(u1, "u1")
    b2 = as_matrix(u2, "u2")
    if b1.shape[0] != b2.shape[0]:
        raise ValueError("bases must have the same row count")
    for name, b in (("u1", b1), ("u2", b2)):
        resid = np.max(np.abs(b.T @ b - np.eye(b.shape[1])))
        if resid > 1e-6:
            raise ValueError(f"{name} columns are not orthonormal (residual {resid:.2e})")
    cross = b1.T @ b2
    s = svd(cross).s
    k = min(b1.shape[1], b2.shape[1])
    return np.arccos(np.clip(s[:k], 0.0, 1.0))


def max_principal_angle(u1, u2) -> float:
    return float(principal_angles(u1, u2).max())


def max_principal_angle_sin(u1, u2) -> float:
    """Largest canonical angle via its sine, sigma_max((I - u2 u2^T) u1).

    The arccos form loses resolution below ~1.5e-8 rad (cos theta rounds to
    1); the sine form stays accurate for near-identical spans.
    """
    b1 = as_matrix(u1, "u1")
    b2 = as_matrix(u2, "u2")
    resid = b1 - b2 @ (b2.T @ b1)
    s = svd(resid).s
    return float(np.arcsin(np.clip(s[0], 0.0, 1.0)))


def random_scaled_orthogonal(d: int, eps: float, rng: Rng) -> np.ndarray:
    """d x d matrix W with W.T @ W = W @ W.T = eps^2 I.

    Built as the Q factor of a Gaussian matrix with the R diagonal sign
    fixed (so the distribution is Haar and the result deterministic for a
    given stream), then scaled by eps.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = rng.normals((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return eps * (q * signs)


def orthonormal_columns(a) -> np.ndarray:
    """Orthonormalize the columns of ``a`` (QR with sign-fixed diagonal)."""
    m = as_matrix(a)
    q, r = np.linalg.qr(m)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def frob(a) -> float:
    return float(np.linalg.norm(a, "fro"))
