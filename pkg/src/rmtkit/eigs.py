"""Dense symmetric eigensolver and matrix-free Lanczos for extremal
eigenvalues.

``full_eigh`` delegates the Householder-tridiagonalise-then-implicit-shift
reduction to LAPACK (via numpy) behind the toolkit's result contract;
``lanczos_topk`` is a from-scratch Lanczos with full reorthogonalisation,
which keeps the two routes independent for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import NonConvergenceError
from .ensembles import SymmetricMatrix

__all__ = [
    "LinearOperator",
    "EigResult",
    "full_eigh",
    "lanczos_topk",
    "lanczos_decomposition",
    "spectrum_histogram",
]

_DENSE_LIMIT = 4000
_BREAKDOWN_TOL = 1e-14


class LinearOperator:
    """Matrix-free symmetric operator: dimension plus a matvec."""

    def __init__(self, n, matvec):
        self.n = int(n)
        self._matvec = matvec

    def matvec(self, x):
        return self._matvec(x)

    @classmethod
    def from_matrix(cls, mat):
        arr = mat.array if isinstance(mat, SymmetricMatrix) else np.asarray(mat, dtype=float)
        return cls(arr.shape[0], lambda x: arr @ x)


def _as_operator(op) -> LinearOperator:
    if isinstance(op, LinearOperator):
        return op
    if isinstance(op, (SymmetricMatrix, np.ndarray)):
        return LinearOperator.from_matrix(op)
    raise TypeError("expected a LinearOperator, SymmetricMatrix, or ndarray")


@dataclass(frozen=True)
class EigResult:
    """Eigenvalues ascending; orthonormal eigenvector columns if requested."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None


def full_eigh(mat, want_vectors: bool = False,
              dense_limit: int = _DENSE_LIMIT) -> EigResult:
    """Dense symmetric eigendecomposition, eigenvalues sorted ascending."""
    arr = mat.array if isinstance(mat, SymmetricMatrix) else np.asarray(mat, dtype=float)
    n = arr.shape[0]
    if n > dense_limit:
        raise ValueError(f"matrix size {n} exceeds the dense limit {dense_limit}")
    try:
        if want_vectors:
            vals, vecs = np.linalg.eigh(arr)
            return EigResult(eigenvalues=vals, eigenvectors=vecs)
        return EigResult(eigenvalues=np.linalg.eigvalsh(arr))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonConvergenceError(f"dense eigensolver failed: {exc}") from exc


def lanczos_decomposition(op, m_iters: int, seed: int = 0):
    """Run ``m_iters`` Lanczos steps with full reorthogonalisation.

    Returns (alphas, betas, Q, restarts): the tridiagonal coefficients, the
    orthonormal basis as columns of Q, and how many breakdown restarts
    happened.  Breakdown (beta < 1e-14) restarts with a fresh random vector
    orthogonalised against the existing basis, deflating T into blocks; a
    restart that cannot produce a usable vector within 3 draws raises.
    Low-rank operators break down once per exhausted invariant subspace,
    which is expected and harmless.
    """
    op = _as_operator(op)
    n = op.n
    if not 1 <= m_iters <= n:
        raise ValueError("need 1 <= m_iters <= n")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)

    big_q = np.zeros((n, m_iters))
    alphas = np.zeros(m_iters)
    betas = np.zeros(max(m_iters - 1, 0))
    restarts = 0

    big_q[:, 0] = q
    for j in range(m_iters):
        v = op.matvec(big_q[:, j])
        alphas[j] = big_q[:, j] @ v
        if j + 1 == m_iters:
            break
        v = v - alphas[j] * big_q[:, j]
        if j > 0:
            v = v - betas[j - 1] * big_q[:, j - 1]
        # full reorthogonalisation, twice for drift < 1e-10
        basis = big_q[:, : j + 1]
        v -= basis @ (basis.T @ v)
        v -= basis @ (basis.T @ v)
        beta = np.linalg.norm(v)
        if beta < _BREAKDOWN_TOL:
            restarts += 1
            for attempt in range(4):
                if attempt == 3:
                    raise NonConvergenceError(
                        "Lanczos restart failed after 3 draws")
                v = rng.standard_normal(n)
                v -= basis @ (basis.T @ v)
                v -= basis @ (basis.T @ v)
                norm = np.linalg.norm(v)
                if norm > _BREAKDOWN_TOL:
                    v /= norm
                    break
            beta = 0.0
            big_q[:, j + 1] = v
        else:
            big_q[:, j + 1] = v / beta
        betas[j] = beta
    return alphas, betas, big_q, restarts


def lanczos_topk(op, k: int, m_iters: int, seed: int = 0):
    """The k largest Ritz values after ``m_iters`` Lanczos steps, descending."""
    op = _as_operator(op)
    if not 1 <= k <= m_iters:
        raise ValueError("need 1 <= k <= m_iters")
    alphas, betas, _, _ = lanczos_decomposition(op, m_iters, seed)
    if m_iters == 1:
        ritz = alphas.copy()
    else:
        ritz = eigh_tridiagonal(alphas, betas, eigvals_only=True)
    return list(np.sort(ritz)[::-1][:k])


def spectrum_histogram(values, bins: int):
    """Uniform histogram over [min, max]; density integrates to 1.

    Returns (edges, counts, density).  A degenerate single-point range is
    widened to unit width around the value.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("cannot histogram an empty spectrum")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    width = edges[1] - edges[0]
    density = counts / (vals.size * width)
    return edges, counts, density
