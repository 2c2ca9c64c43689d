"""Generalized symmetric eigenproblems A v = lambda M v and factorizations.

The generalized spectrum is computed through the congruent standard
problem R^-1 A R^-T with M = R R^T (Cholesky in place of the symmetric
square root: the spectra coincide by similarity).  Dense LAPACK solvers
are used throughout; problem sizes here stay at desk scale where
exactness matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "NotPositiveDefiniteError",
    "CholeskyFactor",
    "cholesky",
    "SpectrumResult",
    "generalized_eigs",
    "preconditioned_operator_spectrum",
]


class NotPositiveDefiniteError(RuntimeError):
    """A matrix required to be SPD failed its factorization."""


def _as_dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor R with M = R R^T (dense, no permutation)."""

    lower: np.ndarray
    permutation: None = None

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve R R^T x = rhs."""
        y = sla.solve_triangular(self.lower, rhs, lower=True)
        return sla.solve_triangular(self.lower.T, y, lower=False)

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        """Solve R y = rhs (the half transform)."""
        return sla.solve_triangular(self.lower, rhs, lower=True)

    def apply_upper_t(self, x: np.ndarray) -> np.ndarray:
        """R^T x, mapping generalized eigenvectors to orthonormal ones."""
        return self.lower.T @ x

    def matmat(self, x: np.ndarray) -> np.ndarray:
        """(R R^T) x."""
        return self.lower @ (self.lower.T @ x)

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def cholesky(M) -> CholeskyFactor:
    """Complete Cholesky factorization of an SPD matrix."""
    dense = _as_dense(M)
    try:
        lower = sla.cholesky(dense, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"Cholesky failed, matrix is not SPD: {exc}") from exc
    return CholeskyFactor(lower)


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues with M-orthonormal eigenvectors.

    ``eigenvectors[:, i]`` satisfies A v = lambda_i M v and V^T M V = I.
    ``transformed`` holds the orthonormal eigenvectors of the symmetrized
    operator (R^T v) when the spectrum was computed through an explicit
    factor, else None.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray
    transformed: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,lambda\n")
            for i, lam in enumerate(self.eigenvalues):
                fh.write(f"{i},{float(lam)!r}\n")


def _residuals(A, M_apply, eigenvalues, eigenvectors) -> np.ndarray:
    Av = A @ eigenvectors
    Mv = M_apply(eigenvectors)
    return np.linalg.norm(Av - Mv * eigenvalues[None, :], axis=0)


def generalized_eigs(A, L) -> SpectrumResult:
    """Full spectrum of L^-1 A for SPD sparse/dense A, L of equal order."""
    if A.shape != L.shape:
        raise ValueError(f"order mismatch: {A.shape} vs {L.shape}")
    Ad = _as_dense(A)
    Ld = _as_dense(L)
    try:
        w, v = sla.eigh(Ad, Ld)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"generalized eigensolve failed: {exc}")
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    res = _residuals(A, lambda x: L @ x, w, v)
    return SpectrumResult(w, v, res)


def preconditioned_operator_spectrum(A, factor) -> SpectrumResult:
    """Spectrum of C^-1 A C^-T for a triangular factor C (complete or
    incomplete Cholesky); equals the spectrum of (C C^T)^-1 A.

    The returned eigenvectors are the generalized ones (back-transformed
    and (C C^T)-orthonormal); ``transformed`` carries the orthonormal
    eigenvectors of C^-1 A C^-T themselves.
    """
    lower = factor.lower if isinstance(factor, CholeskyFactor) else factor.dense_lower()
    if not np.all(np.diag(lower) > 0):
        raise NotPositiveDefiniteError("triangular factor has a zero pivot")
    Ad = _as_dense(A)
    if Ad.shape[0] != lower.shape[0]:
        raise ValueError("order mismatch between matrix and factor")
    Y = sla.solve_triangular(lower, Ad, lower=True)
    X = sla.solve_triangular(lower, Y.T, lower=True).T
    X = 0.5 * (X + X.T)
    w, vbar = sla.eigh(X)
    order = np.argsort(w, kind="stable")
    w, vbar = w[order], vbar[:, order]
    v = sla.solve_triangular(lower.T, vbar, lower=False)
    res = _residuals(A, lambda x: lower @ (lower.T @ x), w, v)
    return SpectrumResult(w, v, res, transformed=vbar)
