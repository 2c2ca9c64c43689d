"""Preconditioned conjugate gradients and its convergence analysis.

Includes a drop-tolerance incomplete Cholesky factorization, PCG with
energy-norm error tracking, Ritz values recovered from the CG recurrence
coefficients (the Lanczos tridiagonal), the distribution function of a
preconditioned system, and the composite convergence bound driven by the
effective condition number.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .spectral import CholeskyFactor, NotPositiveDefiniteError, cholesky

__all__ = [
    "IcholBreakdownError",
    "IncompleteFactor",
    "ichol",
    "Preconditioner",
    "laplace_preconditioner",
    "ichol_preconditioner",
    "exact_preconditioner",
    "identity_preconditioner",
    "PcgTrace",
    "pcg",
    "ritz_values",
    "DistributionFunction",
    "distribution_function",
    "effective_condition_bound",
]


class IcholBreakdownError(NotPositiveDefiniteError):
    """Incomplete factorization hit a non-positive pivot."""


@dataclass
class IncompleteFactor:
    """Sparse lower-triangular C with C C^T approximating A.

    Solves go through a cached dense copy (BLAS triangular solves); the
    problem sizes here are desk scale and exactness beats memory thrift.
    """

    C: sp.csr_array
    droptol: float
    _dense: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def dense_lower(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.C.toarray()
        return self._dense

    @property
    def lower(self) -> np.ndarray:
        return self.dense_lower()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve C C^T x = rhs (two triangular sweeps)."""
        lo = self.dense_lower()
        y = sla.solve_triangular(lo, rhs, lower=True)
        return sla.solve_triangular(lo.T, y, lower=False)

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        return sla.solve_triangular(self.dense_lower(), rhs, lower=True)

    def apply_upper_t(self, x: np.ndarray) -> np.ndarray:
        return self.C.T @ x

    def matmat(self, x: np.ndarray) -> np.ndarray:
        return self.C @ (self.C.T @ x)


def ichol(A, droptol: float) -> IncompleteFactor:
    """Column-oriented incomplete Cholesky with drop tolerance.

    ILUT-style magnitude test: an off-diagonal entry of the working
    (Schur-complement) column is dropped, before the pivot scaling, when
    its magnitude falls below droptol times the 2-norm of that working
    column; the diagonal is always kept.  droptol=0 reproduces the
    complete factorization.  A non-positive pivot raises; no diagonal
    shift is attempted.
    """
    if droptol < 0:
        raise ValueError("droptol must be non-negative")
    A = sp.csc_array(A)
    n = A.shape[0]
    lower_cols = []
    for j in range(n):
        col = A[:, [j]].tocoo()
        mask = col.row >= j
        rows, vals = col.row[mask], col.data[mask]
        order = np.argsort(rows)
        lower_cols.append((rows[order], vals[order]))

    fact_rows = [None] * n   # row indices (strictly below diagonal)
    fact_vals = [None] * n
    diag = np.empty(n)
    # row_links[i]: columns k < i with a kept entry C[i, k]
    row_links: list = [[] for _ in range(n)]

    for j in range(n):
        rows_j, vals_j = lower_cols[j]
        acc = dict(zip(rows_j.tolist(), vals_j.tolist()))
        for k, ljk in row_links[j]:
            rk, vk = fact_rows[k], fact_vals[k]
            start = np.searchsorted(rk, j)  # rk[start] == j (the C[j,k] entry)
            for i, lik in zip(rk[start:].tolist(), vk[start:].tolist()):
                acc[i] = acc.get(i, 0.0) - ljk * lik
        pivot = acc.pop(j, 0.0)
        if pivot <= 0.0:
            raise IcholBreakdownError(
                f"non-positive pivot {pivot:.3e} in column {j}")
        dj = np.sqrt(pivot)
        diag[j] = dj
        if acc:
            rows = np.fromiter(acc.keys(), dtype=int)
            vals = np.fromiter(acc.values(), dtype=float)
            threshold = droptol * np.sqrt(vals @ vals + pivot * pivot)
            keep = np.abs(vals) >= threshold
            rows, vals = rows[keep], vals[keep] / dj
            order = np.argsort(rows)
            rows, vals = rows[order], vals[order]
        else:
            rows = np.empty(0, dtype=int)
            vals = np.empty(0)
        fact_rows[j] = rows
        fact_vals[j] = vals
        for i, v in zip(rows.tolist(), vals.tolist()):
            row_links[i].append((j, v))

    indptr = np.zeros(n + 1, dtype=int)
    for j in range(n):
        indptr[j + 1] = indptr[j] + 1 + len(fact_rows[j])
    indices = np.empty(indptr[-1], dtype=int)
    data = np.empty(indptr[-1])
    for j in range(n):
        s = indptr[j]
        indices[s] = j
        data[s] = diag[j]
        indices[s + 1:indptr[j + 1]] = fact_rows[j]
        data[s + 1:indptr[j + 1]] = fact_vals[j]
    C = sp.csc_array((data, indices, indptr), shape=(n, n)).tocsr()
    return IncompleteFactor(C, droptol)


@dataclass(frozen=True)
class Preconditioner:
    """Wrapper mapping residuals to preconditioned residuals z = M^-1 r."""

    kind: str
    factor: object | None = None

    def apply(self, r: np.ndarray) -> np.ndarray:
        if self.factor is None:
            return r.copy()
        return self.factor.solve(r)


def laplace_preconditioner(L) -> Preconditioner:
    return Preconditioner("laplace", cholesky(L))


def ichol_preconditioner(A, droptol: float = 1e-2) -> Preconditioner:
    return Preconditioner(f"ichol({droptol:g})", ichol(A, droptol))


def exact_preconditioner(A) -> Preconditioner:
    return Preconditioner("exact", cholesky(A))


def identity_preconditioner() -> Preconditioner:
    return Preconditioner("none", None)


@dataclass
class PcgTrace:
    """Per-iteration record of one PCG run.

    ``energy_errors[m]`` is ||x - x_m||_A / ||x - x_0||_A (filled when the
    exact solution was supplied), ``residuals[m]`` the unpreconditioned
    residual norm; ``gammas``/``deltas`` are the CG recurrence
    coefficients that define the Lanczos tridiagonal.
    """

    preconditioner: str
    residuals: np.ndarray = dataclass_field(default_factory=lambda: np.empty(0))
    energy_errors: np.ndarray | None = None
    gammas: np.ndarray = dataclass_field(default_factory=lambda: np.empty(0))
    deltas: np.ndarray = dataclass_field(default_factory=lambda: np.empty(0))
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    x: np.ndarray | None = None

    def iterations_to(self, energy_level: float) -> int:
        """First iteration with relative energy error <= energy_level."""
        if self.energy_errors is None:
            raise ValueError("trace has no energy errors")
        hits = np.nonzero(self.energy_errors <= energy_level)[0]
        if len(hits) == 0:
            raise ValueError(f"energy level {energy_level} never reached")
        return int(hits[0])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,rel_energy_error,residual\n")
            for m in range(len(self.residuals)):
                e = (self.energy_errors[m] if self.energy_errors is not None
                     else float("nan"))
                fh.write(f"{m},{float(e)!r},{float(self.residuals[m])!r}\n")


def pcg(A, b, preconditioner: Preconditioner | None = None, x0=None,
        max_iter: int | None = None, tol: float = 1e-10,
        x_exact=None, energy_tol: float | None = None) -> PcgTrace:
    """Standard preconditioned conjugate gradients with bookkeeping.

    Stops on relative residual ||r|| <= tol * ||b||, on relative energy
    error <= energy_tol (when the exact solution is given), or at
    max_iter.  Raises NotPositiveDefiniteError when an indefinite
    operator or preconditioner is detected; an energy-error growth beyond
    10x flags divergence and aborts.
    """
    M = preconditioner or identity_preconditioner()
    b = np.asarray(b, dtype=float)
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if max_iter is None:
        max_iter = n
    r = b - A @ x
    z = M.apply(r)
    p = z.copy()
    rz = float(r @ z)
    if rz < 0:
        raise NotPositiveDefiniteError("preconditioner is not SPD")

    residuals = [float(np.linalg.norm(r))]
    gammas: list = []
    deltas: list = []
    track_energy = x_exact is not None
    energies = None
    if track_energy:
        x_exact = np.asarray(x_exact, dtype=float)
        e = x_exact - x
        e0 = float(np.sqrt(e @ (A @ e)))
        energies = [1.0]
    converged = False
    diverged = False
    if residuals[0] == 0.0:
        converged = True
        max_iter = 0

    m = 0
    while m < max_iter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise NotPositiveDefiniteError("operator is not SPD in PCG")
        gamma = rz / pAp
        gammas.append(gamma)
        x += gamma * p
        r -= gamma * Ap
        m += 1
        residuals.append(float(np.linalg.norm(r)))
        if track_energy:
            e = x_exact - x
            val = float(np.sqrt(max(e @ (A @ e), 0.0))) / e0
            energies.append(val)
            if val > 10.0 * min(energies):
                # real divergence vs. wobble at the stagnation floor
                diverged = val > 1e-8
                break
        if residuals[-1] <= tol * residuals[0]:
            converged = True
            break
        if energy_tol is not None and track_energy \
                and energies[-1] <= energy_tol:
            converged = True
            break
        z = M.apply(r)
        rz_new = float(r @ z)
        if rz_new <= 0:
            raise NotPositiveDefiniteError("preconditioner is not SPD")
        delta = rz_new / rz
        deltas.append(delta)
        p = z + delta * p
        rz = rz_new

    return PcgTrace(
        preconditioner=M.kind,
        residuals=np.array(residuals),
        energy_errors=np.array(energies) if track_energy else None,
        gammas=np.array(gammas),
        deltas=np.array(deltas),
        iterations=m,
        converged=converged,
        diverged=diverged,
        x=x)


def ritz_values(trace: PcgTrace, m: int) -> np.ndarray:
    """Ascending Ritz values after m iterations.

    The Lanczos tridiagonal is rebuilt from the CG coefficients: diagonal
    1/gamma_j + delta_j/gamma_{j-1}, off-diagonal sqrt(delta_j)/gamma_{j-1}.
    """
    if m < 1 or m > len(trace.gammas):
        raise ValueError(f"iteration {m} outside the recorded range")
    g = trace.gammas[:m]
    d = trace.deltas[:m - 1]
    diag = 1.0 / g
    if m > 1:
        diag[1:] += d / g[:-1]
        off = np.sqrt(d) / g[:-1]
    else:
        off = np.empty(0)
    return sla.eigh_tridiagonal(diag, off, eigvals_only=True)


@dataclass(frozen=True)
class DistributionFunction:
    """Points of increase and weights of the CG distribution function."""

    lambdas: np.ndarray
    weights: np.ndarray
    provenance: str

    def merged(self, tol: float = 1e-8) -> "DistributionFunction":
        """Merge eigenvalue clusters closer than tol (relative), summing
        their weights; the merged point is the weighted mean."""
        lam = self.lambdas
        w = self.weights
        groups = []
        start = 0
        for i in range(1, len(lam) + 1):
            if i == len(lam) or \
                    lam[i] - lam[i - 1] > tol * max(1.0, abs(lam[i])):
                groups.append((start, i))
                start = i
        out_l = np.empty(len(groups))
        out_w = np.empty(len(groups))
        for g, (a, b) in enumerate(groups):
            wsum = w[a:b].sum()
            out_w[g] = wsum
            out_l[g] = (lam[a:b] @ w[a:b] / wsum) if wsum > 0 \
                else lam[a:b].mean()
        return DistributionFunction(out_l, out_w,
                                    self.provenance + "|merged")

    def visible(self, floor: float = 1e-8) -> "DistributionFunction":
        keep = self.weights > floor
        return DistributionFunction(self.lambdas[keep], self.weights[keep],
                                    self.provenance + "|visible")

    def to_csv(self, path) -> None:
        cum = np.cumsum(self.weights)
        with open(path, "w") as fh:
            fh.write("lambda,weight,cumulative\n")
            for lam, w, c in zip(self.lambdas, self.weights, cum):
                fh.write(f"{float(lam)!r},{float(w)!r},{float(c)!r}\n")


def distribution_function(spectrum, b, factor,
                          provenance: str = "") -> DistributionFunction:
    """Weights |vbar_i^T q|^2 of the preconditioned system for rhs b.

    q is the normalized transformed initial residual C^-1 b (x_0 = 0) and
    vbar_i the orthonormal eigenvectors of C^-1 A C^-T, taken from the
    spectrum when available (falling back to transforming the generalized
    eigenvectors).
    """
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        raise ValueError("zero right-hand side has no distribution function")
    q = factor.solve_lower(b)
    q = q / np.linalg.norm(q)
    if spectrum.transformed is not None:
        vbar = spectrum.transformed
    else:
        vbar = factor.apply_upper_t(spectrum.eigenvectors)
    w = (vbar.T @ q) ** 2
    return DistributionFunction(np.asarray(spectrum.eigenvalues), w,
                                provenance)


def effective_condition_bound(dist: DistributionFunction, drop_low: int,
                              drop_high: int, start_iter: int,
                              weight_floor: float = 1e-8,
                              cluster_tol: float = 1e-8):
    """Effective condition number after discarding approximated outliers.

    Clusters the distribution, keeps points of increase with weight above
    ``weight_floor``, drops ``drop_low`` points from the bottom and
    ``drop_high`` from the top, and returns (kappa_e, bound) where
    bound(k) = 2 ((sqrt(kappa_e)-1)/(sqrt(kappa_e)+1))^(k - start_iter).
    """
    vis = dist.merged(cluster_tol).visible(weight_floor)
    lam = vis.lambdas
    if drop_low + drop_high >= len(lam):
        raise ValueError("dropping all remaining points of increase")
    lam = lam[drop_low:len(lam) - drop_high if drop_high else None]
    kappa = float(lam[-1] / lam[0])
    rate = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)

    def bound(k):
        k = np.asarray(k, dtype=float)
        return 2.0 * rate ** (k - start_iter)

    return kappa, bound
