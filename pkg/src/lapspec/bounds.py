"""Nodal-value error bounds for the paired eigenvalues.

For each dof the paired eigenvalue is compared against the coefficient at
the node.  Three upper bounds are evaluated: the range bound
max|k - k(node)| over the support (from the sampled interval), the first
Taylor term h_hat * |grad k(node)|, and the full Taylor bound adding
h_hat^2/2 times a sampled maximum of the Hessian norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficient import SamplingRule, nodal_values, support_intervals
from .mesh import Mesh, support_patch

__all__ = ["BoundReport", "evaluate_bounds", "convergence_table",
           "ConvergenceRow"]


@dataclass(frozen=True)
class BoundReport:
    """Per-dof gap between paired eigenvalue and nodal value, with bounds.

    Taylor columns hold NaN where they do not apply (no derivatives, or
    the support crosses a discontinuity of k).
    """

    dofs: np.ndarray
    lam: np.ndarray
    k_nodal: np.ndarray
    gap: np.ndarray
    loose_bound: np.ndarray
    taylor_first: np.ndarray
    taylor_full: np.ndarray
    applicable: np.ndarray
    h_hat: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("dof,lambda,k_nodal,gap,loose_bound,"
                     "taylor1,taylor_full,applicable\n")
            for i in range(len(self.dofs)):
                fh.write(
                    f"{self.dofs[i]},{float(self.lam[i])!r},"
                    f"{float(self.k_nodal[i])!r},"
                    f"{float(self.gap[i])!r},{float(self.loose_bound[i])!r},"
                    f"{float(self.taylor_first[i])!r},"
                    f"{float(self.taylor_full[i])!r},"
                    f"{int(self.applicable[i])}\n")


def _hessian_norm_max(field, mesh: Mesh, patch_tris, lattice_order: int):
    """Sampled max spectral norm of the Hessian over a support patch."""
    m = lattice_order
    bary = np.array([(i / m, j / m, (m - i - j) / m)
                     for i in range(m + 1) for j in range(m + 1 - i)])
    coords = mesh.nodes[mesh.triangles[patch_tris]]
    pts = np.einsum("sk,tkd->tsd", bary, coords).reshape(-1, 2)
    H = field.hessian(pts)
    a, b, c = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    half_sum = 0.5 * (a + c)
    radius = np.sqrt((0.5 * (a - c)) ** 2 + b ** 2)
    spectral = np.maximum(np.abs(half_sum + radius), np.abs(half_sum - radius))
    return float(spectral.max())


def evaluate_bounds(field, mesh: Mesh, pairing, spectrum,
                    sampler: SamplingRule | None = None,
                    hessian_safety: float = 1.1,
                    hessian_lattice: int = 4) -> BoundReport:
    """Gap and bound columns for every dof of a matched pairing.

    The range bound uses the same sampler as the support intervals.  The
    Hessian maximum is sampled on a denser barycentric lattice and
    inflated by ``hessian_safety``.
    """
    if not pairing.matched:
        raise ValueError("bounds require a perfect pairing")
    eigs = np.asarray(spectrum.eigenvalues)
    n = mesh.n_free
    intervals = support_intervals(field, mesh, sampler)
    k_nod = nodal_values(field, mesh)
    lam = eigs[pairing.pi]
    gap = np.abs(lam - k_nod)
    kmin = np.array([iv.kmin for iv in intervals])
    kmax = np.array([iv.kmax for iv in intervals])
    loose = np.maximum(kmax - k_nod, k_nod - kmin)

    taylor1 = np.full(n, np.nan)
    taylor_full = np.full(n, np.nan)
    applicable = np.zeros(n, dtype=bool)
    h_hats = np.empty(n)
    if field.has_gradient:
        grads = field.gradient(mesh.free_coords())
        gnorm = np.linalg.norm(grads, axis=1)
    for dof in range(n):
        tris, patch_nodes, h_hat = support_patch(mesh, dof)
        h_hats[dof] = h_hat
        if not field.has_gradient:
            continue
        patch_coords = mesh.nodes[mesh.triangles[tris]]
        if not field.smooth_on_patch(patch_coords):
            continue
        applicable[dof] = True
        taylor1[dof] = h_hat * gnorm[dof]
        if field.has_hessian:
            hmax = _hessian_norm_max(field, mesh, tris, hessian_lattice)
            taylor_full[dof] = taylor1[dof] + \
                0.5 * h_hat ** 2 * hessian_safety * hmax

    return BoundReport(
        dofs=np.arange(n), lam=lam, k_nodal=k_nod, gap=gap,
        loose_bound=loose, taylor_first=taylor1, taylor_full=taylor_full,
        applicable=applicable, h_hat=h_hats)


@dataclass(frozen=True)
class ConvergenceRow:
    cells: int
    n_free: int
    h_hat_max: float
    max_gap: float
    median_gap: float


def convergence_table(field, cells_list, corners=(0.0, 1.0),
                      diagonal: str = "tr", eps: float = 1e-9):
    """Gap statistics on a sequence of uniform meshes.

    Returns (rows, slope) where slope is the least-squares slope of
    log(max gap) against log(h_hat_max); at least linear decay is the
    expected behavior for smooth coefficients.
    """
    from .assembly import assemble_laplacian, assemble_stiffness
    from .localization import pair_spectrum
    from .mesh import uniform_square
    from .spectral import generalized_eigs

    if len(cells_list) < 2:
        raise ValueError("need at least two resolutions")
    rows = []
    for cells in cells_list:
        mesh = uniform_square(cells, corners, diagonal)
        A = assemble_stiffness(mesh, field)
        L = assemble_laplacian(mesh)
        spectrum = generalized_eigs(A, L)
        intervals = support_intervals(field, mesh)
        pairing = pair_spectrum(spectrum, intervals, eps,
                                nodal_values(field, mesh))
        report = evaluate_bounds(field, mesh, pairing, spectrum)
        rows.append(ConvergenceRow(
            cells=cells, n_free=mesh.n_free,
            h_hat_max=float(report.h_hat.max()),
            max_gap=float(report.gap.max()),
            median_gap=float(np.median(report.gap))))
    logs_h = np.log([r.h_hat_max for r in rows])
    logs_g = np.log([max(r.max_gap, 1e-300) for r in rows])
    slope = float(np.polyfit(logs_h, logs_g, 1)[0])
    return rows, slope
