"""P1 finite element assembly of stiffness matrices and load vectors.

Matrices are assembled over all mesh nodes and restricted to the interior
dofs by elimination; inhomogeneous Dirichlet data enters the right-hand
side through the standard lifting.  Matrices are returned as scipy CSR
with both triangles stored.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coefficient import constant_field
from .mesh import Mesh
from .quadrature import QuadratureRule, midpoint_rule

__all__ = [
    "assemble_stiffness",
    "assemble_laplacian",
    "assemble_rhs",
    "check_symmetric",
    "export_matrix",
    "export_vector",
]


def _p1_geometry(mesh: Mesh):
    """Areas and constant P1 gradients per triangle."""
    p = mesh.nodes[mesh.triangles]
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    areas = 0.5 * (e2[:, 0] * (-e1[:, 1]) - (-e1[:, 0]) * e2[:, 1])
    # grad(phi_i) = rot90(opposite edge) / (2A)
    grads = np.empty((len(p), 3, 2))
    for i, e in enumerate((e0, e1, e2)):
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def _mean_coefficient(mesh: Mesh, field, quad: QuadratureRule) -> np.ndarray:
    """Quadrature average of k on every triangle."""
    tri_coords = mesh.nodes[mesh.triangles]
    points = quad.physical_points(tri_coords)  # (T, q, 2)
    tris = np.arange(mesh.n_triangles)
    vals = field.values_on_triangles(points, mesh.barycenters(), tris)
    if np.any(vals <= 0):
        t, q = np.unravel_index(int(np.argmin(vals)), vals.shape)
        raise ValueError(
            f"coefficient is non-positive ({vals[t, q]:.3e}) at a quadrature "
            f"node of triangle {t}; the bilinear form is not coercive")
    return vals @ quad.weights


def _assemble_full(mesh: Mesh, field=None,
                   quad: QuadratureRule | None = None) -> sp.csr_array:
    """Stiffness matrix over all nodes (no boundary elimination)."""
    quad = quad or midpoint_rule()
    areas, grads = _p1_geometry(mesh)
    if field is None:
        kbar = np.ones(mesh.n_triangles)
    else:
        kbar = _mean_coefficient(mesh, field, quad)
    local = np.einsum("tid,tjd->tij", grads, grads)
    local *= (kbar * areas)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, 3).ravel()
    full = sp.coo_array((local.ravel(), (rows, cols)),
                        shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    return full


def _restrict(full: sp.csr_array, mesh: Mesh) -> sp.csr_array:
    free = mesh.free_nodes
    return full[np.ix_(free, free)].tocsr()


def assemble_stiffness(mesh: Mesh, field,
                       quad: QuadratureRule | None = None) -> sp.csr_array:
    """SPD stiffness matrix of the form integral(k grad u . grad v) over the
    interior dofs; entry (i,j) sums w_q k(x_q) grad(phi_i).grad(phi_j) per
    triangle (P1 gradients are constant per triangle)."""
    A = _restrict(_assemble_full(mesh, field, quad), mesh)
    return A


def assemble_laplacian(mesh: Mesh) -> sp.csr_array:
    """Stiffness matrix with k = 1 (exact: the integrand is constant)."""
    return _restrict(_assemble_full(mesh, None), mesh)


def assemble_rhs(mesh: Mesh, field=None, source=None, dirichlet=None,
                 quad: QuadratureRule | None = None) -> np.ndarray:
    """Load vector with Dirichlet lifting over the interior dofs.

    b_i = integral(f phi_i) - sum_boundary A_full[i, j] g(x_j).  ``source``
    and ``dirichlet`` are callables on (n, 2) point arrays; ``None`` means
    zero.  ``field`` is the coefficient of the lifted operator (defaults
    to 1, the Laplacian).
    """
    quad = quad or midpoint_rule()
    b = np.zeros(mesh.n_nodes)
    if source is not None:
        areas, _ = _p1_geometry(mesh)
        tri_coords = mesh.nodes[mesh.triangles]
        points = quad.physical_points(tri_coords)
        fvals = np.asarray(source(points.reshape(-1, 2))).reshape(
            mesh.n_triangles, -1)
        # phi_i at the quadrature nodes equals the barycentric coordinate
        contrib = np.einsum("q,tq,qi->ti", quad.weights, fvals, quad.points)
        np.add.at(b, mesh.triangles.ravel(),
                  (contrib * areas[:, None]).ravel())
    if dirichlet is not None:
        g = np.asarray(dirichlet(mesh.nodes[mesh.boundary_nodes]))
        if np.any(g != 0.0):
            full = _assemble_full(mesh, field, quad)
            lift = full[np.ix_(mesh.free_nodes, mesh.boundary_nodes)] @ g
            return b[mesh.free_nodes] - lift
    return b[mesh.free_nodes]


def check_symmetric(M: sp.sparray, rtol: float = 1e-14) -> float:
    """Max absolute asymmetry relative to the max entry; raises past rtol."""
    diff = (M - M.T).tocoo()
    worst = np.abs(diff.data).max() if diff.nnz else 0.0
    scale = np.abs(M.tocoo().data).max()
    if worst > rtol * scale:
        raise AssertionError(f"matrix asymmetry {worst:.3e} above tolerance")
    return float(worst / scale) if scale else 0.0


def export_matrix(path, M: sp.sparray) -> None:
    """Matrix Market coordinate output, declared symmetric."""
    scipy.io.mmwrite(path, sp.coo_matrix(M), symmetry="symmetric")


def export_vector(path, v: np.ndarray) -> None:
    np.savetxt(path, np.asarray(v), fmt="%.17g")
