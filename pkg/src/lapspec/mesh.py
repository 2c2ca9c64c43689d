"""Conforming triangular meshes of the computational domains.

Provides structured meshes of squares, a re-entrant corner domain, local
refinement by newest-vertex bisection with conformity closure, and access
to the nodal basis supports (patches).

Triangles are stored counterclockwise.  The edge between the first two
vertices of each triangle is its bisection base edge; for structured
meshes this is the cell diagonal (the longest edge), which keeps newest
vertex bisection shape regular.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Mesh",
    "Rectangle",
    "HalfPlanes",
    "uniform_square",
    "refine_local",
    "reentrant_corner",
    "support_patch",
    "validate",
    "write_mesh",
    "read_mesh",
]


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle used to select triangles for refinement."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )


@dataclass(frozen=True)
class HalfPlanes:
    """Conjunction of half planes a*x + b*y <= c, one row (a, b, c) each."""

    rows: tuple

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        for a, b, c in self.rows:
            ok &= a * pts[:, 0] + b * pts[:, 1] <= c
        return ok


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with Dirichlet boundary bookkeeping.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array
        Node coordinates.
    triangles : (n_tri, 3) int array
        Counterclockwise connectivity; edge (t0, t1) is the bisection base.
    boundary_nodes : int array
        Sorted indices of nodes on the boundary (Dirichlet everywhere).
    free_nodes : int array
        Sorted indices of interior nodes; position j is the dof number j.
    node_patch : tuple of int arrays
        For each node, the indices of the incident triangles.  The union
        of those triangles is the support of the nodal basis function.
    refine_warning : str or None
        Set when a refinement request did not intersect the mesh.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    free_nodes: np.ndarray
    node_patch: tuple
    refine_warning: str | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)

    def areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)

    def barycenters(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def triangle_coords(self, tri: int) -> np.ndarray:
        return self.nodes[self.triangles[tri]]

    def free_coords(self) -> np.ndarray:
        return self.nodes[self.free_nodes]

    def dof_index(self) -> np.ndarray:
        """Map node index -> dof number, -1 for boundary nodes."""
        idx = np.full(self.n_nodes, -1, dtype=int)
        idx[self.free_nodes] = np.arange(self.n_free)
        return idx

    def min_diameter(self, where: np.ndarray | None = None) -> float:
        tris = self.triangles if where is None else self.triangles[where]
        p = self.nodes[tris]
        d01 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        d12 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        d20 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        return float(np.max(np.column_stack([d01, d12, d20]), axis=1).min())


def _signed_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def _edge_counts(tris: np.ndarray) -> dict:
    counts: dict = {}
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            counts[key] = counts.get(key, 0) + 1
    return counts


def _detect_boundary(tris: np.ndarray) -> np.ndarray:
    counts = _edge_counts(tris)
    nodes = set()
    for (u, v), c in counts.items():
        if c == 1:
            nodes.add(u)
            nodes.add(v)
    return np.array(sorted(nodes), dtype=int)


def _node_patches(n_nodes: int, tris: np.ndarray) -> tuple:
    lists: list = [[] for _ in range(n_nodes)]
    for t, (a, b, c) in enumerate(tris):
        lists[a].append(t)
        lists[b].append(t)
        lists[c].append(t)
    return tuple(np.array(l, dtype=int) for l in lists)


def _finalize(nodes: np.ndarray, tris: np.ndarray,
              refine_warning: str | None = None) -> Mesh:
    nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float))
    tris = np.ascontiguousarray(np.asarray(tris, dtype=int))
    areas = _signed_areas(nodes, tris)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise ValueError(
            f"triangle {bad} has non-positive area {areas[bad]:.3e}")
    boundary = _detect_boundary(tris)
    all_nodes = np.arange(len(nodes))
    free = np.setdiff1d(all_nodes, boundary, assume_unique=False)
    patches = _node_patches(len(nodes), tris)
    for arr in (nodes, tris, boundary, free):
        arr.setflags(write=False)
    return Mesh(nodes, tris, boundary, free, patches, refine_warning)


def validate(mesh: Mesh, geometric: bool = False) -> None:
    """Raise if the mesh violates conformity or orientation invariants.

    With ``geometric=True`` additionally scan exposed edges for hanging
    nodes (a node lying strictly inside an edge); this is O(E*N) and meant
    for tests.
    """
    areas = mesh.areas()
    if np.any(areas <= 0):
        raise AssertionError("non-positive triangle area")
    counts = _edge_counts(mesh.triangles)
    if any(c > 2 for c in counts.values()):
        raise AssertionError("edge shared by more than two triangles")
    referenced = np.unique(mesh.triangles)
    if len(referenced) != mesh.n_nodes:
        raise AssertionError("mesh contains orphan nodes")
    both = np.concatenate([mesh.boundary_nodes, mesh.free_nodes])
    if len(np.unique(both)) != mesh.n_nodes or len(both) != mesh.n_nodes:
        raise AssertionError("boundary/free sets do not partition the nodes")
    for node in range(mesh.n_nodes):
        patch = mesh.node_patch[node]
        member = np.any(mesh.triangles[patch] == node, axis=1)
        if not member.all() or len(patch) == 0:
            raise AssertionError(f"bad patch for node {node}")
    if geometric:
        exposed = [e for e, c in counts.items() if c == 1]
        pts = mesh.nodes
        for u, v in exposed:
            a, b = pts[u], pts[v]
            ab = b - a
            L2 = ab @ ab
            t = ((pts - a) @ ab) / L2
            proj = a + np.outer(np.clip(t, 0, 1), ab)
            dist = np.linalg.norm(pts - proj, axis=1)
            inside = (t > 1e-10) & (t < 1 - 1e-10) & (dist < 1e-10 * np.sqrt(L2))
            inside[[u, v]] = False
            if inside.any():
                raise AssertionError(f"hanging node on edge ({u},{v})")


def uniform_square(cells_per_side: int, corners=(0.0, 1.0),
                   diagonal: str = "tr") -> Mesh:
    """Structured triangulation of the square [low, high]^2.

    Each of the cells_per_side^2 grid cells is split into two right
    triangles along a consistently oriented diagonal: ``"tr"`` runs
    bottom-left to top-right (default), ``"tl"`` top-left to bottom-right.
    The whole boundary is Dirichlet, leaving (cells_per_side - 1)^2
    interior dofs.
    """
    n = int(cells_per_side)
    if n < 1:
        raise ValueError("cells_per_side must be a positive integer")
    low, high = map(float, corners)
    if not high > low:
        raise ValueError("corners must satisfy low < high")
    if diagonal not in ("tr", "tl"):
        raise ValueError("diagonal must be 'tr' or 'tl'")

    ticks = np.linspace(low, high, n + 1)
    xx, yy = np.meshgrid(ticks, ticks)  # row-major: node = j*(n+1) + i
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    tris = []
    for j in range(n):
        for i in range(n):
            p00 = j * (n + 1) + i
            p10 = p00 + 1
            p01 = p00 + (n + 1)
            p11 = p01 + 1
            if diagonal == "tr":
                tris.append((p11, p00, p10))
                tris.append((p00, p11, p01))
            else:
                tris.append((p10, p01, p00))
                tris.append((p01, p10, p11))
    return _finalize(nodes, np.array(tris, dtype=int))


def refine_local(mesh: Mesh, region, steps: int) -> Mesh:
    """Bisect triangles whose barycenter lies in ``region``, ``steps`` times.

    Newest-vertex bisection with conformity closure: bisecting a base edge
    forces the neighbor across it to split as well, so the result has no
    hanging nodes.  Nodes of the input mesh keep their indices and
    coordinates.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0:
        return mesh

    nodes = [tuple(p) for p in mesh.nodes]
    tris = [tuple(t) for t in mesh.triangles]
    warned = mesh.refine_warning

    for step in range(steps):
        coords = np.asarray(nodes)
        bary = coords[np.asarray(tris)].mean(axis=1)
        marked = np.nonzero(region.contains(bary))[0]
        if len(marked) == 0:
            if step == 0:
                warned = "refinement region does not intersect the mesh"
                warnings.warn(warned, stacklevel=2)
            break
        nodes, tris = _bisect(nodes, tris, set(marked))
    return _finalize(np.asarray(nodes), np.asarray(tris, dtype=int),
                     refine_warning=warned)


def _bisect(nodes: list, tris: list, marked_tris: set):
    """One newest-vertex bisection sweep with closure."""
    def key(u, v):
        return (u, v) if u < v else (v, u)

    marked_edges = {key(t[0], t[1]) for i, t in enumerate(tris)
                    if i in marked_tris}
    # Closure: a triangle with any marked edge must have its base marked.
    changed = True
    while changed:
        changed = False
        for a, b, c in tris:
            base = key(a, b)
            if base in marked_edges:
                continue
            if key(b, c) in marked_edges or key(c, a) in marked_edges:
                marked_edges.add(base)
                changed = True

    midpoint: dict = {}

    def mid(u, v):
        k = key(u, v)
        if k not in midpoint:
            nodes.append((
                0.5 * (nodes[u][0] + nodes[v][0]),
                0.5 * (nodes[u][1] + nodes[v][1]),
            ))
            midpoint[k] = len(nodes) - 1
        return midpoint[k]

    out: list = []

    def split(a, b, c):
        # Children inherit the parent's remaining edges as their bases;
        # grandchildren bases are new edges, so recursion depth is <= 2.
        if key(a, b) not in marked_edges:
            out.append((a, b, c))
            return
        m = mid(a, b)
        split(c, a, m)
        split(b, c, m)

    for a, b, c in tris:
        split(a, b, c)
    return nodes, out


# Re-entrant corner domain: the unit square minus the wedge
#   { x > 0.8 y + 0.1  and  y < 0.8 x + 0.1 },
# a quadrilateral with apex (0.5, 0.5) reaching the corner (1, 0).
_WEDGE_AREA = 0.45


def _in_wedge(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    pts = np.atleast_2d(points)
    return ((pts[:, 0] - 0.8 * pts[:, 1] - 0.1 > tol)
            & (pts[:, 1] - 0.8 * pts[:, 0] - 0.1 < -tol))


def reentrant_corner(cells_per_side: int) -> Mesh:
    """Triangulate the unit square with the corner wedge removed.

    Starts from the structured square mesh, snaps nodes near the wedge
    edges onto them (horizontally for the steep edge, vertically for the
    shallow one, so outer boundary nodes slide along the boundary), then
    deletes triangles whose barycenter falls inside the wedge.  The whole
    remaining boundary, wedge edges included, is Dirichlet.

    ``cells_per_side`` must be even (and >= 4) so the wedge apex
    (0.5, 0.5) is a grid node.
    """
    n = int(cells_per_side)
    if n < 4:
        raise ValueError("cells_per_side must be at least 4")
    if n % 2:
        raise ValueError("cells_per_side must be even so the wedge apex "
                         "(0.5, 0.5) is a grid node")
    base = uniform_square(n, (0.0, 1.0), diagonal="tr")
    h = 1.0 / n
    nodes = np.array(base.nodes)

    # Steep edge x = 0.8 y + 0.1 (from (0.1, 0) to the apex): snap in x.
    on_segment = nodes[:, 1] <= 0.5 + 1e-12
    target_x = 0.8 * nodes[:, 1] + 0.1
    snap = on_segment & (np.abs(nodes[:, 0] - target_x) < 0.5 * h - 1e-12)
    nodes[snap, 0] = target_x[snap]

    # Shallow edge y = 0.8 x + 0.1 (from the apex to (1, 0.9)): snap in y.
    on_segment = nodes[:, 0] >= 0.5 - 1e-12
    target_y = 0.8 * nodes[:, 0] + 0.1
    snap = on_segment & (np.abs(nodes[:, 1] - target_y) < 0.5 * h - 1e-12)
    nodes[snap, 1] = target_y[snap]

    bary = nodes[base.triangles].mean(axis=1)
    keep = ~_in_wedge(bary)
    tris = base.triangles[keep]

    # Drop nodes that lost all their triangles and renumber.
    used = np.unique(tris)
    renum = np.full(len(nodes), -1, dtype=int)
    renum[used] = np.arange(len(used))
    tris = renum[tris]
    nodes = nodes[used]

    tris = _base_longest_edge(nodes, tris)
    mesh = _finalize(nodes, tris)
    if _in_wedge(mesh.barycenters()).any():
        raise AssertionError("wedge triangle survived the cut")
    return mesh


def _base_longest_edge(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Cyclically rotate triangles so the longest edge comes first."""
    p = nodes[tris]
    lengths = np.stack([
        np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
    ], axis=1)
    which = np.argmax(lengths, axis=1)
    out = np.array(tris)
    out[which == 1] = np.roll(tris[which == 1], -1, axis=1)
    out[which == 2] = np.roll(tris[which == 2], -2, axis=1)
    return out


def support_patch(mesh: Mesh, dof: int):
    """Triangles, nodes and radius of the basis support of a dof.

    Returns ``(triangle_indices, node_indices, h_hat)`` where ``h_hat`` is
    the largest distance from the dof's node to any patch vertex.  The
    maximum of the norm over the polygonal patch is attained at a vertex,
    so this is exact.
    """
    if not 0 <= dof < mesh.n_free:
        raise IndexError(f"dof {dof} out of range 0..{mesh.n_free - 1}")
    node = mesh.free_nodes[dof]
    tri_ids = mesh.node_patch[node]
    patch_nodes = np.unique(mesh.triangles[tri_ids])
    center = mesh.nodes[node]
    h_hat = float(np.linalg.norm(mesh.nodes[patch_nodes] - center,
                                 axis=1).max())
    return tri_ids, patch_nodes, h_hat


def write_mesh(path, mesh: Mesh) -> None:
    """Plain-text export: header, coordinates, connectivity, boundary."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_nodes} nodes {mesh.n_triangles} triangles "
                 f"{len(mesh.boundary_nodes)} boundary\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for node in mesh.boundary_nodes:
            fh.write(f"{node}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        header = fh.readline().split()
        n_nodes, n_tris, n_bdry = int(header[0]), int(header[2]), int(header[4])
        nodes = np.array([[float(v) for v in fh.readline().split()]
                          for _ in range(n_nodes)])
        tris = np.array([[int(v) for v in fh.readline().split()]
                         for _ in range(n_tris)], dtype=int)
        bdry = np.array([int(fh.readline()) for _ in range(n_bdry)], dtype=int)
    mesh = _finalize(nodes, tris)
    if not np.array_equal(np.sort(bdry), mesh.boundary_nodes):
        raise ValueError("stored boundary does not match mesh topology")
    return mesh
