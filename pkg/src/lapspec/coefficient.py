"""Scalar coefficient fields k(x, y) and their ranges over basis supports.

A field evaluates pointwise and, separately, per triangle: for piecewise
definitions the per-triangle evaluation resolves points on a region
interface by the triangle's barycenter, so assembly and support-interval
sampling see one consistent value per triangle.  That keeps the discrete
eigenvalue/interval pairing exact for meshes aligned with the interfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .quadrature import QuadratureRule, midpoint_rule

__all__ = [
    "SupportInterval",
    "SamplingRule",
    "AnalyticField",
    "QuadrantField",
    "SplitField",
    "ElementField",
    "builtin",
    "constant_field",
    "linear_field",
    "random_element_field",
    "load_element_field",
    "support_interval",
    "support_intervals",
    "nodal_values",
    "kellogg_solution",
    "QUADRANT_HIGH",
]

# Checkerboard benchmark constant: cot^2(pi/40), the jump ratio for which
# u = r^0.1 * mu(theta) solves the four-quadrant interface problem.
QUADRANT_HIGH = 161.4476387975881

_KELLOGG_GAMMA = 0.1
_KELLOGG_RHO = np.pi / 4
_KELLOGG_SIGMA = -4.75 * np.pi


class AnalyticField:
    """Coefficient given by a smooth closed-form expression."""

    kind = "analytic"

    def __init__(self, fn, grad=None, hess=None, name="analytic",
                 alpha=None, constant=None):
        self._fn = fn
        self._grad = grad
        self._hess = hess
        self.name = name
        self.alpha = alpha
        self.constant = constant

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._fn(pts[:, 0], pts[:, 1])

    def values_on_triangles(self, points, barycenters, tris):
        shape = points.shape[:-1]
        flat = points.reshape(-1, 2)
        return self._fn(flat[:, 0], flat[:, 1]).reshape(shape)

    def triangle_constants(self, tri_coords, barycenters, tris):
        n = len(barycenters)
        if self.constant is not None:
            return np.full(n, self.constant)
        return np.full(n, np.nan)

    def smooth_on_patch(self, patch_coords) -> bool:
        return True

    @property
    def has_gradient(self):
        return self._grad is not None

    @property
    def has_hessian(self):
        return self._hess is not None

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._grad(pts[:, 0], pts[:, 1])

    def hessian(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._hess(pts[:, 0], pts[:, 1])


class QuadrantField:
    """Piecewise constant by axis quadrant: QUADRANT_HIGH on the first and
    third quadrants, 1 elsewhere (points on the axes resolve to the
    closed lower-left rule x<=0, y<=0)."""

    kind = "piecewise"

    def __init__(self, high=QUADRANT_HIGH, low=1.0):
        self.high = float(high)
        self.low = float(low)
        self.name = "quadrant"
        self.alpha = min(self.high, self.low)

    def _value(self, x, y):
        first_or_third = (x > 0) == (y > 0)
        return np.where(first_or_third, self.high, self.low)

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._value(pts[:, 0], pts[:, 1])

    def values_on_triangles(self, points, barycenters, tris):
        vals = self._value(barycenters[:, 0], barycenters[:, 1])
        return np.broadcast_to(vals[:, None], points.shape[:-1]).copy()

    def triangle_constants(self, tri_coords, barycenters, tris):
        vals = self._value(barycenters[:, 0], barycenters[:, 1])
        x, y = tri_coords[..., 0], tri_coords[..., 1]
        tol = 1e-14
        x_one_side = (x.min(axis=-1) >= -tol) | (x.max(axis=-1) <= tol)
        y_one_side = (y.min(axis=-1) >= -tol) | (y.max(axis=-1) <= tol)
        out = np.where(x_one_side & y_one_side, vals, np.nan)
        return out

    def smooth_on_patch(self, patch_coords) -> bool:
        consts = self.triangle_constants(
            patch_coords[None] if patch_coords.ndim == 2 else patch_coords,
            np.atleast_2d(patch_coords.reshape(-1, 2).mean(axis=0)), None)
        x = patch_coords[..., 0]
        y = patch_coords[..., 1]
        tol = 1e-14
        x_one = (x.min() >= -tol) or (x.max() <= tol)
        y_one = (y.min() >= -tol) or (y.max() <= tol)
        return bool(x_one and y_one)

    has_gradient = True
    has_hessian = True

    def gradient(self, points):
        pts = np.atleast_2d(points)
        return np.zeros((len(pts), 2))

    def hessian(self, points):
        pts = np.atleast_2d(points)
        return np.zeros((len(pts), 2, 2))


class SplitField:
    """Two analytic fields glued along the horizontal line y = y0; the
    interface itself takes the upper field (half-open convention)."""

    kind = "piecewise"

    def __init__(self, upper: AnalyticField, lower: AnalyticField,
                 y0=0.5, name="split"):
        self.upper = upper
        self.lower = lower
        self.y0 = float(y0)
        self.name = name
        self.alpha = None

    def _side(self, y):
        return y >= self.y0

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        up = self._side(pts[:, 1])
        out = np.empty(len(pts))
        if up.any():
            out[up] = self.upper(pts[up])
        if (~up).any():
            out[~up] = self.lower(pts[~up])
        return out

    def values_on_triangles(self, points, barycenters, tris):
        up = self._side(barycenters[:, 1])
        shape = points.shape[:-1]
        out = np.empty(shape)
        if up.any():
            out[up] = self.upper.values_on_triangles(points[up], None, None)
        if (~up).any():
            out[~up] = self.lower.values_on_triangles(points[~up], None, None)
        return out

    def triangle_constants(self, tri_coords, barycenters, tris):
        return np.full(len(barycenters), np.nan)

    def smooth_on_patch(self, patch_coords) -> bool:
        y = patch_coords[..., 1]
        return bool(y.min() >= self.y0 or y.max() < self.y0)

    @property
    def has_gradient(self):
        return self.upper.has_gradient and self.lower.has_gradient

    @property
    def has_hessian(self):
        return self.upper.has_hessian and self.lower.has_hessian

    def _per_side(self, points, method):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        up = self._side(pts[:, 1])
        parts = []
        first = getattr(self.upper, method)(pts[:1])
        out = np.empty((len(pts),) + np.asarray(first).shape[1:])
        if up.any():
            out[up] = getattr(self.upper, method)(pts[up])
        if (~up).any():
            out[~up] = getattr(self.lower, method)(pts[~up])
        return out

    def gradient(self, points):
        return self._per_side(points, "gradient")

    def hessian(self, points):
        return self._per_side(points, "hessian")


class ElementField:
    """Piecewise constant per mesh triangle (bound to one mesh)."""

    kind = "element"

    def __init__(self, mesh: Mesh, values, name="element"):
        values = np.asarray(values, dtype=float)
        if len(values) != mesh.n_triangles:
            raise ValueError("one value per triangle required")
        if np.any(values <= 0):
            raise ValueError("coefficient values must be positive")
        self.mesh = mesh
        self.values = values
        self.name = name
        self.alpha = float(values.min())

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            out[i] = self.values[self._locate(p)]
        return out

    def _locate(self, p):
        # First triangle containing p (lowest index), barycentric test.
        coords = self.mesh.nodes[self.mesh.triangles]
        v0 = coords[:, 0]
        d1 = coords[:, 1] - v0
        d2 = coords[:, 2] - v0
        rhs = p - v0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        s = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det
        t = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det
        ok = (s >= -1e-12) & (t >= -1e-12) & (s + t <= 1 + 1e-12)
        hits = np.nonzero(ok)[0]
        if len(hits) == 0:
            raise ValueError(f"point {p} outside the mesh")
        return int(hits[0])

    def values_on_triangles(self, points, barycenters, tris):
        vals = self.values[tris]
        return np.broadcast_to(vals[:, None], points.shape[:-1]).copy()

    def triangle_constants(self, tri_coords, barycenters, tris):
        return self.values[tris]

    def smooth_on_patch(self, patch_coords) -> bool:
        return False

    has_gradient = False
    has_hessian = False


def constant_field(c: float) -> AnalyticField:
    c = float(c)
    if c <= 0:
        raise ValueError("constant coefficient must be positive")
    return AnalyticField(
        lambda x, y: np.full_like(np.asarray(x, dtype=float), c),
        grad=lambda x, y: np.zeros((len(np.atleast_1d(x)), 2)),
        hess=lambda x, y: np.zeros((len(np.atleast_1d(x)), 2, 2)),
        name=f"constant({c:g})", alpha=c, constant=c)


def linear_field(a0: float, ax: float, ay: float) -> AnalyticField:
    """k = a0 + ax*x + ay*y, handy for exactness checks."""
    def grad(x, y):
        n = len(np.atleast_1d(x))
        return np.tile([ax, ay], (n, 1))

    def hess(x, y):
        return np.zeros((len(np.atleast_1d(x)), 2, 2))

    return AnalyticField(lambda x, y: a0 + ax * x + ay * y,
                         grad=grad, hess=hess,
                         name=f"linear({a0:g},{ax:g},{ay:g})")


def _p1_field() -> AnalyticField:
    def hess(x, y):
        s = -np.sin(x + y)
        h = np.empty((len(np.atleast_1d(x)), 2, 2))
        h[:, 0, 0] = h[:, 0, 1] = h[:, 1, 0] = h[:, 1, 1] = s
        return h

    return AnalyticField(
        lambda x, y: np.sin(x + y),
        grad=lambda x, y: np.stack([np.cos(x + y), np.cos(x + y)], axis=-1),
        hess=hess, name="p1")


def _p2_field() -> AnalyticField:
    def val(x, y):
        return 1.0 + 50.0 * np.exp(-5.0 * (x ** 2 + y ** 2))

    def grad(x, y):
        e = 50.0 * np.exp(-5.0 * (x ** 2 + y ** 2))
        return np.stack([-10.0 * x * e, -10.0 * y * e], axis=-1)

    def hess(x, y):
        e = 50.0 * np.exp(-5.0 * (x ** 2 + y ** 2))
        h = np.empty((len(np.atleast_1d(x)), 2, 2))
        h[:, 0, 0] = (100.0 * x ** 2 - 10.0) * e
        h[:, 1, 1] = (100.0 * y ** 2 - 10.0) * e
        h[:, 0, 1] = h[:, 1, 0] = 100.0 * x * y * e
        return h

    return AnalyticField(val, grad=grad, hess=hess, name="p2", alpha=1.0)


def _p3_field() -> AnalyticField:
    c = 2.0 ** 7

    def hess(x, y):
        h = np.zeros((len(np.atleast_1d(x)), 2, 2))
        h[:, 0, 0] = 42.0 * c * x ** 5
        h[:, 1, 1] = 42.0 * c * y ** 5
        return h

    return AnalyticField(
        lambda x, y: c * (x ** 7 + y ** 7),
        grad=lambda x, y: np.stack([7 * c * x ** 6, 7 * c * y ** 6], axis=-1),
        hess=hess, name="p3")


def builtin(name: str, value: float | None = None):
    """Built-in fields: p1..p4, quadrant, constant (requires ``value``)."""
    key = name.lower()
    if key == "p1":
        return _p1_field()
    if key == "p2":
        return _p2_field()
    if key == "p3":
        return _p3_field()
    if key == "p4":
        return SplitField(upper=_p1_field(), lower=_p2_field(), name="p4")
    if key == "quadrant":
        return QuadrantField()
    if key == "constant":
        if value is None:
            raise ValueError("constant field needs a value")
        return constant_field(value)
    raise ValueError(f"unknown coefficient field '{name}'")


def random_element_field(mesh: Mesh, seed: int, low=1e-2, high=1e3) -> ElementField:
    """Per-triangle constants, log-uniform in [low, high]."""
    rng = np.random.default_rng(seed)
    vals = np.exp(rng.uniform(np.log(low), np.log(high), mesh.n_triangles))
    return ElementField(mesh, vals, name=f"random({seed})")


def load_element_field(mesh: Mesh, path) -> ElementField:
    """CSV rows ``triangle_index,value`` -> piecewise-constant field."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    vals = np.empty(mesh.n_triangles)
    vals[:] = np.nan
    vals[data[:, 0].astype(int)] = data[:, 1]
    if np.isnan(vals).any():
        raise ValueError("CSV does not cover every triangle")
    return ElementField(mesh, vals, name="csv")


# --- support intervals -----------------------------------------------------

@dataclass(frozen=True)
class SupportInterval:
    """Range of the coefficient over one basis support."""

    dof: int
    kmin: float
    kmax: float
    sample_count: int
    exactness: str  # "exact" or "sampled"


@dataclass(frozen=True)
class SamplingRule:
    """Where to sample k on each triangle of a support.

    The assembly quadrature nodes are always included, so the intervals
    are consistent with the assembled stiffness matrix.  On top of that a
    barycentric lattice of the given order (order 2 = vertices plus edge
    midpoints) and the barycenter are sampled.
    """

    quad: QuadratureRule = None
    lattice_order: int = 2
    include_barycenter: bool = True

    def barycentric_points(self) -> np.ndarray:
        quad = self.quad if self.quad is not None else midpoint_rule()
        pts = [quad.points]
        m = self.lattice_order
        lattice = [(i / m, j / m, (m - i - j) / m)
                   for i in range(m + 1) for j in range(m + 1 - i)]
        pts.append(np.array(lattice))
        if self.include_barycenter:
            pts.append(np.full((1, 3), 1.0 / 3.0))
        allpts = np.vstack(pts)
        _, keep = np.unique(np.round(allpts, 12), axis=0, return_index=True)
        return allpts[np.sort(keep)]


def _triangle_sample_values(field, mesh: Mesh, sampler: SamplingRule):
    bary_pts = sampler.barycentric_points()
    tri_coords = mesh.nodes[mesh.triangles]
    points = np.einsum("sk,tkd->tsd", bary_pts, tri_coords)
    barys = mesh.barycenters()
    tris = np.arange(mesh.n_triangles)
    vals = field.values_on_triangles(points, barys, tris)
    consts = field.triangle_constants(tri_coords, barys, tris)
    return vals, consts, bary_pts.shape[0]


def support_intervals(field, mesh: Mesh, sampler: SamplingRule | None = None,
                      dofs=None) -> list:
    """Support intervals for all (or the given) dofs."""
    sampler = sampler or SamplingRule()
    vals, consts, n_samples = _triangle_sample_values(field, mesh, sampler)
    tri_min = vals.min(axis=1)
    tri_max = vals.max(axis=1)
    if dofs is None:
        dofs = range(mesh.n_free)
    out = []
    for dof in dofs:
        node = mesh.free_nodes[dof]
        patch = mesh.node_patch[node]
        exact = not np.isnan(consts[patch]).any()
        out.append(SupportInterval(
            dof=int(dof),
            kmin=float(tri_min[patch].min()),
            kmax=float(tri_max[patch].max()),
            sample_count=int(len(patch) * n_samples),
            exactness="exact" if exact else "sampled"))
    return out


def support_interval(field, mesh: Mesh, dof: int,
                     sampler: SamplingRule | None = None) -> SupportInterval:
    if not 0 <= dof < mesh.n_free:
        raise IndexError(f"dof {dof} out of range 0..{mesh.n_free - 1}")
    return support_intervals(field, mesh, sampler, dofs=[dof])[0]


def nodal_values(field, mesh: Mesh) -> np.ndarray:
    """k at the free nodes (dof order)."""
    if field.kind == "element":
        vals = np.empty(mesh.n_free)
        for dof, node in enumerate(mesh.free_nodes):
            vals[dof] = field.values[mesh.node_patch[node].min()]
        return vals
    return field(mesh.free_coords())


# --- checkerboard boundary data --------------------------------------------

def kellogg_mu(theta):
    """Angular factor of the checkerboard solution (continuous, piecewise
    cosine; the flux jump matches QUADRANT_HIGH across the axes)."""
    g = _KELLOGG_GAMMA
    rho = _KELLOGG_RHO
    sig = _KELLOGG_SIGMA
    th = np.asarray(theta, dtype=float)
    branches = [
        (th <= np.pi / 2,
         np.cos((np.pi / 2 - sig) * g) * np.cos((th - np.pi / 2 + rho) * g)),
        (th <= np.pi,
         np.cos(rho * g) * np.cos((th - np.pi + sig) * g)),
        (th <= 3 * np.pi / 2,
         np.cos(sig * g) * np.cos((th - np.pi - rho) * g)),
        (np.full(th.shape, True),
         np.cos((np.pi / 2 - rho) * g) * np.cos((th - 3 * np.pi / 2 - sig) * g)),
    ]
    out = np.select([b[0] for b in branches], [b[1] for b in branches])
    return out


def kellogg_solution(points) -> np.ndarray:
    """u = r^0.1 * mu(theta): exact solution of the quadrant problem, used
    as Dirichlet data."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    out = np.zeros(len(pts))
    pos = r > 0
    out[pos] = r[pos] ** _KELLOGG_GAMMA * kellogg_mu(theta[pos])
    return out
