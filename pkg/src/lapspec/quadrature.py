"""Symmetric quadrature rules on the reference triangle (barycentric form)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureRule", "centroid_rule", "midpoint_rule", "degree4_rule",
           "rule_by_degree"]


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights; weights sum to one (area fraction)."""

    name: str
    points: np.ndarray   # (q, 3) barycentric coordinates
    weights: np.ndarray  # (q,)
    degree: int          # exact for polynomials up to this degree

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(w.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to one")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def physical_points(self, tri_coords: np.ndarray) -> np.ndarray:
        """Map to physical coordinates; tri_coords is (..., 3, 2)."""
        return np.einsum("qk,...kd->...qd", self.points, tri_coords)


def centroid_rule() -> QuadratureRule:
    return QuadratureRule("centroid",
                          np.array([[1, 1, 1]]) / 3.0,
                          np.array([1.0]), degree=1)


def midpoint_rule() -> QuadratureRule:
    """Edge midpoints, weight 1/3 each; exact through degree 2."""
    pts = np.array([[0.5, 0.5, 0.0],
                    [0.0, 0.5, 0.5],
                    [0.5, 0.0, 0.5]])
    return QuadratureRule("midpoint", pts, np.full(3, 1.0 / 3.0), degree=2)


def degree4_rule() -> QuadratureRule:
    """Six-point rule, exact through degree 4 (all weights positive)."""
    a = 0.445948490915965
    b = 0.091576213509771
    wa = 0.223381589678011
    wb = 0.109951743655322
    pts = []
    for t in (a, b):
        pts += [[1 - 2 * t, t, t], [t, 1 - 2 * t, t], [t, t, 1 - 2 * t]]
    w = np.array([wa] * 3 + [wb] * 3)
    w = w / w.sum()  # remove the last-digit tabulation residue
    return QuadratureRule("degree4", np.array(pts), w, degree=4)


def rule_by_degree(degree: int) -> QuadratureRule:
    if degree <= 1:
        return centroid_rule()
    if degree == 2:
        return midpoint_rule()
    return degree4_rule()
