"""Vertex-representation simplex and polytope primitives.

All operations are pure and stateless. Simplices are stored as (k+1, p)
vertex arrays; a full-dimensional simplex has k == p. Lower-dimensional
faces embedded in R^p are supported by the ``*_face`` helpers used during
condition-aware subdivision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import DegenerateInput, DegenerateSimplex, PointOutside

# Relative rank tolerance for "affinely spans" checks.
RANK_RTOL = 1e-12
# Barycentric weights down to this value count as inside (shared facets
# must belong to some cell).
BARY_TOL = 1e-9
# Children with a smaller barycentric weight of the split point are
# treated as lower-dimensional and dropped.
CHILD_TOL = 1e-10


def _as_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return v


def edge_matrix(vertices: np.ndarray) -> np.ndarray:
    """Columns v_i - v_1 for i = 2..k+1; shape (p, k)."""
    v = _as_vertices(vertices)
    return (v[1:] - v[0]).T


@dataclass(frozen=True)
class Polytope:
    """Full-dimensional polytope in vertex representation."""

    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_vertices(self.vertices))

    @property
    def p(self) -> int:
        return self.vertices.shape[1]

    def is_full_dimensional(self) -> bool:
        e = edge_matrix(self.vertices)
        if e.shape[1] < self.p:
            return False
        s = np.linalg.svd(e, compute_uv=False)
        return s.size >= self.p and s[self.p - 1] > RANK_RTOL * max(1.0, s[0])


@dataclass(frozen=True)
class Simplex:
    """Full-dimensional simplex: exactly p+1 affinely independent vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        object.__setattr__(self, "vertices", v)
        p = v.shape[1]
        if v.shape[0] != p + 1:
            raise DegenerateSimplex(
                f"expected {p + 1} vertices in R^{p}, got {v.shape[0]}")
        e = edge_matrix(v)
        s = np.linalg.svd(e, compute_uv=False)
        if s[-1] <= RANK_RTOL * max(1.0, s[0]):
            raise DegenerateSimplex("edge matrix is rank deficient")

    @property
    def p(self) -> int:
        return self.vertices.shape[1]


def simplex_volume(vertices: np.ndarray) -> float:
    v = _as_vertices(vertices)
    p = v.shape[1]
    det = np.linalg.det(edge_matrix(v))
    return abs(det) / math.factorial(p)


def longest_edge(vertices: np.ndarray) -> tuple[int, int, float]:
    """Longest vertex pair; ties broken by lexicographically smallest
    index pair (first strict maximum in scan order)."""
    v = _as_vertices(vertices)
    best = (-1, -1, -1.0)
    k = v.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            length = float(np.linalg.norm(v[i] - v[j]))
            if length > best[2]:
                best = (i, j, length)
    return best


def simplex_metrics(s: Simplex | np.ndarray):
    """Volume, barycenter and longest edge of a full-dimensional simplex."""
    v = s.vertices if isinstance(s, Simplex) else _as_vertices(s)
    if not isinstance(s, Simplex):
        Simplex(v)  # validates
    return simplex_volume(v), v.mean(axis=0), longest_edge(v)


def condition_number(s: Simplex | np.ndarray) -> float:
    """Ratio of extreme singular values of the edge matrix (>= 1)."""
    v = s.vertices if isinstance(s, Simplex) else _as_vertices(s)
    e = edge_matrix(v)
    sv = np.linalg.svd(e, compute_uv=False)
    if sv[-1] <= max(1e-300, RANK_RTOL * max(1.0, sv[0])):
        raise DegenerateSimplex("smallest singular value vanishes")
    return float(sv[0] / sv[-1])


def barycentric_coordinates(s: Simplex | np.ndarray,
                            theta) -> tuple[np.ndarray, bool]:
    """Barycentric weights of theta w.r.t. a full-dimensional simplex.

    Returns (alpha, contains) where contains uses a -1e-9 boundary
    tolerance so shared facets count as inside.
    """
    v = s.vertices if isinstance(s, Simplex) else _as_vertices(s)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = v.shape[1]
    m = np.vstack([v.T, np.ones(p + 1)])
    rhs = np.concatenate([theta, [1.0]])
    try:
        alpha = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSimplex("singular barycentric system") from exc
    return alpha, bool(alpha.min() >= -BARY_TOL)


def barycentric_face(vertices: np.ndarray,
                     theta) -> tuple[np.ndarray, bool]:
    """Barycentric weights w.r.t. a possibly lower-dimensional face."""
    v = _as_vertices(vertices)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = np.vstack([v.T, np.ones(v.shape[0])])
    rhs = np.concatenate([theta, [1.0]])
    alpha, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    resid = np.linalg.norm(m @ alpha - rhs)
    inside = alpha.min() >= -BARY_TOL and resid <= 1e-7 * max(
        1.0, float(np.abs(v).max()))
    return alpha, bool(inside)


def contains_point(vertices: np.ndarray, theta) -> bool:
    _, inside = barycentric_coordinates(vertices, theta)
    return inside


def delaunay_triangulate(poly: Polytope) -> list[Simplex]:
    """Triangulate the convex hull of the polytope's vertices.

    Any valid triangulation is acceptable; cells cover the polytope and
    are pairwise interior-disjoint, with vertices drawn from the input.
    """
    if not poly.is_full_dimensional():
        raise DegenerateInput("polytope is not full-dimensional")
    v = poly.vertices
    p = poly.p
    if p == 1:
        xs = np.unique(v[:, 0])
        return [Simplex(np.array([[xs[i]], [xs[i + 1]]]))
                for i in range(len(xs) - 1)]
    tri = Delaunay(v)
    cells = []
    for idx in tri.simplices:
        cell = v[idx]
        if simplex_volume(cell) > 0.0:
            cells.append(Simplex(cell))
    return cells


def split_at_point(s: Simplex | np.ndarray, theta) -> list[Simplex]:
    """Replace each vertex by theta in turn, keeping full-dimensional
    children. Children cover the parent and conserve its volume."""
    v = s.vertices if isinstance(s, Simplex) else _as_vertices(s)
    alpha, inside = barycentric_coordinates(v, theta)
    if not inside:
        raise PointOutside(f"theta {theta} outside simplex")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    children = []
    for i in range(v.shape[0]):
        if alpha[i] > CHILD_TOL:
            child = v.copy()
            child[i] = theta
            children.append(Simplex(child))
    return children


def split_face_at_point(vertices: np.ndarray, theta) -> list[np.ndarray]:
    """split_at_point for faces embedded in R^p (k < p supported)."""
    v = _as_vertices(vertices)
    alpha, inside = barycentric_face(v, theta)
    if not inside:
        raise PointOutside(f"theta {theta} outside face")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    children = []
    for i in range(v.shape[0]):
        if alpha[i] > CHILD_TOL:
            child = v.copy()
            child[i] = theta
            children.append(child)
    return children


def sample_in_hull(rng: np.random.Generator, vertices: np.ndarray,
                   count: int) -> np.ndarray:
    """Uniform-ish samples in the convex hull via Dirichlet weights.

    Exactly uniform for simplices; adequate for membership testing
    elsewhere.
    """
    v = _as_vertices(vertices)
    w = rng.dirichlet(np.ones(v.shape[0]), size=count)
    return w @ v
