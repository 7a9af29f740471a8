"""Phase II refiner: subdivide Phase I cells until each carried
commutation is certified suboptimal within the requested absolute or
relative error, with condition-number-aware splitting.

The per-cell check replaces the intractable bilevel error problems with
convex conic programs built on the affine over-approximator of the cell's
optimal-value function (barycentric interpolation of vertex optima, an
upper bound by convexity).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import conic, mi
from .errors import (CommutreeError, InvalidInput, IterationCapExceeded,
                     PointOutside)
from .geometry import (barycentric_coordinates, barycentric_face,
                       delaunay_triangulate, edge_matrix, longest_edge,
                       simplex_volume, Polytope)
from .problem import CONE_NONNEG, CONE_ZERO, Commutation, ConicData, \
    ParametricProgram
from .tree import (PartitionTree, STATUS_CERTIFIED, STATUS_ONLY_FEASIBLE,
                   STATUS_OPEN, STATUS_WARNED)

BOUNDED = "bounded"
NO_COMPETITOR = "no_competitor"
DENOM_DEGENERATE = "denominator_degenerate"
SOLVER_FAILURE = "solver_failure"


@dataclass
class Phase2Config:
    eps_abs: float = 0.0
    eps_rel: float = 0.0
    rho_max: float = 100.0
    pi_abs: float = 0.0
    pi_rel: float = 0.02
    denom_floor: float = 1e-9
    max_iterations: int = 100000
    full_candidate_sweep: bool = True
    deterministic: bool = True
    worker_count: int = 1

    def check(self):
        if not (self.eps_abs > 0 or self.eps_rel > 0):
            raise InvalidInput("need eps_abs > 0 or eps_rel > 0")
        if self.rho_max < 1:
            raise InvalidInput("rho_max must be >= 1")
        if self.pi_abs < 0 or not 0 <= self.pi_rel < 0.5:
            raise InvalidInput("keep-out radii out of range")
        if self.denom_floor <= 0:
            raise InvalidInput("denom_floor must be positive")


@dataclass
class OverApproximator:
    """Affine upper bound of the fixed-commutation optimal value over a
    simplex: barycentric interpolation of the vertex optima."""

    vertices: np.ndarray
    values: np.ndarray
    a: np.ndarray
    b: float

    @classmethod
    def from_vertex_values(cls, vertices, values) -> "OverApproximator":
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        values = np.asarray(values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise InvalidInput("vertex values must be finite")
        m = np.hstack([vertices, np.ones((vertices.shape[0], 1))])
        w = np.linalg.solve(m, values)
        return cls(vertices=vertices, values=values, a=w[:-1], b=float(w[-1]))

    def affine_value(self, theta) -> float:
        return float(self.a @ np.atleast_1d(theta) + self.b)


def over_approx_value(oa: OverApproximator, theta) -> float:
    """Interpolated upper bound at a point inside the simplex."""
    alpha, inside = barycentric_coordinates(oa.vertices, theta)
    if not inside:
        raise PointOutside(f"theta {theta} outside simplex")
    return float(alpha @ oa.values)


@dataclass
class ErrorBounds:
    e_abs: float
    e_rel: float
    arg_theta: Optional[np.ndarray]
    arg_delta: Optional[Commutation]
    status: str
    denom: Optional[float] = None


def _hull_blocks(data: ConicData, hull: np.ndarray):
    """Cone blocks over z = (x, alpha) with theta = hull^T alpha confined
    to the convex hull of the given points."""
    ell = hull.shape[0]
    n = data.n
    nv = n + ell
    eq_rows = [np.hstack([data.eq_x, data.eq_th @ hull.T])]
    eq_rhs = [-data.eq_b]
    simplex_row = np.zeros((1, nv))
    simplex_row[0, n:] = 1.0
    eq_rows.append(simplex_row)
    eq_rhs.append(np.array([1.0]))
    blocks = [(CONE_ZERO, np.vstack(eq_rows), np.concatenate(eq_rhs))]
    alpha_nonneg = np.zeros((ell, nv))
    alpha_nonneg[:, n:] = np.eye(ell)
    blocks.append((CONE_NONNEG, -alpha_nonneg, np.zeros(ell)))
    # data cones with theta substituted
    cone_x = np.hstack([data.cone_x, data.cone_th @ hull.T])
    offset = 0
    for kind, size in data.cone.factors:
        rows = slice(offset, offset + size)
        blocks.append((kind, -cone_x[rows], data.cone_b[rows]))
        offset += size
    return blocks, nv, n


def _min_value_on_hull(data: ConicData, hull: np.ndarray):
    """Minimize the program objective with theta ranging over the hull."""
    blocks, nv, n = _hull_blocks(data, hull)
    c = np.zeros(nv)
    c[:n] = data.c_x
    c[n:] = hull @ data.c_th
    return conic.solve_blocks(c, blocks, const=data.c0)


def _max_gap_on_hull(affine_a, affine_b, data: ConicData, hull: np.ndarray):
    """Maximize affine(theta) - objective(x, theta) over the hull subject
    to the program constraints (the single-level collapse of the bilevel
    error problem). Returns (outcome with value = gap, theta*)."""
    blocks, nv, n = _hull_blocks(data, hull)
    c = np.zeros(nv)
    c[:n] = data.c_x
    c[n:] = hull @ (data.c_th - np.asarray(affine_a, dtype=float))
    out = conic.solve_blocks(c, blocks, const=data.c0 - float(affine_b))
    if not out.is_optimal:
        return out, None
    alpha = out.x[n:]
    theta = alpha @ hull
    gap = conic.SolveOutcome(out.status, x=out.x, value=-out.value,
                             residuals=out.residuals)
    return gap, theta


def candidate_commutations(prog: ParametricProgram, delta: Commutation,
                           cache: Optional[mi.CommutationCache],
                           full_sweep: bool) -> list[Commutation]:
    delta = tuple(delta)
    if full_sweep:
        order = mi.search_order(prog, cache)
    else:
        order = cache.ordered() if cache is not None else []
    return [d for d in order if d != delta]


def compute_error_bounds(prog: ParametricProgram, vertices, delta,
                         vertex_values, candidates,
                         cfg: Phase2Config) -> ErrorBounds:
    """Upper bounds on the worst absolute/relative suboptimality of delta
    over the simplex, maximized over competitor commutations."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    oa = OverApproximator.from_vertex_values(vertices, vertex_values)
    best_gap = -np.inf
    arg_theta = None
    arg_delta = None
    any_feasible = False
    for other in candidates:
        data = prog.instantiate(other)
        out, theta = _max_gap_on_hull(oa.a, oa.b, data, vertices)
        if out.status == conic.INFEASIBLE:
            continue
        if out.status == conic.UNBOUNDED:
            raise CommutreeError("competitor error problem unbounded")
        if not out.is_optimal:
            # no usable bound for this competitor: the cell cannot be
            # certified, so report a forced split instead of a bound
            return ErrorBounds(e_abs=np.inf, e_rel=np.inf, arg_theta=None,
                               arg_delta=tuple(other),
                               status=SOLVER_FAILURE)
        any_feasible = True
        if out.value > best_gap:
            best_gap = out.value
            arg_theta = theta
            arg_delta = tuple(other)
    if not any_feasible:
        return ErrorBounds(e_abs=np.inf, e_rel=np.inf, arg_theta=None,
                           arg_delta=None, status=NO_COMPETITOR)
    denom_out = _min_value_on_hull(prog.instantiate(delta), vertices)
    if not denom_out.is_optimal:
        return ErrorBounds(e_abs=best_gap, e_rel=np.inf, arg_theta=arg_theta,
                           arg_delta=arg_delta, status=DENOM_DEGENERATE)
    denom = denom_out.value
    if denom <= cfg.denom_floor:
        return ErrorBounds(e_abs=best_gap, e_rel=np.inf, arg_theta=arg_theta,
                           arg_delta=arg_delta, status=DENOM_DEGENERATE,
                           denom=denom)
    return ErrorBounds(e_abs=best_gap, e_rel=best_gap / denom,
                       arg_theta=arg_theta, arg_delta=arg_delta,
                       status=BOUNDED, denom=denom)


def constrained_split_point(prog: ParametricProgram, delta,
                            oa: OverApproximator, face_vertices):
    """Point of maximum over-approximation gap for a fixed commutation,
    constrained to the convex hull of the face vertices. None when the
    commutation is infeasible on the whole face."""
    face = np.atleast_2d(np.asarray(face_vertices, dtype=float))
    data = prog.instantiate(delta)
    out, theta = _max_gap_on_hull(oa.a, oa.b, data, face)
    if out.status == conic.INFEASIBLE:
        return None
    if not out.is_optimal:
        raise CommutreeError("constrained split-point solve failed")
    return theta


def _face_condition(vertices: np.ndarray) -> float:
    sv = np.linalg.svd(edge_matrix(vertices), compute_uv=False)
    if sv[-1] <= 1e-300:
        return np.inf
    return float(sv[0] / sv[-1])


def triangulate_snap(prog: ParametricProgram, delta, oa: OverApproximator,
                     vertices, cfg: Phase2Config,
                     _depth: int = 0) -> list[np.ndarray]:
    """Split at the constrained maximum-gap point, recursing onto the
    facet of the worst-conditioned child when the split point lands too
    close to it. Returns [vertices] unchanged when no well-conditioned
    subdivision is found (caller falls back to longest-edge bisection)."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    ell = vertices.shape[0]
    if ell < 2 or _depth > ell:
        return [vertices]
    theta_p = constrained_split_point(prog, delta, oa, vertices)
    if theta_p is None:
        return [vertices]
    alpha, inside = barycentric_face(vertices, theta_p)
    if not inside:
        return [vertices]
    kept = [i for i in range(ell) if alpha[i] > 1e-10]
    if len(kept) <= 1:
        return [vertices]
    children = []
    for i in kept:
        child = vertices.copy()
        child[i] = theta_p
        children.append((i, child))
    rhos = [_face_condition(c) for _, c in children]
    worst = int(np.argmax(rhos))
    if rhos[worst] <= cfg.rho_max:
        return [c for _, c in children]
    i_worst = children[worst][0]
    facet = np.delete(vertices, i_worst, axis=0)
    sub = triangulate_snap(prog, delta, oa, facet, cfg, _depth + 1)
    if len(sub) == 1:
        return [vertices]
    apex = vertices[i_worst]
    cones = [np.vstack([cell, apex[None, :]]) for cell in sub]
    if any(_face_condition(c) > cfg.rho_max for c in cones):
        return [vertices]
    return cones


def _vertex_values(prog: ParametricProgram, delta, vertices):
    """Optimal values at each vertex, or None if any vertex infeasible."""
    values = []
    for v in np.atleast_2d(vertices):
        out = conic.solve_fixed_commutation(prog, v, delta)
        if not out.is_optimal:
            return None
        values.append(out.value)
    return np.array(values)


def _certified(bounds: ErrorBounds, cfg: Phase2Config) -> bool:
    if bounds.e_abs <= 0:
        # the carried commutation is optimal on the whole cell
        return True
    if cfg.eps_abs > 0 and bounds.e_abs <= cfg.eps_abs:
        return True
    if cfg.eps_rel > 0 and bounds.status == BOUNDED \
            and bounds.e_rel <= cfg.eps_rel:
        return True
    return False


def refine_partition(tree: PartitionTree, prog: ParametricProgram,
                     cfg: Phase2Config,
                     cache: Optional[mi.CommutationCache] = None
                     ) -> PartitionTree:
    """Refine a sound Phase I tree in place until every leaf is certified
    suboptimal, the only feasible choice, or closed with a warning."""
    cfg.check()
    if cache is None:
        cache = mi.CommutationCache()
        for leaf in tree.leaves():
            if leaf.delta is not None:
                cache.note(leaf.delta, leaf.vertices[0])
    t0 = time.perf_counter()
    stack: list[int] = []
    for leaf in tree.leaves():
        leaf.status = STATUS_OPEN
        stack.append(leaf.id)
    stack.reverse()

    iteration = int(tree.meta.get("iterations", 0))
    base_iter = iteration

    def add_children(node, cells, delta, delta_bar):
        """Attach open children, reassigning the competitor commutation
        wherever it is vertex-feasible."""
        for cell in cells:
            child = tree.add_child(node.id, cell)
            child_delta = delta
            child_vals = None
            if delta_bar is not None:
                child_vals = _vertex_values(prog, delta_bar, cell)
                if child_vals is not None:
                    child_delta = delta_bar
            if child_vals is None:
                child_vals = _vertex_values(prog, delta, cell)
            if child_vals is None:
                # borderline solves can fail numerically on boundary
                # children even though the parent commutation covers the
                # hull; fall back to a fresh vertex-feasibility search
                found, outs = mi.find_common_feasible_commutation(
                    prog, cell, cache=cache)
                if found is None:
                    raise CommutreeError(
                        f"no commutation feasible at child vertices of "
                        f"node {node.id}")
                child_delta = found
                child_vals = np.array([o.value for o in outs])
            child.delta = tuple(child_delta)
            child.vertex_values = child_vals
            stack.append(child.id)

    try:
        while stack:
            nid = stack.pop()
            node = tree.nodes[nid]
            iteration += 1
            if iteration - base_iter > cfg.max_iterations:
                raise IterationCapExceeded(
                    f"phase II hit {cfg.max_iterations} iterations")
            if not node.is_simplex:
                cells = delaunay_triangulate(Polytope(node.vertices))
                add_children(node, [c.vertices for c in cells], node.delta, None)
                continue
            delta = node.delta
            if node.vertex_values is None:
                vals = _vertex_values(prog, delta, node.vertices)
                if vals is None:
                    raise CommutreeError(
                        f"leaf {node.id} commutation infeasible at its vertices")
                node.vertex_values = vals
            candidates = candidate_commutations(prog, delta, cache,
                                                cfg.full_candidate_sweep)
            bounds = compute_error_bounds(prog, node.vertices, delta,
                                          node.vertex_values, candidates, cfg)
            if bounds.status == NO_COMPETITOR:
                tree.close(nid, STATUS_ONLY_FEASIBLE, delta=delta)
                continue
            if _certified(bounds, cfg):
                tree.close(nid, STATUS_CERTIFIED, delta=delta,
                           e_abs=bounds.e_abs,
                           e_rel=None if not np.isfinite(bounds.e_rel)
                           else bounds.e_rel)
                continue
            # must split
            i, j, l_bar = longest_edge(node.vertices)
            r_ko = max(cfg.pi_abs, cfg.pi_rel * l_bar)
            cells = None
            if bounds.arg_theta is not None and np.linalg.norm(
                    node.vertices - bounds.arg_theta, axis=1).min() > r_ko:
                oa = OverApproximator.from_vertex_values(node.vertices,
                                                         node.vertex_values)
                snapped = triangulate_snap(prog, bounds.arg_delta, oa,
                                           node.vertices, cfg)
                if len(snapped) > 1:
                    cells = snapped
            if cells is None:
                mid = (node.vertices[i] + node.vertices[j]) / 2.0
                halves = []
                for k in (i, j):
                    half = node.vertices.copy()
                    half[k] = mid
                    halves.append(half)
                if any(_face_condition(c) > cfg.rho_max for c in halves):
                    tree.close(nid, STATUS_WARNED, delta=delta,
                               e_abs=bounds.e_abs,
                               e_rel=None if not np.isfinite(bounds.e_rel)
                               else bounds.e_rel)
                    continue
                cells = halves
            add_children(node, cells, delta, bounds.arg_delta)
    finally:
        tree.meta["iterations"] = iteration
        tree.meta["runtime"] = float(tree.meta.get("runtime", 0.0)) + \
            (time.perf_counter() - t0)
        tree.meta["eps_abs"] = cfg.eps_abs
        tree.meta["eps_rel"] = cfg.eps_rel
        tree.meta["rho_max"] = cfg.rho_max
    return tree


def certification_rows(tree: PartitionTree) -> list[dict]:
    """Per-leaf certification report rows."""
    rows = []
    for leaf in tree.leaves():
        rows.append({
            "leaf_id": leaf.id,
            "status": leaf.status,
            "e_abs": leaf.e_abs,
            "e_rel": leaf.e_rel,
            "rho": _face_condition(leaf.vertices),
            "depth": leaf.depth,
        })
    return rows


def warned_volume_fraction(tree: PartitionTree) -> float:
    total = tree.total_volume()
    warned = sum(simplex_volume(n.vertices) for n in tree.leaves()
                 if n.status == STATUS_WARNED)
    return warned / total if total > 0 else 0.0
