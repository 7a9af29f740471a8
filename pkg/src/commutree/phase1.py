"""Phase I partitioner: cover the parameter polytope with simplicial
cells, each certified (via its vertices) to share one feasible
commutation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import mi
from .errors import (InvalidInput, IterationCapExceeded,
                     ThetaExceedsFeasibleSet)
from .geometry import Polytope, delaunay_triangulate, longest_edge, \
    simplex_volume
from .problem import ParametricProgram
from .tree import (PartitionTree, STATUS_CLOSED_FEASIBLE)


@dataclass
class Phase1Config:
    max_iterations: int = 100000
    deterministic: bool = True
    worker_count: int = 1

    def check(self):
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be >= 1")


def estimate_depth_bound(l0: float, kappa: float, p: int) -> int:
    """Worst-case bisection depth until cells shrink into the overlap."""
    if kappa <= 0 or l0 <= 0:
        raise InvalidInput("l0 and kappa must be positive")
    return max(0, math.ceil(p * (p + 1) * math.log2(l0 / kappa) / 2))


def _evaluate_leaf(prog, cache, vertices):
    """Decide a leaf's fate: ('fail', witness) / ('close', delta, outs) /
    ('split', i, j)."""
    barycenter = vertices.mean(axis=0)
    out, _ = mi.solve_minlp(prog, barycenter, cache=cache,
                            first_feasible=True)
    if not out.is_optimal:
        return ("fail", barycenter)
    delta, outcomes = mi.find_common_feasible_commutation(
        prog, vertices, cache=cache)
    if delta is not None:
        return ("close", delta, outcomes)
    i, j, _ = longest_edge(vertices)
    return ("split", i, j)


def build_partition(prog: ParametricProgram, theta_poly: Polytope,
                    cfg: Phase1Config,
                    cache: mi.CommutationCache | None = None) -> PartitionTree:
    """Depth-first simplicial partitioning with vertex-certified leaves.

    Every closed leaf stores its commutation and the vertex optimal
    values for later reuse by the refinement pass. Raises
    ThetaExceedsFeasibleSet when a cell barycenter is infeasible for the
    full mixed-integer problem.
    """
    cfg.check()
    if cache is None:
        cache = mi.CommutationCache()
    t0 = time.perf_counter()
    tree = PartitionTree(prog.p, prog.m, theta_poly.vertices)
    cells = delaunay_triangulate(theta_poly)
    stack: list[int] = []
    for cell in cells:
        node = tree.add_child(0, cell.vertices)
        stack.append(node.id)
    stack.reverse()  # process first Delaunay cell first (LIFO)

    total_volume = tree.total_volume()
    closed_volume = 0.0
    iteration = 0
    workers = max(1, cfg.worker_count) if not cfg.deterministic else 1
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def record(action, volume):
        tree.events.append({
            "iter": iteration, "t_wall": time.perf_counter() - t0,
            "action": action, "cell_volume": volume,
            "closed_fraction": closed_volume / total_volume})

    try:
        while stack:
            batch = []
            while stack and len(batch) < workers:
                batch.append(stack.pop())
            nodes = [tree.nodes[nid] for nid in batch]
            if pool is not None:
                results = list(pool.map(
                    lambda nd: _evaluate_leaf(prog, cache, nd.vertices),
                    nodes))
            else:
                results = [_evaluate_leaf(prog, cache, nd.vertices)
                           for nd in nodes]
            for node, result in zip(nodes, results):
                iteration += 1
                if iteration > cfg.max_iterations:
                    raise IterationCapExceeded(
                        f"phase I hit {cfg.max_iterations} iterations")
                volume = simplex_volume(node.vertices)
                if result[0] == "fail":
                    record("fail", volume)
                    tree.meta["iterations"] = iteration
                    raise ThetaExceedsFeasibleSet(result[1])
                if result[0] == "close":
                    _, delta, outcomes = result
                    tree.close(node.id, STATUS_CLOSED_FEASIBLE, delta=delta,
                               vertex_values=[o.value for o in outcomes])
                    closed_volume += volume
                    record("close", volume)
                else:
                    _, i, j = result
                    mid = (node.vertices[i] + node.vertices[j]) / 2.0
                    child_a = node.vertices.copy()
                    child_a[i] = mid
                    child_b = node.vertices.copy()
                    child_b[j] = mid
                    a = tree.add_child(node.id, child_a)
                    b = tree.add_child(node.id, child_b)
                    stack.append(b.id)
                    stack.append(a.id)
                    record("split", volume)
    finally:
        if pool is not None:
            pool.shutdown()
        tree.meta["iterations"] = iteration
        tree.meta["runtime"] = time.perf_counter() - t0
    return tree
