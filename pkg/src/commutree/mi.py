"""Mixed-integer layer: full parametric solves, the multi-vertex
common-commutation feasibility problem and candidate bookkeeping.

Two backends are available: exhaustive enumeration over the admissible
commutations (with one-hot groups pruning the product space) and, when an
affine-in-delta encoding is supplied, best-first branch-and-bound over the
continuous relaxation.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from typing import Optional

import numpy as np

from . import conic
from .errors import Exhausted
from .problem import (CONE_NONNEG, CONE_ZERO, AffineDeltaData, Commutation,
                      ParametricProgram)

INT_TOL = 1e-6


class CommutationCache:
    """Append-only record of commutations observed feasible anywhere.

    Used to order searches (neighboring cells usually share feasible
    commutations); never affects correctness.
    """

    def __init__(self):
        self._order: list[Commutation] = []
        self._hits: dict[Commutation, int] = {}
        self._witness: dict[Commutation, np.ndarray] = {}
        self._lock = threading.Lock()

    def note(self, delta: Commutation, theta):
        delta = tuple(delta)
        with self._lock:
            if delta not in self._hits:
                self._order.append(delta)
                self._hits[delta] = 0
                self._witness[delta] = np.array(theta, dtype=float)
            self._hits[delta] += 1

    def ordered(self) -> list[Commutation]:
        with self._lock:
            return list(self._order)

    def hits(self, delta) -> int:
        return self._hits.get(tuple(delta), 0)

    def witness(self, delta) -> Optional[np.ndarray]:
        return self._witness.get(tuple(delta))

    def __len__(self):
        return len(self._order)


def search_order(prog: ParametricProgram, cache: Optional[CommutationCache]):
    """Cached commutations first (insertion order), then the rest."""
    cached = cache.ordered() if cache is not None else []
    seen = set(cached)
    for delta in cached:
        yield delta
    for delta in prog.admissible():
        if delta not in seen:
            yield delta


def solve_minlp(prog: ParametricProgram, theta,
                cache: Optional[CommutationCache] = None,
                budget: Optional[int] = None,
                first_feasible: bool = False):
    """Minimize over all admissible commutations by enumeration.

    Returns (outcome, best delta). ``first_feasible`` short-circuits at
    the first feasible commutation (feasibility queries only).
    """
    best: Optional[conic.SolveOutcome] = None
    best_delta: Optional[Commutation] = None
    tried = 0
    complete = True
    for delta in search_order(prog, cache):
        if budget is not None and tried >= budget:
            complete = False
            break
        tried += 1
        out = conic.solve_fixed_commutation(prog, theta, delta)
        if out.status == conic.UNBOUNDED:
            return out, delta
        if out.is_optimal:
            if cache is not None:
                cache.note(delta, theta)
            if best is None or out.value < best.value:
                best, best_delta = out, delta
            if first_feasible:
                return out, delta
    if best is not None:
        return best, best_delta
    if not complete:
        raise Exhausted(f"enumeration budget {budget} hit with no feasible "
                        f"commutation found")
    return conic.SolveOutcome(conic.INFEASIBLE), None


def find_common_feasible_commutation(
        prog: ParametricProgram, vertices,
        exclude: Optional[Commutation] = None,
        cache: Optional[CommutationCache] = None,
        budget: Optional[int] = None):
    """One commutation feasible at every vertex, or None.

    Feasibility at all vertices certifies feasibility on their convex
    hull. Returns (delta, vertex outcomes) on success, (None, None) when
    no admissible commutation works. Vertex order is the input order with
    early abort on the first infeasible vertex.
    """
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    exclude = tuple(exclude) if exclude is not None else None
    tried = 0
    for delta in search_order(prog, cache):
        if delta == exclude:
            continue
        if budget is not None and tried >= budget:
            raise Exhausted(f"enumeration budget {budget} hit")
        tried += 1
        outcomes = []
        for v in vertices:
            out = conic.solve_fixed_commutation(prog, v, delta)
            if not out.is_optimal:
                outcomes = None
                break
            outcomes.append(out)
        if outcomes is not None:
            if cache is not None:
                cache.note(delta, vertices[0])
            return delta, outcomes
    return None, None


# ---------------------------------------------------------------------------
# Branch-and-bound over the affine-in-delta encoding.
# ---------------------------------------------------------------------------

def _relaxation_blocks(aff: AffineDeltaData, prog: ParametricProgram,
                       thetas, fixed: dict[int, int],
                       exclude: Optional[Commutation]):
    """Conic blocks of the relaxation with variables (x_1..x_k, delta).

    One decision-vector copy per parameter point, all sharing delta.
    Delta bits are relaxed to [0,1] except the fixed ones; one-hot groups
    become equality rows; an optional no-good cut excludes one assignment.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    k = thetas.shape[0]
    n, m = len(np.atleast_1d(aff.c_x)), prog.m
    nv = k * n + m

    def xcols(j):
        return slice(j * n, (j + 1) * n)

    dcols = slice(k * n, k * n + m)
    eq_rows, eq_rhs = [], []
    cone_blocks = []
    for j, th in enumerate(thetas):
        n_eq = len(np.atleast_1d(aff.eq_b))
        a = np.zeros((n_eq, nv))
        a[:, xcols(j)] = np.asarray(aff.eq_x).reshape(n_eq, n)
        a[:, dcols] = np.asarray(aff.eq_d).reshape(n_eq, m)
        eq_rows.append(a)
        eq_rhs.append(-(np.asarray(aff.eq_th).reshape(n_eq, prog.p) @ th
                        + np.asarray(aff.eq_b)))
        d_rows = len(np.atleast_1d(aff.cone_b))
        cx = np.asarray(aff.cone_x).reshape(d_rows, n)
        cd = np.asarray(aff.cone_d).reshape(d_rows, m)
        rhs = (np.asarray(aff.cone_th).reshape(d_rows, prog.p) @ th
               + np.asarray(aff.cone_b))
        offset = 0
        for kind, size in aff.cone.factors:
            rows = slice(offset, offset + size)
            a = np.zeros((size, nv))
            a[:, xcols(j)] = -cx[rows]
            a[:, dcols] = -cd[rows]
            cone_blocks.append((kind, a, rhs[rows]))
            offset += size
    # delta box and fixings
    box_a = np.zeros((2 * m, nv))
    box_b = np.zeros(2 * m)
    for i in range(m):
        box_a[2 * i, k * n + i] = -1.0          # delta_i >= 0
        box_a[2 * i + 1, k * n + i] = 1.0       # delta_i <= 1
        box_b[2 * i + 1] = 1.0
    cone_blocks.append((CONE_NONNEG, box_a, box_b))
    for i, b in fixed.items():
        a = np.zeros((1, nv))
        a[0, k * n + i] = 1.0
        eq_rows.append(a)
        eq_rhs.append(np.array([float(b)]))
    for g in prog.one_hot_groups:
        a = np.zeros((1, nv))
        for i in g:
            a[0, k * n + i] = 1.0
        eq_rows.append(a)
        eq_rhs.append(np.array([1.0]))
    if exclude is not None:
        # sum_{i: e_i=1}(1 - d_i) + sum_{i: e_i=0} d_i >= 1
        a = np.zeros((1, nv))
        rhs = 1.0
        for i, b in enumerate(exclude):
            if b:
                a[0, k * n + i] = 1.0
                rhs -= 1.0
            else:
                a[0, k * n + i] = -1.0
        cone_blocks.append((CONE_NONNEG, -a, np.array([-rhs])))
    blocks = [(CONE_ZERO, np.vstack(eq_rows), np.concatenate(eq_rhs))]
    blocks.extend(cone_blocks)
    return blocks, nv, k, n


def _bnb(prog: ParametricProgram, thetas, objective: bool,
         exclude: Optional[Commutation] = None,
         cache: Optional[CommutationCache] = None,
         node_budget: int = 10000):
    """Best-first branch-and-bound core.

    With ``objective`` True, minimizes the program cost at the single
    parameter point; otherwise solves the pure feasibility problem over
    all points. Returns (outcome, delta).
    """
    aff = prog.affine
    if aff is None:
        raise ValueError("branch-and-bound requires an affine-in-delta "
                         "encoding")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    k = thetas.shape[0]
    n, m = len(np.atleast_1d(aff.c_x)), prog.m

    incumbent: Optional[conic.SolveOutcome] = None
    inc_delta: Optional[Commutation] = None
    counter = itertools.count()
    heap = [(-np.inf, next(counter), {})]
    nodes = 0
    while heap:
        bound, _, fixed = heapq.heappop(heap)
        if incumbent is not None and bound >= incumbent.value - 1e-9:
            continue
        if nodes >= node_budget:
            raise Exhausted(f"branch-and-bound node budget {node_budget} hit")
        nodes += 1
        blocks, nv, _, _ = _relaxation_blocks(aff, prog, thetas, fixed,
                                              exclude)
        c = np.zeros(nv)
        const = 0.0
        if objective:
            c[:n] = np.asarray(aff.c_x)
            c[k * n:k * n + m] = np.asarray(aff.c_d)
            const = aff.c0 + float(np.asarray(aff.c_th) @ thetas[0])
        out = conic.solve_blocks(c, blocks, const=const)
        if out.status == conic.INFEASIBLE:
            continue
        if out.status == conic.UNBOUNDED:
            return out, None
        if not out.is_optimal:
            continue
        if incumbent is not None and objective \
                and out.value >= incumbent.value - 1e-9:
            continue
        d = out.x[k * n:k * n + m]
        frac = np.abs(d - np.round(d))
        if frac.max() <= INT_TOL:
            delta = tuple(int(round(b)) for b in d)
            if delta == exclude or not prog.is_admissible(delta):
                # integral but inadmissible/excluded point: branch anyway
                free = [j for j in range(m) if j not in fixed]
                if not free:
                    continue
                i = int(np.argmax(frac)) if frac.max() > 0 else free[0]
            else:
                if cache is not None:
                    cache.note(delta, thetas[0])
                if not objective:
                    return out, delta
                if incumbent is None or out.value < incumbent.value:
                    incumbent, inc_delta = out, delta
                continue
        else:
            i = int(np.argmax(frac))
        for b in (0, 1):
            child = dict(fixed)
            child[i] = b
            heapq.heappush(heap, (out.value if objective else -np.inf,
                                  next(counter), child))
    if incumbent is not None:
        return incumbent, inc_delta
    return conic.SolveOutcome(conic.INFEASIBLE), None


def solve_minlp_bnb(prog: ParametricProgram, theta,
                    cache: Optional[CommutationCache] = None,
                    node_budget: int = 10000):
    """Branch-and-bound counterpart of :func:`solve_minlp`."""
    return _bnb(prog, [theta], objective=True, cache=cache,
                node_budget=node_budget)


def find_common_feasible_commutation_bnb(
        prog: ParametricProgram, vertices,
        exclude: Optional[Commutation] = None,
        cache: Optional[CommutationCache] = None,
        node_budget: int = 10000):
    """Branch-and-bound counterpart of
    :func:`find_common_feasible_commutation`. Returns delta or None."""
    out, delta = _bnb(prog, vertices, objective=False, exclude=exclude,
                      cache=cache, node_budget=node_budget)
    return delta if out.is_optimal else None
