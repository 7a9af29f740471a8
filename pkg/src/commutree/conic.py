"""Continuous conic solves (LP + SOCP) with status certificates.

Backed by an interior-point solver with a homogeneous embedding, which
certifies infeasibility instead of merely failing -- Phase I/II treat
"infeasible" as a control-flow branch, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import clarabel
import numpy as np
from scipy import sparse

from .problem import (CONE_NONNEG, CONE_SOC, CONE_ZERO, ConicData,
                      ParametricProgram)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILURE = "numerical_failure"

FEAS_TOL = 1e-9
GAP_TOL = 1e-9
MAX_ITER = 200


@dataclass
class SolveOutcome:
    status: str
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    residuals: dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def _settings() -> clarabel.DefaultSettings:
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_feas = FEAS_TOL
    s.tol_gap_abs = GAP_TOL
    s.tol_gap_rel = GAP_TOL
    s.max_iter = MAX_ITER
    return s


def solve_blocks(c, blocks, const: float = 0.0) -> SolveOutcome:
    """Minimize c.x subject to cone blocks [(kind, A, b), ...].

    Block semantics: b - A x lies in the cone of the given kind ("zero"
    rows are equalities A x = b). The reported value includes ``const``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    mats, rhs, cones = [], [], []
    for kind, a, b in blocks:
        b = np.asarray(b, dtype=float).ravel()
        if b.size == 0:
            continue
        a = np.asarray(a, dtype=float).reshape(b.size, n)
        mats.append(sparse.csc_matrix(a))
        rhs.append(b)
        if kind == CONE_ZERO:
            cones.append(clarabel.ZeroConeT(b.size))
        elif kind == CONE_NONNEG:
            cones.append(clarabel.NonnegativeConeT(b.size))
        elif kind == CONE_SOC:
            cones.append(clarabel.SecondOrderConeT(b.size))
        else:
            raise ValueError(f"unknown cone kind {kind!r}")
    if mats:
        big_a = sparse.vstack(mats, format="csc")
        big_b = np.concatenate(rhs)
    else:
        big_a = sparse.csc_matrix((0, n))
        big_b = np.zeros(0)
    solver = clarabel.DefaultSolver(
        sparse.csc_matrix((n, n)), c, big_a, big_b, cones, _settings())
    sol = solver.solve()
    status = str(sol.status)
    residuals = {"r_prim": getattr(sol, "r_prim", np.nan),
                 "r_dual": getattr(sol, "r_dual", np.nan),
                 "iterations": getattr(sol, "iterations", -1)}
    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x, dtype=float)
        return SolveOutcome(OPTIMAL, x=x, value=float(c @ x) + const,
                            residuals=residuals)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveOutcome(INFEASIBLE, residuals=residuals)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveOutcome(UNBOUNDED, residuals=residuals)
    return SolveOutcome(FAILURE, residuals=residuals)


def data_blocks(data: ConicData, theta):
    """Cone blocks of a program instance at a fixed parameter value."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    blocks = [(CONE_ZERO, data.eq_x, -(data.eq_th @ theta + data.eq_b))]
    offset = 0
    cone_rhs = data.cone_th @ theta + data.cone_b
    for kind, size in data.cone.factors:
        rows = slice(offset, offset + size)
        blocks.append((kind, -data.cone_x[rows], cone_rhs[rows]))
        offset += size
    return blocks


def solve(data: ConicData, theta) -> SolveOutcome:
    """Solve a program instance at a fixed parameter value."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    const = float(data.c_th @ theta) + data.c0
    return solve_blocks(data.c_x, data_blocks(data, theta), const=const)


def solve_fixed_commutation(prog: ParametricProgram, theta,
                            delta) -> SolveOutcome:
    """Optimal value of the program with the commutation fixed."""
    return solve(prog.instantiate(delta), theta)
