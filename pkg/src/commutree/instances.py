"""Instance generators: analytic one-dimensional toys and randomized
structural (mass-spring-damper) MPC benchmarks.

The toys have hand-computable optimal partitions and are used as oracles.
The benchmark pipeline is: random modal system -> exact zero-order-hold
discretization -> LQR terminal controller -> invariant parameter box ->
finite-horizon MPC with disjunctive input slabs encoded by one-hot
commutation bits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import conic, mi
from .errors import (HorizonInfeasible, InvalidInput, NoInvariantBoxFound,
                     RiccatiDivergence)
from .geometry import Polytope
from .problem import (CONE_NONNEG, CONE_SOC, AffineDeltaData,
                      ConeSpec, ConicData, ParametricProgram,
                      scale_to_unit_box)

W_INF = 1e-3          # disturbance infinity-norm bound
U_MIN_FRAC = 1e-3     # lower edge of the active input slabs
HORIZON = 3
Q_WEIGHT = 0.1
R_WEIGHT = 1.0
DARE_TOL = 1e-10
DARE_MAX_ITER = 100000
ZETA_ONE_PROB = 0.2


# ---------------------------------------------------------------------------
# Analytic one-dimensional toys.
# ---------------------------------------------------------------------------

def toy1d_kappa(kappa: float, cost_offset: float = 0.0,
                name: str = "") -> tuple[ParametricProgram, Polytope]:
    """Scalar tracking toy with two overlapping input ranges.

    Decision u must equal -theta; bit 0 selects u in [-1, kappa] and bit 1
    selects u in [-kappa, 1], so the commutations are optimal on
    [-kappa, 1] and [-1, kappa] respectively with overlap width 2*kappa.
    The optimal value is theta^2 (+ cost_offset on the second branch).
    """
    if not 0 < kappa < 1:
        raise InvalidInput("kappa must lie in (0, 1)")
    shift = 1.0 - kappa

    def data_map(delta):
        d = float(delta[0])
        lo = -1.0 + shift * d
        up = kappa + shift * d
        return ConicData(
            c_x=[0.0, 1.0], c_th=[0.0], c0=cost_offset * d,
            eq_x=[[1.0, 0.0]], eq_th=[[1.0]], eq_b=[0.0],
            # u - lo >= 0, up - u >= 0, then t >= u^2 as
            # (t+1, 2u, t-1) in the second-order cone
            cone_x=[[1.0, 0.0], [-1.0, 0.0],
                    [0.0, 1.0], [2.0, 0.0], [0.0, 1.0]],
            cone_th=np.zeros((5, 1)),
            cone_b=[-lo, up, 1.0, 0.0, -1.0],
            cone=ConeSpec(((CONE_NONNEG, 2), (CONE_SOC, 3))))

    affine = AffineDeltaData(
        c_x=[0.0, 1.0], c_d=[cost_offset], c_th=[0.0], c0=0.0,
        eq_x=[[1.0, 0.0]], eq_d=[[0.0]], eq_th=[[1.0]], eq_b=[0.0],
        cone_x=[[1.0, 0.0], [-1.0, 0.0],
                [0.0, 1.0], [2.0, 0.0], [0.0, 1.0]],
        cone_d=[[-shift], [shift], [0.0], [0.0], [0.0]],
        cone_th=np.zeros((5, 1)),
        cone_b=[1.0, kappa, 1.0, 0.0, -1.0],
        cone=ConeSpec(((CONE_NONNEG, 2), (CONE_SOC, 3))))

    prog = ParametricProgram(
        p=1, n=2, m=1, data_map=data_map, affine=affine,
        name=name or f"toy1d-kappa-{kappa:g}")
    return prog, Polytope(np.array([[-1.0], [1.0]]))


def toy1d() -> tuple[ParametricProgram, Polytope]:
    """The kappa = 0.2 toy; both commutations are exactly optimal on the
    overlap [-0.2, 0.2]."""
    return toy1d_kappa(0.2, name="toy1d")


def toy1d_offset() -> tuple[ParametricProgram, Polytope]:
    """toy1d with a 0.1 cost penalty on the second branch, breaking the
    tie on the overlap."""
    return toy1d_kappa(0.2, cost_offset=0.1, name="toy1d-offset")


# ---------------------------------------------------------------------------
# Random structural benchmark: modal system synthesis.
# ---------------------------------------------------------------------------

@dataclass
class MdofSystem:
    """Continuous-time multi-degree-of-freedom structural model."""

    n_r: int
    mass: np.ndarray
    modes: np.ndarray          # orthonormal columns
    zeta: np.ndarray
    omega_n: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    input_map: np.ndarray
    a: np.ndarray
    b: np.ndarray
    e: np.ndarray


def toy_instances() -> list[tuple[str, ParametricProgram, Polytope]]:
    """Named analytic instances with known optimal partitions."""
    named = []
    for builder in (toy1d, toy1d_offset):
        prog, poly = builder()
        named.append((prog.name, prog, poly))
    return named


def generate_mdof(n_r: int, seed) -> MdofSystem:
    """Random modal system with mode-wise damping ratios and decay times.

    Each mode is critically damped with probability 0.2; otherwise its
    decay time constant and damped frequency are drawn independently and
    converted to (zeta, omega_n).
    """
    if n_r < 1:
        raise InvalidInput("n_r must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    mass = rng.uniform(0.1, 1.0, size=n_r)
    g = rng.standard_normal((n_r, n_r))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    zeta = np.empty(n_r)
    omega_n = np.empty(n_r)
    for i in range(n_r):
        t_c = rng.uniform(1.0, 10.0)
        if rng.uniform() < ZETA_ONE_PROB:
            zeta[i] = 1.0
            omega_n[i] = 1.0 / t_c
        else:
            sigma = 1.0 / t_c
            omega_d = rng.uniform(0.0, 2.0 * np.pi)
            while omega_d == 0.0:
                omega_d = rng.uniform(0.0, 2.0 * np.pi)
            omega_n[i] = math.hypot(sigma, omega_d)
            zeta[i] = sigma / omega_n[i]
    msqrt = np.sqrt(mass)
    lam = np.diag(2.0 * zeta * omega_n)
    omg = np.diag(omega_n ** 2)
    damping = (msqrt[:, None] * q) @ lam @ (q.T * msqrt[None, :])
    stiffness = (msqrt[:, None] * q) @ omg @ (q.T * msqrt[None, :])
    input_map = msqrt[:, None] * q
    minv = 1.0 / mass
    zero = np.zeros((n_r, n_r))
    eye = np.eye(n_r)
    a = np.block([[zero, eye],
                  [-(minv[:, None] * stiffness), -(minv[:, None] * damping)]])
    b = np.vstack([zero, minv[:, None] * input_map])
    e = np.vstack([zero, eye])
    return MdofSystem(n_r=n_r, mass=mass, modes=q, zeta=zeta,
                      omega_n=omega_n, damping=damping, stiffness=stiffness,
                      input_map=input_map, a=a, b=b, e=e)


def _modal_phi(zeta: float, omega: float, h: float) -> np.ndarray:
    """Matrix exponential of [[0, 1], [-omega^2, -2 zeta omega]] * h."""
    if zeta >= 1.0:
        # critically damped (double pole at -omega)
        ew = math.exp(-omega * h)
        return ew * np.array([[1.0 + omega * h, h],
                              [-omega * omega * h, 1.0 - omega * h]])
    sigma = zeta * omega
    omega_d = omega * math.sqrt(1.0 - zeta * zeta)
    es = math.exp(-sigma * h)
    c, s = math.cos(omega_d * h), math.sin(omega_d * h)
    return es * np.array(
        [[c + sigma / omega_d * s, s / omega_d],
         [-(omega * omega / omega_d) * s, c - sigma / omega_d * s]])


def _modal_hold(zeta: float, omega: float, h: float) -> np.ndarray:
    """Integral of the modal transition over the hold interval:
    A_c^{-1} (Phi - I), using the closed-form inverse."""
    phi = _modal_phi(zeta, omega, h)
    a_inv = np.array([[-2.0 * zeta * omega, -1.0],
                      [omega * omega, 0.0]]) / (omega * omega)
    return a_inv @ (phi - np.eye(2))


def discretize(sys: MdofSystem, rate_multiplier: float = 10.0):
    """Exact zero-order-hold discretization sampled ``rate_multiplier``
    times faster than the fastest pole. Returns (A_d, B_d, E_d, h)."""
    omega_s = rate_multiplier * float(sys.omega_n.max())
    h = 2.0 * np.pi / omega_s
    n_r = sys.n_r
    phi_z = np.zeros((2 * n_r, 2 * n_r))
    b_z = np.zeros((2 * n_r, n_r))
    e_z = np.zeros((2 * n_r, n_r))
    g = sys.modes.T * np.sqrt(sys.mass)[None, :]   # modal disturbance map
    for i in range(n_r):
        rows = slice(2 * i, 2 * i + 2)
        phi_z[rows, rows] = _modal_phi(sys.zeta[i], sys.omega_n[i], h)
        hold = _modal_hold(sys.zeta[i], sys.omega_n[i], h)[:, 1]
        b_z[rows, i] = hold
        e_z[rows, :] = hold[:, None] * g[i:i + 1, :]
    # modal state (mode-major) -> physical state (y, ydot)
    s = sys.modes / np.sqrt(sys.mass)[:, None]
    perm = np.zeros((2 * n_r, 2 * n_r))
    for i in range(n_r):
        perm[2 * i, i] = 1.0              # q_i from coordinate-major slot
        perm[2 * i + 1, n_r + i] = 1.0
    w = np.block([[s, np.zeros((n_r, n_r))],
                  [np.zeros((n_r, n_r)), s]]) @ perm.T
    w_inv = np.linalg.solve(w, np.eye(2 * n_r))
    a_d = w @ phi_z @ w_inv
    b_d = w @ b_z
    e_d = w @ e_z
    return a_d, b_d, e_d, h


def lqr_synthesis(a_d: np.ndarray, b_d: np.ndarray,
                  q: Optional[np.ndarray] = None,
                  r: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete-time LQR gain by fixed-point Riccati iteration."""
    nx = a_d.shape[0]
    nu = b_d.shape[1]
    q = Q_WEIGHT * np.eye(nx) if q is None else q
    r = R_WEIGHT * np.eye(nu) if r is None else r
    p = q.copy()
    for _ in range(DARE_MAX_ITER):
        btp = b_d.T @ p
        gain = np.linalg.solve(r + btp @ b_d, btp @ a_d)
        with np.errstate(over="ignore", invalid="ignore"):
            p_next = q + a_d.T @ p @ (a_d - b_d @ gain)
            p_next = (p_next + p_next.T) / 2.0
        if not np.all(np.isfinite(p_next)):
            raise RiccatiDivergence("Riccati iterate diverged")
        if np.abs(p_next - p).max() <= DARE_TOL:
            btp = b_d.T @ p_next
            return np.linalg.solve(r + btp @ b_d, btp @ a_d)
        p = p_next
    raise RiccatiDivergence(
        f"Riccati iteration failed to converge in {DARE_MAX_ITER} steps")


def construct_theta(a_d: np.ndarray, b_d: np.ndarray, e_d: np.ndarray,
                    gain: np.ndarray, max_halvings: int = 40) -> float:
    """Smallest box half-width c in the halving schedule 2^-k such that
    [-c, c]^nx is robustly invariant under the LQR loop with the bounded
    disturbance. Checked exactly on box and disturbance vertices."""
    nx = a_d.shape[0]
    a_cl = a_d - b_d @ gain
    w_vertices = np.array(list(itertools.product((-W_INF, W_INF),
                                                 repeat=e_d.shape[1])))
    box_signs = np.array(list(itertools.product((-1.0, 1.0), repeat=nx)))
    disturbance = np.abs(e_d @ w_vertices.T).max(axis=1)
    passing = None
    for k in range(max_halvings + 1):
        c = 2.0 ** (-k)
        reach = np.abs(a_cl @ (c * box_signs).T).max(axis=1) + disturbance
        if np.all(reach <= c):
            passing = c
        elif passing is not None:
            break
    if passing is None:
        raise NoInvariantBoxFound(
            "no invariant parameter box in the halving schedule")
    return passing


# ---------------------------------------------------------------------------
# MPC assembly with disjunctive input slabs.
# ---------------------------------------------------------------------------

def assemble_mpc_program(a_d: np.ndarray, b_d: np.ndarray, e_d: np.ndarray,
                         gain: np.ndarray, c: float,
                         horizon: int = HORIZON,
                         tightened: bool = True,
                         name: str = "mdof-mpc"
                         ) -> tuple[ParametricProgram, Polytope]:
    """Finite-horizon MPC as a multiparametric mixed-integer conic program.

    Parameter theta is the initial state inside the box [-c, c]^nx.
    Decision variables are (u_0..u_{N-1}, x_1..x_N, t) with an epigraph
    second-order-cone cost row. Per step the input lives in one of
    2*nu + 1 disjuncts selected by a one-hot group: the zero input, or a
    sign slab along one axis with the other axes box-bounded. With
    ``tightened`` the state rows are shrunk by the worst-case accumulated
    disturbance so the plan stays feasible under the bounded noise.
    """
    if horizon < 1:
        raise InvalidInput("horizon must be >= 1")
    nx = a_d.shape[0]
    nu = b_d.shape[1]
    big_n = horizon
    n_opts = 2 * nu + 1
    m = big_n * n_opts
    n_vars = big_n * nu + big_n * nx + 1
    t_col = n_vars - 1

    u_max = np.abs(gain).sum(axis=1) * c

    def ucols(k):
        return slice(k * nu, (k + 1) * nu)

    def xcols(k):
        # columns of x_k for k = 1..N
        return slice(big_n * nu + (k - 1) * nx, big_n * nu + k * nx)

    # dynamics equalities: x_1 = A theta + B u_0; x_{k+1} = A x_k + B u_k
    eq_x = np.zeros((big_n * nx, n_vars))
    eq_th = np.zeros((big_n * nx, nx))
    for k in range(big_n):
        rows = slice(k * nx, (k + 1) * nx)
        eq_x[rows, xcols(k + 1)] = np.eye(nx)
        eq_x[rows, ucols(k)] = -b_d
        if k == 0:
            eq_th[rows, :] = -a_d
        else:
            eq_x[rows, xcols(k)] = -a_d
    eq_b = np.zeros(big_n * nx)

    # state rows: |x_k,i| <= c (minus accumulated disturbance when
    # tightened), scaled so the right-hand side is 1
    margins = np.zeros((big_n, nx))
    if tightened:
        powers = [np.eye(nx)]
        for _ in range(big_n - 1):
            powers.append(a_d @ powers[-1])
        for k in range(1, big_n + 1):
            margins[k - 1] = sum(
                np.abs(powers[k - 1 - j] @ e_d).sum(axis=1) * W_INF
                for j in range(k))
    if np.any(margins >= c):
        raise HorizonInfeasible(
            "disturbance tightening exceeds the parameter box")
    state_rows = []
    state_rhs = []
    for k in range(1, big_n + 1):
        for i in range(nx):
            for sign in (1.0, -1.0):
                row = np.zeros(n_vars)
                row[xcols(k)][i] = -sign / c
                state_rows.append(row.copy())
                state_rhs.append((c - margins[k - 1, i]) / c)

    # epigraph cost row: t >= z_q' H z_q with H = blkdiag(R..., Q...)
    weights = np.concatenate([np.full(big_n * nu, R_WEIGHT),
                              np.full(big_n * nx, Q_WEIGHT)])
    h_sqrt = np.sqrt(weights)
    soc_rows = np.zeros((2 + big_n * (nu + nx), n_vars))
    soc_rhs = np.zeros(2 + big_n * (nu + nx))
    soc_rows[0, t_col] = 1.0
    soc_rhs[0] = 1.0
    for j in range(big_n * (nu + nx)):
        soc_rows[1 + j, j] = 2.0 * h_sqrt[j]
    soc_rows[-1, t_col] = 1.0
    soc_rhs[-1] = -1.0

    # per-step disjunctive input rows, affine in the one-hot bits:
    #   u_i <=  u_max_i (1 - z0 - z_i-) - eps u_max_i z_i-
    #   u_i >= -u_max_i (1 - z0 - z_i+) + eps u_max_i z_i+
    eps = U_MIN_FRAC
    input_rows = []
    input_rhs = []
    input_dcols = []

    def bit(k, opt):
        return k * n_opts + opt

    for k in range(big_n):
        for i in range(nu):
            up_row = np.zeros(n_vars)
            up_row[ucols(k)][i] = 1.0
            up_d = np.zeros(m)
            up_d[bit(k, 0)] = u_max[i]
            up_d[bit(k, 2 + 2 * i)] = (1.0 + eps) * u_max[i]   # z_i-
            input_rows.append(up_row)
            input_rhs.append(u_max[i])
            input_dcols.append(up_d)
            lo_row = np.zeros(n_vars)
            lo_row[ucols(k)][i] = -1.0
            lo_d = np.zeros(m)
            lo_d[bit(k, 0)] = u_max[i]
            lo_d[bit(k, 1 + 2 * i)] = (1.0 + eps) * u_max[i]   # z_i+
            input_rows.append(lo_row)
            input_rhs.append(u_max[i])
            input_dcols.append(lo_d)

    cone = ConeSpec(((CONE_NONNEG, len(state_rows) + len(input_rows)),
                     (CONE_SOC, soc_rows.shape[0])))
    ineq_x = np.vstack([np.array(state_rows), np.array(input_rows)])
    ineq_b = np.concatenate([state_rhs, input_rhs])
    ineq_d = np.vstack([np.zeros((len(state_rows), m)),
                        -np.array(input_dcols)])
    cone_x_full = np.vstack([-ineq_x, soc_rows])
    cone_b_full = np.concatenate([ineq_b, soc_rhs])
    cone_d_full = np.vstack([ineq_d, np.zeros((soc_rows.shape[0], m))])
    cone_th = np.zeros((cone_b_full.size, nx))
    c_x = np.zeros(n_vars)
    c_x[t_col] = 1.0

    affine = AffineDeltaData(
        c_x=c_x, c_d=np.zeros(m), c_th=np.zeros(nx), c0=0.0,
        eq_x=eq_x, eq_d=np.zeros((eq_b.size, m)), eq_th=eq_th, eq_b=eq_b,
        cone_x=cone_x_full, cone_d=cone_d_full, cone_th=cone_th,
        cone_b=cone_b_full, cone=cone)

    groups = tuple(tuple(bit(k, o) for o in range(n_opts))
                   for k in range(big_n))
    prog = ParametricProgram(
        p=nx, n=n_vars, m=m, data_map=affine.fix_delta,
        one_hot_groups=groups, affine=affine, name=name)

    box = np.array(list(itertools.product((-c, c), repeat=nx)))
    return prog, Polytope(box)


def generate_instance(kind: str, seed: int = 0, n_r: int = 1,
                      horizon: int = HORIZON, tightened: bool = True):
    """End-to-end instance construction.

    Returns (program, parameter polytope, metadata). Benchmark instances
    are rescaled so the parameter box is the unit box; the metadata
    records the scaling, sampling period and invariant half-width. Raises
    HorizonInfeasible when no admissible commutation is feasible at the
    box center.
    """
    if kind == "toy1d":
        prog, poly = toy1d()
        return prog, poly, {"name": prog.name, "kind": kind}
    if kind == "toy1d-offset":
        prog, poly = toy1d_offset()
        return prog, poly, {"name": prog.name, "kind": kind}
    if kind.startswith("toy1d-kappa:"):
        kappa = float(kind.split(":", 1)[1])
        prog, poly = toy1d_kappa(kappa)
        return prog, poly, {"name": prog.name, "kind": kind,
                            "kappa": kappa}
    if kind != "mdof":
        raise InvalidInput(f"unknown instance kind {kind!r}")

    sys = generate_mdof(n_r, seed)
    a_d, b_d, e_d, h = discretize(sys)
    gain = lqr_synthesis(a_d, b_d)
    c = construct_theta(a_d, b_d, e_d, gain)
    name = f"mdof-n{n_r}-s{seed}" + ("" if tightened else "-nominal")
    prog, poly = assemble_mpc_program(a_d, b_d, e_d, gain, c,
                                      horizon=horizon, tightened=tightened,
                                      name=name)
    prog, poly, tf = scale_to_unit_box(prog, poly)
    prog.name = name
    center = np.zeros(prog.p)
    out, _ = mi.solve_minlp(prog, center, first_feasible=True)
    if out.status != conic.OPTIMAL:
        raise HorizonInfeasible(
            "no admissible commutation feasible at the box center")
    meta = {"name": name, "kind": kind, "seed": seed, "n_r": n_r,
            "N": horizon, "mode": "tightened" if tightened else "nominal",
            "h": h, "c": c,
            "zeta": " ".join(repr(float(z)) for z in sys.zeta),
            "omega_n": " ".join(repr(float(w)) for w in sys.omega_n),
            "scale": " ".join(repr(float(v)) for v in tf.scale),
            "offset": " ".join(repr(float(v)) for v in tf.offset)}
    return prog, poly, meta
