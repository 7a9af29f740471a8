import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commutree import conic
from commutree.instances import toy1d
from commutree.problem import CONE_NONNEG, CONE_SOC, ConeSpec, ConicData


def random_bounded_lp(rng, n):
    """min c.x over a box intersected with random halfspaces."""
    c = rng.standard_normal(n)
    a = rng.standard_normal((n + 2, n))
    b = rng.uniform(0.5, 2.0, size=n + 2)
    rows = [a, np.eye(n), -np.eye(n)]
    rhs = [b, np.full(n, 3.0), np.full(n, 3.0)]
    return c, np.vstack(rows), np.concatenate(rhs)


def brute_force_lp(c, a, b):
    """Exact LP minimum by enumerating basic feasible points."""
    n = a.shape[1]
    best = None
    for idx in itertools.combinations(range(a.shape[0]), n):
        sub = a[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(idx)])
        if np.all(a @ x <= b + 1e-9):
            val = c @ x
            if best is None or val < best:
                best = val
    return best


class TestLpOracle:
    def test_fifty_random_lps_match_vertex_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            n = int(rng.integers(2, 4))
            c, a, b = random_bounded_lp(rng, n)
            out = conic.solve_blocks(c, [(CONE_NONNEG, a, b)])
            assert out.is_optimal, f"trial {trial}: {out.status}"
            exact = brute_force_lp(c, a, b)
            assert exact is not None
            assert out.value == pytest.approx(exact, abs=1e-4)


class TestSocOracle:
    def test_euclidean_norm_three_four(self):
        # min t s.t. ||(3, 4)|| <= t
        c = np.array([1.0])
        a = np.array([[-1.0], [0.0], [0.0]])
        b = np.array([0.0, 3.0, 4.0])
        out = conic.solve_blocks(c, [(CONE_SOC, a, b)])
        assert out.is_optimal
        assert out.value == pytest.approx(5.0, abs=1e-6)

    def test_projection_onto_disk(self):
        # min ||x - (2, 0)|| with ||x|| <= 1 -> distance 1
        c = np.array([0.0, 0.0, 1.0])
        soc_obj = np.array([[0.0, 0.0, -1.0],
                            [-1.0, 0.0, 0.0],
                            [0.0, -1.0, 0.0]])
        b_obj = np.array([0.0, -2.0, 0.0])
        soc_ball = np.array([[0.0, 0.0, 0.0],
                             [-1.0, 0.0, 0.0],
                             [0.0, -1.0, 0.0]])
        b_ball = np.array([1.0, 0.0, 0.0])
        out = conic.solve_blocks(c, [(CONE_SOC, soc_obj, b_obj),
                                     (CONE_SOC, soc_ball, b_ball)])
        assert out.is_optimal
        assert out.value == pytest.approx(1.0, abs=1e-6)


class TestInfeasibilityCertificates:
    def test_twenty_constructed_infeasible_lps(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            lo = rng.uniform(0.5, 2.0, size=n)
            # x >= lo and x <= lo - gap componentwise: empty
            gap = rng.uniform(0.1, 1.0, size=n)
            a = np.vstack([-np.eye(n), np.eye(n)])
            b = np.concatenate([-lo, lo - gap])
            out = conic.solve_blocks(np.ones(n), [(CONE_NONNEG, a, b)])
            assert out.status == conic.INFEASIBLE

    def test_unbounded_detected(self):
        out = conic.solve_blocks(np.array([-1.0]),
                                 [(CONE_NONNEG, np.array([[-1.0]]),
                                   np.array([0.0]))])
        assert out.status == conic.UNBOUNDED


class TestParametricSolve:
    def test_equality_and_objective_offsets(self):
        data = ConicData(
            c_x=[1.0], c_th=[2.0], c0=3.0,
            eq_x=[[1.0]], eq_th=[[-1.0]], eq_b=[0.0],
            cone_x=np.zeros((1, 1)), cone_th=np.zeros((1, 1)),
            cone_b=[1.0], cone=ConeSpec(((CONE_NONNEG, 1),)))
        out = conic.solve(data, [0.5])
        assert out.is_optimal
        # x = theta, value = theta + 2 theta + 3
        assert out.value == pytest.approx(4.5, abs=1e-8)

    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9),
           st.floats(0.0, 1.0))
    @settings(max_examples=30, deadline=None)
    def test_value_function_convex_in_theta(self, t1, t2, lam):
        prog, _ = toy1d()
        mid = lam * t1 + (1 - lam) * t2
        outs = [conic.solve_fixed_commutation(prog, [t], (0,))
                for t in (t1, t2, mid)]
        if all(o.is_optimal for o in outs):
            assert outs[2].value <= \
                lam * outs[0].value + (1 - lam) * outs[1].value + 1e-6

    def test_toy_value_is_theta_squared(self):
        prog, _ = toy1d()
        for theta in (-0.15, 0.0, 0.4, 0.95):
            out = conic.solve_fixed_commutation(prog, [theta], (0,))
            assert out.is_optimal
            assert out.value == pytest.approx(theta ** 2, abs=1e-7)

    def test_toy_feasible_sets(self):
        prog, _ = toy1d()
        # delta=0 admits u in [-1, 0.2] i.e. theta in [-0.2, 1]
        assert conic.solve_fixed_commutation(prog, [-0.3], (0,)).status \
            == conic.INFEASIBLE
        assert conic.solve_fixed_commutation(prog, [-0.1], (0,)).is_optimal
        assert conic.solve_fixed_commutation(prog, [0.3], (1,)).status \
            == conic.INFEASIBLE
        assert conic.solve_fixed_commutation(prog, [0.1], (1,)).is_optimal
