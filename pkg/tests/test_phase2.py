import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commutree import mi, phase1, phase2
from commutree.errors import InvalidInput, IterationCapExceeded
from commutree.instances import toy1d, toy1d_offset
from commutree.tree import STATUS_CERTIFIED, STATUS_ONLY_FEASIBLE


def refined_tree(make_instance, **cfg_kwargs):
    prog, poly = make_instance()
    tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
    cache = mi.CommutationCache()
    phase2.refine_partition(tree, prog, phase2.Phase2Config(**cfg_kwargs),
                            cache)
    return tree, prog


class TestConfig:
    def test_requires_a_tolerance(self):
        with pytest.raises(InvalidInput):
            phase2.Phase2Config().check()

    def test_rho_max_below_one_rejected(self):
        with pytest.raises(InvalidInput):
            phase2.Phase2Config(eps_abs=0.1, rho_max=0.5).check()

    def test_keep_out_fraction_bounded(self):
        with pytest.raises(InvalidInput):
            phase2.Phase2Config(eps_abs=0.1, pi_rel=0.5).check()


class TestOverApproximator:
    def test_vertex_equality(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        vals = np.array([1.0, 3.0, -2.0])
        oa = phase2.OverApproximator.from_vertex_values(verts, vals)
        for v, y in zip(verts, vals):
            assert phase2.over_approx_value(oa, v) == pytest.approx(y,
                                                                    abs=1e-7)
            assert oa.affine_value(v) == pytest.approx(y, abs=1e-7)

    @given(st.floats(0.01, 0.99))
    @settings(max_examples=30, deadline=None)
    def test_upper_bounds_convex_value(self, t):
        # the value function of the toy program is theta^2, convex, so the
        # chord over any interval lies above it
        prog, _ = toy1d()
        verts = np.array([[0.3], [0.9]])
        vals = np.array([0.09, 0.81])
        oa = phase2.OverApproximator.from_vertex_values(verts, vals)
        theta = 0.3 + 0.6 * t
        assert phase2.over_approx_value(oa, theta) >= theta ** 2 - 1e-7

    def test_nonfinite_values_rejected(self):
        with pytest.raises(InvalidInput):
            phase2.OverApproximator.from_vertex_values(
                np.array([[0.0], [1.0]]), [0.0, np.inf])


class TestErrorBounds:
    def test_bounded_chord_gap(self):
        # competitor and carried commutation share the objective where both
        # are feasible, so e_abs is the max chord-minus-parabola gap
        prog, _ = toy1d()
        verts = np.array([[0.05], [0.15]])
        cfg = phase2.Phase2Config(eps_abs=1.0)
        bounds = phase2.compute_error_bounds(
            prog, verts, (0,), [0.05 ** 2, 0.15 ** 2], [(1,)], cfg)
        assert bounds.status == phase2.BOUNDED
        assert bounds.e_abs == pytest.approx(0.1 ** 2 / 4, abs=1e-6)
        assert bounds.denom == pytest.approx(0.05 ** 2, abs=1e-6)
        assert bounds.e_rel == pytest.approx(1.0, abs=1e-3)
        assert bounds.arg_theta[0] == pytest.approx(0.1, abs=1e-4)

    def test_no_competitor(self):
        prog, _ = toy1d()
        verts = np.array([[0.5], [0.9]])
        cfg = phase2.Phase2Config(eps_abs=1.0)
        bounds = phase2.compute_error_bounds(
            prog, verts, (0,), [0.25, 0.81], [(1,)], cfg)
        assert bounds.status == phase2.NO_COMPETITOR

    def test_denominator_degenerate_through_zero_cost(self):
        prog, _ = toy1d()
        verts = np.array([[-0.1], [0.1]])
        cfg = phase2.Phase2Config(eps_abs=1.0)
        bounds = phase2.compute_error_bounds(
            prog, verts, (0,), [0.01, 0.01], [(1,)], cfg)
        assert bounds.status == phase2.DENOM_DEGENERATE
        assert np.isinf(bounds.e_rel)
        assert np.isfinite(bounds.e_abs)


class TestSplitPoint:
    def test_snaps_to_competitor_feasibility_boundary(self):
        # over [-1, 0] the chord of theta^2 is -theta; the gap against the
        # competitor peaks at -0.5 but the competitor is only feasible for
        # theta >= -0.2, so the constrained maximizer lands on the boundary
        prog, _ = toy1d()
        verts = np.array([[-1.0], [0.0]])
        oa = phase2.OverApproximator.from_vertex_values(verts, [1.0, 0.0])
        theta = phase2.constrained_split_point(prog, (0,), oa, verts)
        assert theta[0] == pytest.approx(-0.2, abs=1e-5)

    def test_none_when_infeasible_on_face(self):
        prog, _ = toy1d()
        verts = np.array([[0.5], [0.9]])
        oa = phase2.OverApproximator.from_vertex_values(verts, [0.25, 0.81])
        assert phase2.constrained_split_point(prog, (1,), oa, verts) is None


class TestToyRefinement:
    def test_toy_certifies_without_splits_at_loose_tolerance(self):
        tree, _ = refined_tree(toy1d, eps_abs=0.5)
        assert len(tree.leaves()) == 2
        assert all(n.status in (STATUS_CERTIFIED, STATUS_ONLY_FEASIBLE)
                   for n in tree.leaves())

    def test_offset_three_leaf_trace(self):
        tree, _ = refined_tree(toy1d_offset, eps_abs=0.2)
        leaves = sorted(tree.leaves(),
                        key=lambda n: n.vertices.min())
        spans = [(n.vertices.min(), n.vertices.max()) for n in leaves]
        assert spans[0] == pytest.approx((-1.0, -0.2), abs=1e-5)
        assert spans[1] == pytest.approx((-0.2, 0.0), abs=1e-5)
        assert spans[2] == pytest.approx((0.0, 1.0), abs=1e-5)
        assert [n.delta for n in leaves] == [(1,), (0,), (0,)]
        assert leaves[0].e_abs == pytest.approx(0.1, abs=1e-4)
        assert leaves[2].e_abs == pytest.approx(0.06, abs=1e-4)

    def test_offset_reassigns_to_cheaper_commutation(self):
        tree, prog = refined_tree(toy1d_offset, eps_abs=0.05)
        inside = [n for n in tree.leaves()
                  if n.vertices.min() >= -0.2 - 1e-6
                  and n.vertices.max() <= 1e-6
                  and np.ptp(n.vertices) > 1e-3]
        assert inside and all(n.delta == (0,) for n in inside)
        assert tree.is_finalized()

    def test_large_keep_out_forces_midpoint_splits(self):
        prog, poly = toy1d_offset()
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        phase2.refine_partition(tree, prog,
                                phase2.Phase2Config(eps_abs=0.2, pi_abs=10.0))
        verts = np.concatenate([n.vertices.ravel() for n in tree.leaves()])
        # every split point is a dyadic combination of the original
        # endpoints, never the snapped boundary at -0.2
        assert not np.any(np.isclose(verts, -0.2, atol=1e-9))

    def test_certification_rows_and_warned_fraction(self):
        tree, _ = refined_tree(toy1d_offset, eps_abs=0.2)
        rows = phase2.certification_rows(tree)
        assert {r["leaf_id"] for r in rows} == \
            {n.id for n in tree.leaves()}
        assert all(r["rho"] >= 1.0 for r in rows)
        assert phase2.warned_volume_fraction(tree) == 0.0

    def test_iteration_cap(self):
        prog, poly = toy1d_offset()
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        with pytest.raises(IterationCapExceeded):
            phase2.refine_partition(
                tree, prog,
                phase2.Phase2Config(eps_abs=1e-4, max_iterations=2))
