import math

import numpy as np
import pytest

from commutree import mi, phase1
from commutree.errors import (InvalidInput, IterationCapExceeded,
                              ThetaExceedsFeasibleSet)
from commutree.geometry import Polytope
from commutree.instances import toy1d, toy1d_kappa
from commutree.tree import STATUS_CLOSED_FEASIBLE, serialize


def leaf_intervals(tree):
    return sorted(
        ((n.vertices.min(), n.vertices.max()), n.delta)
        for n in tree.leaves())


class TestToyPartition:
    def test_exact_two_leaf_partition(self):
        prog, poly = toy1d()
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        assert leaf_intervals(tree) == [((-1.0, 0.0), (1,)),
                                        ((0.0, 1.0), (0,))]
        assert all(n.status == STATUS_CLOSED_FEASIBLE
                   for n in tree.leaves())

    def test_vertex_values_recorded(self):
        prog, poly = toy1d()
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        for leaf in tree.leaves():
            expected = leaf.vertices.ravel() ** 2
            assert leaf.vertex_values == pytest.approx(expected, abs=1e-7)

    def test_deterministic_byte_identical(self, tmp_path):
        prog, poly = toy1d()
        paths = []
        for i in range(2):
            tree = phase1.build_partition(prog, poly,
                                          phase1.Phase1Config())
            tree.meta["runtime"] = 0.0  # wall time is run-dependent
            path = tmp_path / f"run{i}.txt"
            serialize(tree, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_events_monotone_closed_fraction(self):
        prog, poly = toy1d()
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        fractions = [e["closed_fraction"] for e in tree.events]
        assert fractions == sorted(fractions)
        assert fractions[-1] == pytest.approx(1.0)

    def test_cache_shared_across_leaves(self):
        prog, poly = toy1d()
        cache = mi.CommutationCache()
        phase1.build_partition(prog, poly, phase1.Phase1Config(), cache)
        assert set(cache.ordered()) == {(0,), (1,)}


class TestDepthBound:
    def test_formula(self):
        assert phase1.estimate_depth_bound(2.0, 0.2, 1) == \
            math.ceil(math.log2(10.0))
        assert phase1.estimate_depth_bound(1.0, 1.0, 3) == 0

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInput):
            phase1.estimate_depth_bound(2.0, 0.0, 1)
        with pytest.raises(InvalidInput):
            phase1.estimate_depth_bound(-1.0, 0.5, 1)

    @pytest.mark.parametrize("kappa", [0.4, 0.2, 0.1, 0.05])
    def test_observed_depth_within_bound(self, kappa):
        prog, poly = toy1d_kappa(kappa)
        tree = phase1.build_partition(prog, poly, phase1.Phase1Config())
        observed = max(n.depth - 1 for n in tree.leaves())
        assert observed <= math.ceil(math.log2(2.0 / kappa)) + 1


class TestFailurePaths:
    def test_theta_exceeding_feasible_set(self):
        prog, _ = toy1d()
        wide = Polytope(np.array([[-1.0], [1.5]]))
        with pytest.raises(ThetaExceedsFeasibleSet) as err:
            phase1.build_partition(prog, wide, phase1.Phase1Config())
        witness = np.atleast_1d(err.value.witness)
        assert witness[0] > 1.0
        out, delta = mi.solve_minlp(prog, witness)
        assert not out.is_optimal
        assert delta is None

    def test_iteration_cap(self):
        prog, poly = toy1d_kappa(0.05)
        with pytest.raises(IterationCapExceeded):
            phase1.build_partition(prog, poly,
                                   phase1.Phase1Config(max_iterations=2))

    def test_bad_config_rejected(self):
        with pytest.raises(InvalidInput):
            phase1.Phase1Config(max_iterations=0).check()


class TestParallel:
    def test_parallel_matches_sequential_leaf_set(self):
        prog, poly = toy1d_kappa(0.1)
        seq = phase1.build_partition(prog, poly, phase1.Phase1Config())
        par = phase1.build_partition(
            prog, poly,
            phase1.Phase1Config(deterministic=False, worker_count=4))
        assert leaf_intervals(seq) == leaf_intervals(par)
