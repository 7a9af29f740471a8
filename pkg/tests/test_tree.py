import numpy as np
import pytest

from commutree import mi, phase1, phase2
from commutree.errors import FormatError, OutsideTheta
from commutree.geometry import barycentric_coordinates
from commutree.instances import toy1d
from commutree.tree import (PartitionTree, STATUS_CLOSED_FEASIBLE,
                            deserialize, serialize, statistics)


def toy_tree():
    prog, poly = toy1d()
    return phase1.build_partition(prog, poly, phase1.Phase1Config()), prog


def square_tree():
    """Hand-built 2-D tree: unit square, two triangles, one bisected."""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tree = PartitionTree(2, 1, square)
    a = tree.add_child(0, square[[0, 1, 2]])
    b = tree.add_child(0, square[[0, 2, 3]])
    tree.close(b.id, STATUS_CLOSED_FEASIBLE, delta=(1,))
    mid = (square[0] + square[2]) / 2
    c = tree.add_child(a.id, np.vstack([mid, square[[1, 2]]]))
    d = tree.add_child(a.id, np.vstack([square[[0, 1]], mid]))
    tree.close(c.id, STATUS_CLOSED_FEASIBLE, delta=(0,))
    tree.close(d.id, STATUS_CLOSED_FEASIBLE, delta=(0,))
    return tree


class TestStructure:
    def test_total_volume(self):
        tree = square_tree()
        assert tree.total_volume() == pytest.approx(1.0)

    def test_leaves_and_finalized(self):
        tree = square_tree()
        assert sorted(n.id for n in tree.leaves()) == [2, 3, 4]
        assert tree.is_finalized()

    def test_depth_tracked(self):
        tree = square_tree()
        assert tree.nodes[3].depth == 2


class TestQuery:
    def test_agrees_with_linear_scan(self):
        tree = square_tree()
        rng = np.random.default_rng(3)
        for theta in rng.uniform(0.02, 0.98, size=(200, 2)):
            leaf = tree.query(theta)
            containing = [n.id for n in tree.leaves()
                          if barycentric_coordinates(n.vertices, theta)[1]]
            assert leaf.id in containing

    def test_outside_raises(self):
        tree = square_tree()
        with pytest.raises(OutsideTheta):
            tree.query([2.0, 2.0])

    def test_instrumented_cost_bound(self):
        tree = square_tree()
        rng = np.random.default_rng(4)
        eta_o = len(tree.first_layer())
        tau = max(n.depth for n in tree.leaves()) - 1
        p = tree.p
        for theta in rng.uniform(0.02, 0.98, size=(100, 2)):
            tree.query(theta)
            assert tree.last_query_tests <= (eta_o + tau) * (p + 1)


class TestSerialization:
    def test_round_trip_byte_identical(self, tmp_path):
        tree, _ = toy_tree()
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        serialize(tree, a)
        serialize(deserialize(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip_preserves_fields(self, tmp_path):
        tree, prog = toy_tree()
        cache = mi.CommutationCache()
        phase2.refine_partition(tree, prog,
                                phase2.Phase2Config(eps_abs=0.2), cache)
        path = tmp_path / "t.txt"
        serialize(tree, path)
        loaded = deserialize(path)
        assert len(loaded.nodes) == len(tree.nodes)
        for a, b in zip(tree.nodes, loaded.nodes):
            assert a.status == b.status
            assert a.delta == b.delta
            assert np.array_equal(a.vertices, b.vertices)
            if a.e_abs is not None:
                assert b.e_abs == a.e_abs

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("GARBAGE\n")
        with pytest.raises(FormatError):
            deserialize(path)

    def test_volume_violation_rejected(self, tmp_path):
        tree, _ = toy_tree()
        path = tmp_path / "t.txt"
        serialize(tree, path)
        lines = path.read_text().splitlines()
        # shrink one leaf vertex so siblings no longer tile the parent
        idx = max(i for i, l in enumerate(lines) if l.startswith("v "))
        lines[idx] = "v " + (0.25).hex()
        path.write_text("\n".join(lines))
        with pytest.raises(FormatError):
            deserialize(path)


class TestStatistics:
    def test_toy_counts(self):
        tree, _ = toy_tree()
        stats = statistics(tree)
        assert stats.leaf_count == 2
        assert stats.first_layer_count == 1
        assert stats.node_count == 4
        assert stats.status_volume_fractions[STATUS_CLOSED_FEASIBLE] == \
            pytest.approx(1.0)

    def test_kappa_estimate_on_exact_fit(self):
        tree, _ = toy_tree()
        stats = statistics(tree, fitted_leaf_count=2.0)
        assert stats.kappa_estimate == pytest.approx(np.exp(-1.0))

    def test_kappa_estimate_clamped(self):
        tree, _ = toy_tree()
        stats = statistics(tree, fitted_leaf_count=1e9)
        assert 0.0 < stats.kappa_estimate <= 1.0
