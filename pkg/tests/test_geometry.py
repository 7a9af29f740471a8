import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commutree.errors import DegenerateSimplex, PointOutside
from commutree.geometry import (Polytope, Simplex, barycentric_coordinates,
                                barycentric_face, condition_number,
                                contains_point, delaunay_triangulate,
                                edge_matrix, longest_edge, sample_in_hull,
                                simplex_metrics, simplex_volume,
                                split_at_point, split_face_at_point)


def unit_simplex(p):
    return np.vstack([np.zeros(p), np.eye(p)])


@st.composite
def simplices(draw, max_p=4):
    p = draw(st.integers(min_value=1, max_value=max_p))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    for _ in range(50):
        v = rng.uniform(-5, 5, size=(p + 1, p))
        s = np.linalg.svd(edge_matrix(v), compute_uv=False)
        if s[-1] > 1e-3 * max(1.0, s[0]):
            return v
    raise AssertionError("could not draw a well-conditioned simplex")


@st.composite
def interior_points(draw, vertices):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    w = rng.dirichlet(np.ones(vertices.shape[0]))
    return w @ vertices


class TestSimplexBasics:
    def test_unit_simplex_volume(self):
        for p in range(1, 5):
            assert simplex_volume(unit_simplex(p)) == pytest.approx(
                1.0 / math.factorial(p))

    def test_wrong_vertex_count_rejected(self):
        with pytest.raises(DegenerateSimplex):
            Simplex(np.zeros((3, 1)))

    def test_rank_deficient_rejected(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DegenerateSimplex):
            Simplex(v)

    def test_metrics_of_unit_triangle(self):
        v = unit_simplex(2)
        vol, bary, (i, j, length) = simplex_metrics(v)
        assert vol == pytest.approx(0.5)
        assert bary == pytest.approx(np.array([1 / 3, 1 / 3]))
        assert length == pytest.approx(np.sqrt(2.0))
        assert (i, j) == (1, 2)

    def test_longest_edge_tie_break_is_first_pair(self):
        # equilateral: all edges tie, the scan picks (0, 1)
        v = np.array([[0.0, 0.0], [1.0, 0.0],
                      [0.5, np.sqrt(3) / 2]])
        i, j, _ = longest_edge(v)
        assert (i, j) == (0, 1)


class TestConditionNumber:
    def test_regular_simplex_well_conditioned(self):
        rho = condition_number(unit_simplex(3))
        assert rho >= 1.0
        assert rho < 10.0

    def test_sliver_large(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-6]])
        assert condition_number(v) > 1e5

    def test_degenerate_raises(self):
        v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DegenerateSimplex):
            condition_number(v)

    @given(simplices())
    @settings(max_examples=50, deadline=None)
    def test_at_least_one(self, v):
        assert condition_number(v) >= 1.0 - 1e-12


class TestBarycentric:
    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_partition_of_unity_and_reconstruction(self, data):
        v = data.draw(simplices())
        theta = data.draw(interior_points(v))
        alpha, inside = barycentric_coordinates(v, theta)
        assert inside
        assert alpha.sum() == pytest.approx(1.0, abs=1e-9)
        assert alpha @ v == pytest.approx(theta, abs=1e-7)

    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_outside_detected(self, data):
        v = data.draw(simplices())
        outside = 2 * v[0] - v[1:].mean(axis=0)  # reflect past vertex 0
        assert not contains_point(v, outside)

    def test_vertex_has_unit_weight(self):
        v = unit_simplex(3)
        alpha, inside = barycentric_coordinates(v, v[2])
        assert inside
        assert alpha == pytest.approx(np.eye(4)[2], abs=1e-12)

    def test_face_embedding(self):
        face = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [0.0, 1.0, 0.0]])
        alpha, inside = barycentric_face(face, np.array([0.25, 0.25, 0.0]))
        assert inside
        assert alpha == pytest.approx([0.5, 0.25, 0.25], abs=1e-9)
        _, off = barycentric_face(face, np.array([0.25, 0.25, 0.5]))
        assert not off


class TestSplit:
    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_children_conserve_volume(self, data):
        v = data.draw(simplices())
        theta = data.draw(interior_points(v))
        children = split_at_point(v, theta)
        total = sum(simplex_volume(c.vertices) for c in children)
        assert total == pytest.approx(simplex_volume(v), rel=1e-7)

    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_children_cover_samples(self, data):
        v = data.draw(simplices())
        theta = data.draw(interior_points(v))
        children = split_at_point(v, theta)
        rng = np.random.default_rng(0)
        for sample in sample_in_hull(rng, v, 20):
            assert any(contains_point(c.vertices, sample)
                       for c in children)

    def test_midpoint_split_gives_two_children(self):
        v = unit_simplex(2)
        mid = (v[0] + v[1]) / 2
        children = split_at_point(v, mid)
        assert len(children) == 2

    def test_outside_point_raises(self):
        with pytest.raises(PointOutside):
            split_at_point(unit_simplex(2), np.array([5.0, 5.0]))

    def test_face_split(self):
        face = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
        children = split_face_at_point(face, np.array([0.5, 0.0, 1.0]))
        assert len(children) == 2


class TestDelaunay:
    def test_interval_triangulation(self):
        poly = Polytope(np.array([[-1.0], [1.0], [0.3]]))
        cells = delaunay_triangulate(poly)
        assert len(cells) == 2
        ends = sorted((c.vertices.min(), c.vertices.max()) for c in cells)
        assert ends == [(-1.0, 0.3), (0.3, 1.0)]

    def test_square_covered(self):
        poly = Polytope(np.array([[-1.0, -1.0], [1.0, -1.0],
                                  [-1.0, 1.0], [1.0, 1.0]]))
        cells = delaunay_triangulate(poly)
        total = sum(simplex_volume(c.vertices) for c in cells)
        assert total == pytest.approx(4.0)
        rng = np.random.default_rng(1)
        for theta in rng.uniform(-1, 1, size=(50, 2)):
            assert sum(contains_point(c.vertices, theta)
                       for c in cells) >= 1

    def test_cube_volume(self):
        corners = np.array(
            [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
            dtype=float)
        cells = delaunay_triangulate(Polytope(corners))
        total = sum(simplex_volume(c.vertices) for c in cells)
        assert total == pytest.approx(1.0)
