from math import factorial

import numpy as np
import pytest

import mesh as meshlib
import quadrature

DEGREES = list(range(13))


def tet_monomial(a, b, c):
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


def triangle_monomial(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class TestReferenceRules:
    @pytest.mark.parametrize('degree', DEGREES)
    def test_tet_exactness(self, degree):
        rule = quadrature.rule_for(3, degree)
        x, y, z = rule.points.T
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                for c in range(degree + 1 - a - b):
                    approx = rule.weights @ (x**a * y**b * z**c)
                    exact = tet_monomial(a, b, c)
                    assert abs(approx - exact) <= 1e-13 * exact, (a, b, c)

    @pytest.mark.parametrize('degree', DEGREES)
    def test_triangle_exactness(self, degree):
        rule = quadrature.rule_for(2, degree)
        x, y = rule.points.T
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                approx = rule.weights @ (x**a * y**b)
                exact = triangle_monomial(a, b)
                assert abs(approx - exact) <= 1e-13 * exact, (a, b)

    @pytest.mark.parametrize('dim', [2, 3])
    @pytest.mark.parametrize('degree', [0, 5, 12])
    def test_points_inside(self, dim, degree):
        rule = quadrature.rule_for(dim, degree)
        assert rule.points.shape == (len(rule), dim)
        assert np.all(rule.weights > 0)
        assert np.all(rule.points >= 0)
        assert np.all(rule.points.sum(axis=1) <= 1)
        assert rule.exact_degree >= degree

    def test_frozen(self):
        rule = quadrature.rule_for(3, 4)
        assert not rule.points.flags.writeable
        assert not rule.weights.flags.writeable
        assert quadrature.rule_for(3, 4) is rule

    @pytest.mark.parametrize(
        'dim, degree', [(3, 13), (2, 13), (3, -1), (3, 2.0), (3, True), (1, 2), (4, 2)]
    )
    def test_invalid(self, dim, degree):
        with pytest.raises(ValueError):
            quadrature.rule_for(dim, degree)


class TestMappedRules:
    def test_tet_volume(self):
        m = meshlib.build_structured_cube(2)
        points, weights = quadrature.map_tet_rule(m.geometry, quadrature.rule_for(3, 2))
        assert np.allclose(weights.sum(axis=1), m.geometry.volumes)
        assert np.isclose(weights.sum(), 1.0)
        # int_cube x y^2 = 1/6
        assert np.isclose(np.sum(weights * points[..., 0] * points[..., 1] ** 2), 1 / 6)

    def test_facet_area(self):
        m = meshlib.build_structured_cube(2)
        points, weights = quadrature.map_facet_rule(m.vertices[m.facets], quadrature.rule_for(2, 1))
        assert np.allclose(weights.sum(axis=1), m.facet_areas)
        centroids = np.einsum('fq,fqi->fi', weights, points) / m.facet_areas[:, None]
        assert np.allclose(centroids, m.facet_centroids)

    def test_facet_batch_shape(self):
        g = meshlib.build_structured_cube(1).geometry
        rule = quadrature.rule_for(2, 3)
        points, weights = quadrature.map_facet_rule(g.facet_vertices, rule)
        assert points.shape == (g.n_elements, 4, len(rule), 3)
        assert np.allclose(weights.sum(axis=2), g.facet_areas)
