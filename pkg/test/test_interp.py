import numpy as np
import pytest

import fespaces
import interp
import mesh as meshlib
import polycalc
import quadrature
import study
from fespaces import SpaceTag
from polycalc import X, Y, Z, MultiPoly


@pytest.fixture(scope='class')
def spaces():
    return fespaces.Spaces(meshlib.build_structured_cube(2))


def tet_points(spaces, degree=3):
    return quadrature.map_tet_rule(spaces.mesh.geometry, quadrature.rule_for(3, degree))[0]


def both_sides(field, mesh, facets):
    """Values at the facet quadrature points seen from the owner and the neighbour."""
    rule = quadrature.rule_for(2, 2)
    points, _ = quadrature.map_facet_rule(mesh.vertices[mesh.facets[facets]], rule)
    sides = []
    for column in range(2):
        tets = mesh.facet_tets[facets, column]
        sides.append(field.values(points, tets))
    return points, sides


class TestDiscreteField:
    def test_wrong_length(self, spaces):
        with pytest.raises(ValueError):
            interp.DiscreteField(spaces, SpaceTag.Vh, np.zeros(3))

    def test_arithmetic(self, spaces):
        rng = np.random.default_rng(1)
        a = interp.random_field(spaces, SpaceTag.Wh, rng)
        b = interp.random_field(spaces, SpaceTag.Wh, rng)
        assert np.allclose((a + b - a).coefficients, b.coefficients)
        assert np.allclose((2 * a).coefficients, 2 * a.coefficients)

    def test_random_field_masks_dirichlet(self, spaces):
        u = interp.random_field(spaces, SpaceTag.Vh, np.random.default_rng(2))
        mask = spaces[SpaceTag.Vh].dirichlet_mask
        assert np.all(u.coefficients[mask] == 0)
        assert np.all(u.coefficients[~mask] != 0)

    def test_bdm1_normal_continuity(self, spaces):
        u = interp.random_field(spaces, SpaceTag.Vh, np.random.default_rng(3))
        mesh = spaces.mesh
        facets = mesh.interior_facets()
        _, (owner, neighbour) = both_sides(u, mesh, facets)
        n = mesh.facet_normals[facets][:, None, :]
        assert np.allclose(np.sum(owner * n, -1), np.sum(neighbour * n, -1), atol=1e-10)
        assert not np.allclose(owner, neighbour)

    def test_rt0_normal_continuity(self, spaces):
        w = interp.random_field(spaces, SpaceTag.Wh, np.random.default_rng(4))
        mesh = spaces.mesh
        facets = mesh.interior_facets()
        _, (owner, neighbour) = both_sides(w, mesh, facets)
        n = mesh.facet_normals[facets][:, None, :]
        assert np.allclose(np.sum(owner * n, -1), np.sum(neighbour * n, -1), atol=1e-10)


class TestInterpolation:
    def test_linear_velocity_reproduced(self, spaces):
        field = [1 + X + 2 * Y, Y - Z, 3 * Z + X]
        u = interp.interp_V(spaces, field)
        points = tet_points(spaces)
        assert np.allclose(u.values(points), polycalc.evaluate(field, points), atol=1e-12)
        assert np.allclose(u.divergence(), 5.0)

    def test_rt0_field_reproduced(self, spaces):
        field = [1 + 2 * X, -1 + 2 * Y, 2 * Z]
        w = interp.interp_W(spaces, field)
        points = tet_points(spaces)
        assert np.allclose(w.values(points), polycalc.evaluate(field, points), atol=1e-12)

    def test_pressure_means(self, spaces):
        q = interp.interp_Q(spaces, X)
        assert np.allclose(q.coefficients, spaces.mesh.geometry.centroids[:, 0])

    def test_vhat_constant(self, spaces):
        c = np.array([1.0, -2.0, 0.5])
        uhat = interp.interp_Vhat(spaces, [MultiPoly.constant(v) for v in c])
        mesh = spaces.mesh
        kept = mesh.facet_labels != meshlib.DIRICHLET
        expected = np.einsum('fki,i->fk', mesh.facet_tangents[kept], c).ravel()
        assert np.allclose(uhat.coefficients, expected)

    def test_vhat_facet_values(self, spaces):
        c = np.array([0.0, 1.0, 1.0])
        uhat = interp.interp_Vhat(spaces, [MultiPoly.constant(v) for v in c])
        mesh = spaces.mesh
        values = uhat.facet_values()
        n = mesh.geometry.outward_normals
        tangential = c - np.einsum('mfi,i->mf', n, c)[..., None] * n
        open_facets = mesh.facet_labels[mesh.tet_facets] != meshlib.DIRICHLET
        assert np.allclose(values[open_facets], tangential[open_facets])
        assert np.allclose(values[~open_facets], 0.0)

    def test_sigma_constant(self, spaces):
        d = np.array([[1.0, 2.0, 0.0], [2.0, -3.0, 1.0], [0.5, 1.0, 2.0]])
        field = [[MultiPoly.constant(v) for v in row] for row in d]
        sigma = interp.interp_Sigma(spaces, field)
        points = tet_points(spaces, 1)
        values = sigma.values(points)
        assert np.allclose(values, np.broadcast_to(d, values.shape), atol=1e-12)

    def test_sigma_nt_moments(self, spaces):
        # Facet coefficients are the facet means of the tangential part of sigma n.
        field = [[X, Y, Z], [Z, -X, Y], [Y, X, Z - X]]
        sigma = interp.interp_Sigma(spaces, field)
        g = spaces.mesh.geometry
        facet = sigma.local().reshape(g.n_elements, 16)[:, :8].reshape(-1, 4, 2)
        exact = polycalc.evaluate(field, g.facet_centroids)
        expected = np.einsum('mfki,mfij,mfj->mfk', g.facet_tangents, exact, g.outward_normals)
        assert np.allclose(facet, expected)

    def test_plain_function_needs_degree(self, spaces):
        with pytest.raises(ValueError):
            interp.interp_Q(spaces, lambda p: p[..., 0])
        q = interp.interp_Q(spaces, lambda p: p[..., 0], degree=1)
        assert np.allclose(q.coefficients, spaces.mesh.geometry.centroids[:, 0])

    def test_unsupported(self, spaces):
        with pytest.raises(ValueError):
            interp.interp_Q(spaces, 'x')

    def test_commuting_diagram(self, spaces):
        field = study.random_polynomial_field(np.random.default_rng(5))
        assert study.commuting_defect(spaces, field) <= 1e-12
