import numpy as np
import pytest

import fespaces
import mesh as meshlib
import quadrature
from fespaces import SpaceTag


@pytest.fixture(scope='class')
def spaces():
    return fespaces.Spaces(meshlib.build_structured_cube(2))


def facet_rule(geometry, degree=2):
    rule = quadrature.rule_for(2, degree)
    points, weights = quadrature.map_facet_rule(geometry.facet_vertices, rule)
    lam = np.column_stack([1 - rule.points.sum(axis=1), rule.points[:, 0], rule.points[:, 1]])
    return points, weights, lam


def evaluate_on_facets(basis, points):
    m, nf, nq = points.shape[:3]
    values = basis.evaluate(points.reshape(m, nf * nq, 3))
    return values.reshape(m, nf, nq, *values.shape[2:])


class TestDeviatoricBasis:
    def test_orthonormal(self):
        gram = np.einsum('aij,bij->ab', fespaces.DEV_BASIS, fespaces.DEV_BASIS)
        assert np.allclose(gram, np.eye(8))

    def test_trace_free(self):
        assert np.allclose(np.einsum('aii->a', fespaces.DEV_BASIS), 0.0)


class TestLocalBases:
    def test_bdm1_dual(self, spaces):
        g = spaces.mesh.geometry
        points, weights, lam = facet_rule(g)
        values = evaluate_on_facets(spaces.V, points)
        moments = np.einsum('mfq,mfqbi,mfi,qk->mfkb', weights, values, g.outward_normals, lam)
        assert np.allclose(moments.reshape(-1, 12, 12), np.eye(12), atol=1e-12)

    def test_rt0_flux(self, spaces):
        g = spaces.mesh.geometry
        points, weights, _ = facet_rule(g, 1)
        values = evaluate_on_facets(spaces.W, points)
        flux = np.einsum('mfq,mfqbi,mfi->mfb', weights, values, g.outward_normals)
        assert np.allclose(flux, np.eye(4), atol=1e-12)
        assert np.allclose(spaces.W.divergence(), 1 / g.volumes[:, None])

    def test_rt0_normal_constant(self, spaces):
        g = spaces.mesh.geometry
        values = evaluate_on_facets(spaces.W, g.facet_vertices)
        normal = np.einsum('mfvbi,mfi->mfvb', values, g.outward_normals)
        assert np.allclose(normal, normal[:, :, :1], atol=1e-10)

    def test_sigma_dimension(self, spaces):
        assert spaces.dim_sigma == 16
        assert spaces.sigma.moments == []

    def test_sigma_dual(self, spaces):
        g = spaces.mesh.geometry
        functionals = fespaces.sigma_canonical_functionals(g, spaces.sigma.values, spaces.sigma.grads)
        assert np.allclose(functionals, np.eye(16), atol=1e-10)

    def test_sigma_trace_free(self, spaces):
        assert np.allclose(np.einsum('mbii->mb', spaces.sigma.values), 0.0, atol=1e-12)
        assert np.allclose(np.einsum('mbiil->mbl', spaces.sigma.grads), 0.0, atol=1e-10)

    def test_sigma_nt_constant(self, spaces):
        g = spaces.mesh.geometry
        values = evaluate_on_facets(spaces.sigma, g.facet_vertices)
        nt = np.einsum('mfki,mfvbij,mfj->mfvbk', g.facet_tangents, values, g.outward_normals)
        scale = np.abs(nt).max()
        assert np.abs(nt - nt[:, :, :1]).max() <= 1e-10 * scale

    def test_sigma_constraints_vanish(self, spaces):
        # The constraint rows annihilate the constant part; the basis gradients satisfy the rest.
        g = spaces.mesh.geometry
        n, t = g.outward_normals, g.facet_tangents
        rows = np.einsum('mfbi,mrijl,mfj,mfgl->mrfbg', t, spaces.sigma.grads, n, t)
        assert np.abs(rows).max() <= 1e-10 * np.abs(spaces.sigma.grads).max()

    def test_qh(self, spaces):
        assert spaces.Q.values.shape == (spaces.mesh.n_tets, 1)
        assert np.all(spaces.Q.grads == 0)

    def test_sym_grad_and_curl(self, spaces):
        g = spaces.V.gradient()
        assert np.allclose(spaces.V.sym_grad(), np.swapaxes(spaces.V.sym_grad(), -1, -2))
        assert np.allclose(spaces.V.divergence(), np.einsum('mbii->mb', g))
        # curl of the skew part carries everything the symmetric part drops
        skew = g - spaces.V.sym_grad()
        assert np.allclose(spaces.V.curl()[..., 2], 2 * skew[..., 1, 0])


class TestDofMaps:
    def test_counts(self, spaces):
        m = spaces.mesh
        nf = m.n_facets
        nd = len(m.facets_with_label(meshlib.DIRICHLET))
        assert spaces[SpaceTag.Vh].n_global == 3 * nf
        assert spaces[SpaceTag.Vh].n_free == 3 * (nf - nd)
        assert spaces[SpaceTag.Wh].n_global == nf
        assert spaces[SpaceTag.Wh].n_free == nf - nd
        assert spaces[SpaceTag.VhatH].n_global == 2 * (nf - nd)
        assert spaces[SpaceTag.VhatH].n_free == 2 * (nf - nd)
        assert spaces[SpaceTag.Qh].n_global == m.n_tets
        assert spaces[SpaceTag.SigmaH].n_global == 16 * m.n_tets

    def test_vh_dofs_cover_each_facet(self, spaces):
        dm = spaces[SpaceTag.Vh]
        dofs = dm.element_dofs.reshape(-1, 4, 3)
        assert np.all(dofs // 3 == spaces.mesh.tet_facets[:, :, None])
        assert np.all(np.sort(dofs % 3, axis=2) == [0, 1, 2])

    def test_vh_rank_matches_vertex(self, spaces):
        # Both tets of an interior facet put the same vertex on the same dof.
        m = spaces.mesh
        dofs = spaces[SpaceTag.Vh].element_dofs.reshape(-1, 4, 3)
        local_vertices = m.tets[:, meshlib.LOCAL_FACETS]
        for f in m.interior_facets()[:20]:
            seen = {}
            for t, i in m.adjacent(f):
                for k in range(3):
                    seen.setdefault(int(dofs[t, i, k]), set()).add(int(local_vertices[t, i, k]))
            assert all(len(v) == 1 for v in seen.values())

    def test_signs(self, spaces):
        m = spaces.mesh
        signs = spaces[SpaceTag.Wh].element_signs
        interior = m.interior_facets()
        t = m.facet_tets[interior]
        i = m.facet_local[interior]
        assert np.all(signs[t[:, 0], i[:, 0]] == 1)
        assert np.all(signs[t[:, 1], i[:, 1]] == -1)

    def test_vhat_dirichlet(self, spaces):
        m = spaces.mesh
        dofs = spaces[SpaceTag.VhatH].element_dofs.reshape(-1, 4, 2)
        dirichlet = m.facet_labels[m.tet_facets] == meshlib.DIRICHLET
        assert np.all(dofs[dirichlet] == -1)
        assert np.all(dofs[~dirichlet] >= 0)

    def test_dirichlet_masks(self, spaces):
        m = spaces.mesh
        dirichlet = m.facet_labels == meshlib.DIRICHLET
        assert np.array_equal(spaces[SpaceTag.Wh].dirichlet_mask, dirichlet)
        assert np.array_equal(spaces[SpaceTag.Vh].dirichlet_mask, np.repeat(dirichlet, 3))

    def test_bad_space(self, spaces):
        with pytest.raises(ValueError):
            fespaces.build_dofmap(spaces.mesh, 'Vh')

    def test_sigma_needs_dimension(self, spaces):
        with pytest.raises(ValueError):
            fespaces.build_dofmap(spaces.mesh, SpaceTag.SigmaH)


class TestSpaces:
    def test_without_sigma(self):
        s = fespaces.Spaces(meshlib.build_structured_cube(1), with_sigma=False)
        assert s.dim_sigma is None
        assert SpaceTag.SigmaH not in s.dofmaps

    def test_h(self):
        m = meshlib.build_structured_cube(1)
        s = fespaces.Spaces(m, 'global', with_sigma=False)
        assert np.allclose(s.facet_h(), m.h_max)
        assert np.allclose(fespaces.Spaces(m, with_sigma=False).facet_h(), m.h_facet)

    def test_reference_element(self):
        m = meshlib.Mesh(meshlib.REFERENCE_TET, [[0, 1, 2, 3]], neumann='all')
        s = fespaces.Spaces(m)
        assert s.dim_sigma == 16
        assert s[SpaceTag.VhatH].n_global == 8
