import numpy as np
import pytest

import mesh as meshlib


@pytest.fixture(scope='class')
def cube():
    return meshlib.build_structured_cube(2)


class TestStructuredCube:
    @pytest.mark.parametrize('n', [1, 2, 3])
    def test_counts(self, n):
        m = meshlib.build_structured_cube(n)
        assert m.n_tets == 6 * n**3
        assert m.n_vertices == (n + 1) ** 3
        assert m.n_facets == 12 * n**3 + 6 * n**2
        assert len(m.boundary_facets()) == 12 * n**2
        assert len(m.interior_facets()) == m.n_facets - 12 * n**2

    def test_volumes(self, cube):
        assert np.all(cube.geometry.volumes > 0)
        assert np.isclose(cube.geometry.volumes.sum(), 1.0)

    def test_diameter(self, cube):
        assert np.isclose(cube.h_max, np.sqrt(3) / 2)

    def test_labels(self, cube):
        neumann = cube.facets_with_label(meshlib.NEUMANN)
        assert len(neumann) == 8
        assert np.allclose(cube.facet_centroids[neumann, 0], 0.0)
        assert len(cube.facets_with_label(meshlib.DIRICHLET)) == 40

    def test_outward_normals(self, cube):
        g = cube.geometry
        d = g.facet_centroids - g.centroids[:, None, :]
        assert np.all(np.einsum('mfi,mfi->mf', g.outward_normals, d) > 0)

    def test_boundary_normals_point_out(self, cube):
        facets = cube.boundary_facets()
        d = cube.facet_centroids[facets] - 0.5
        assert np.all(np.einsum('fi,fi->f', cube.facet_normals[facets], d) > 0)

    def test_interior_normals_opposite(self, cube):
        g = cube.geometry
        facets = cube.interior_facets()
        t, i = cube.facet_tets[facets], cube.facet_local[facets]
        assert np.allclose(g.outward_normals[t[:, 0], i[:, 0]], -g.outward_normals[t[:, 1], i[:, 1]])
        assert np.all(t[:, 0] < t[:, 1])

    def test_owner_normal_is_stored(self, cube):
        t, i = cube.facet_tets[:, 0], cube.facet_local[:, 0]
        assert np.allclose(cube.geometry.outward_normals[t, i], cube.facet_normals)

    def test_facet_frames(self, cube):
        t = cube.facet_tangents
        n = cube.facet_normals
        assert np.allclose(np.einsum('fai,fbi->fab', t, t), np.eye(2))
        assert np.allclose(np.einsum('fai,fi->fa', t, n), 0.0)

    def test_adjacent(self, cube):
        f = cube.interior_facets()[0]
        assert len(cube.adjacent(f)) == 2
        assert len(cube.adjacent(cube.boundary_facets()[0])) == 1

    def test_h_modes(self, cube):
        assert np.allclose(cube.facet_h('global'), cube.h_max)
        assert np.allclose(cube.element_h('global'), cube.h_max)
        assert np.allclose(cube.element_h('per_facet'), cube.geometry.diameters)
        assert np.all(cube.facet_h('per_facet') <= cube.h_max)

    @pytest.mark.parametrize('n', [1, 2, 3])
    def test_element_size(self, n):
        m = meshlib.build_structured_cube(n)
        assert np.allclose(m.element_h('element'), 1 / n)
        assert np.allclose(m.facet_h('element'), 1 / n)
        assert m.facet_h('element').shape == (m.n_facets,)

    def test_facet_size_is_larger_neighbour(self):
        # Two tets of different volume glued along z = 0.
        vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -8]]
        m = meshlib.Mesh(vertices, [[0, 1, 2, 3], [0, 1, 2, 4]])
        assert np.allclose(m.element_h('element'), [1, 2])
        shared = m.interior_facets()
        assert np.allclose(m.facet_h('element')[shared], 2)

    @pytest.mark.parametrize('face', ['x=1', 'y=0', 'z=1'])
    def test_other_faces(self, face):
        m = meshlib.build_structured_cube(1, face)
        axis, value = meshlib.config.CUBE_FACES[face]
        neumann = m.facets_with_label(meshlib.NEUMANN)
        assert len(neumann) == 2
        assert np.allclose(m.facet_centroids[neumann, axis], value)

    def test_all_neumann(self):
        m = meshlib.build_structured_cube(1, 'all')
        assert len(m.facets_with_label(meshlib.NEUMANN)) == 12
        assert len(m.facets_with_label(meshlib.DIRICHLET)) == 0

    def test_pure_dirichlet(self):
        m = meshlib.build_structured_cube(1, None)
        assert len(m.facets_with_label(meshlib.DIRICHLET)) == 12


class TestMeshErrors:
    @pytest.mark.parametrize('n', [0, -1, True, 1.5])
    def test_bad_level(self, n):
        with pytest.raises(ValueError):
            meshlib.build_structured_cube(n)

    def test_bad_face(self):
        with pytest.raises(ValueError):
            meshlib.build_structured_cube(1, 'w=0')

    def test_flat_element(self):
        vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
        with pytest.raises(meshlib.MeshError):
            meshlib.Mesh(vertices, [[0, 1, 2, 3]])

    def test_missing_vertex(self):
        with pytest.raises(meshlib.MeshError):
            meshlib.Mesh(meshlib.REFERENCE_TET, [[0, 1, 2, 4]])

    def test_three_tets_on_a_facet(self):
        vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1], [0.1, 0.1, 2]]
        with pytest.raises(meshlib.MeshError):
            meshlib.Mesh(vertices, [[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])

    def test_unknown_selector(self):
        with pytest.raises(meshlib.MeshError):
            meshlib.Mesh(meshlib.REFERENCE_TET, [[0, 1, 2, 3]], neumann='some')

    def test_reorientation(self):
        m = meshlib.Mesh(meshlib.REFERENCE_TET, [[0, 1, 3, 2]])
        assert m.geometry.dets[0] > 0
        assert np.isclose(m.geometry.volumes[0], 1 / 6)


class TestAsciiMesh:
    def test_read(self, tmp_path):
        path = tmp_path / 'tet.mesh'
        path.write_text('4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n2 1 0 N\n')
        m = meshlib.read_ascii_mesh(path)
        neumann = m.facets_with_label(meshlib.NEUMANN)
        assert neumann.tolist() == [0]
        assert m.facets[0].tolist() == [0, 1, 2]
        assert len(m.facets_with_label(meshlib.DIRICHLET)) == 3

    @pytest.mark.parametrize(
        'text',
        [
            '4 1\n0 0 0\n',
            '4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n0 1 2 X\n',
            'four one\n',
            '4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n0 1 N\n',
        ],
    )
    def test_malformed(self, tmp_path, text):
        path = tmp_path / 'bad.mesh'
        path.write_text(text)
        with pytest.raises(meshlib.MeshError):
            meshlib.read_ascii_mesh(path)
