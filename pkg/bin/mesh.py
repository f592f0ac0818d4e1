"""Conforming tetrahedral meshes of the unit cube.

Facets are numbered by their sorted vertex triples. Every facet stores one
unit normal: for an interior facet it points from the lower-index adjacent tet
to the higher-index one, for a boundary facet it points outward. Boundary
facets are labelled Dirichlet or Neumann.
"""

import itertools
from pathlib import Path

import numpy as np

import config

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2
LABEL_NAMES = {INTERIOR: 'Interior', DIRICHLET: 'DirichletBoundary', NEUMANN: 'NeumannBoundary'}

# Local facet i of a tet is the triangle opposite local vertex i.
LOCAL_FACETS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
EDGES = np.array(list(itertools.combinations(range(4), 2)))

REFERENCE_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


class MeshError(Exception):
    pass


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _tangents(normals, first_edges):
    t1 = _unit(first_edges)
    t2 = np.cross(normals, t1)
    return np.stack([t1, t2], axis=-2)


class ElementGeometry:
    """Geometric data of a batch of positively oriented tetrahedra.

    `vertices` has shape (m, 4, 3). Facet data is indexed (m, 4, ...) by local
    facet. Normals point outward unless the mesh passes in its own frames, in
    which case tangents follow the global facet frame.
    """

    def __init__(self, vertices, *, normals=None, tangents=None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim == 2:
            v = v[None]
        self.vertices = v
        self.n_elements = v.shape[0]

        self.jacobians = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)
        self.dets = np.linalg.det(self.jacobians)
        edge_lengths = np.linalg.norm(v[:, EDGES[:, 1]] - v[:, EDGES[:, 0]], axis=2)
        self.diameters = edge_lengths.max(axis=1)
        if np.any(self.dets <= 1e-13 * self.diameters**3):
            bad = int(np.argmin(self.dets / self.diameters**3))
            raise MeshError(f'degenerate or negatively oriented element {bad} (det {self.dets[bad]:g})')
        self.inverse_jacobians = np.linalg.inv(self.jacobians)
        self.volumes = self.dets / 6
        self.centroids = v.mean(axis=1)

        fv = v[:, LOCAL_FACETS]
        self.facet_vertices = fv
        self.facet_centroids = fv.mean(axis=2)
        cross = np.cross(fv[:, :, 1] - fv[:, :, 0], fv[:, :, 2] - fv[:, :, 0])
        norms = np.linalg.norm(cross, axis=2)
        self.facet_areas = norms / 2
        self.facet_diameters = np.stack(
            [
                np.linalg.norm(fv[:, :, 1] - fv[:, :, 0], axis=2),
                np.linalg.norm(fv[:, :, 2] - fv[:, :, 0], axis=2),
                np.linalg.norm(fv[:, :, 2] - fv[:, :, 1], axis=2),
            ],
            axis=2,
        ).max(axis=2)

        outward = cross / norms[..., None]
        # The opposite vertex lies on the inner side.
        side = np.einsum('mfi,mfi->mf', outward, v - fv[:, :, 0])
        outward = np.where(side[..., None] > 0, -outward, outward)
        self.outward_normals = outward if normals is None else np.asarray(normals, dtype=float)
        if tangents is None:
            tangents = _tangents(outward, fv[:, :, 1] - fv[:, :, 0])
        self.facet_tangents = np.asarray(tangents, dtype=float)

    def subset(self, elements):
        g = object.__new__(ElementGeometry)
        for key, value in vars(self).items():
            setattr(g, key, value[elements] if isinstance(value, np.ndarray) else value)
        g.n_elements = len(g.vertices)
        return g


class Mesh:
    """Tetrahedral mesh with oriented facets and boundary labels.

    `neumann` selects the Neumann boundary facets: None (none), 'all', a callable
    mapping an (k, 3) array of boundary facet centroids to a boolean mask, or a
    collection of vertex triples.
    """

    def __init__(self, vertices, tets, neumann=None):
        vertices = np.asarray(vertices, dtype=float)
        tets = np.array(tets, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError('vertices must be an (nv, 3) array')
        if tets.ndim != 2 or tets.shape[1] != 4 or len(tets) == 0:
            raise MeshError('tets must be a nonempty (nt, 4) array')
        if tets.min() < 0 or tets.max() >= len(vertices):
            raise MeshError('tet refers to a nonexistent vertex')

        # Fix the orientation: swap the last two vertices of inverted tets.
        v = vertices[tets]
        dets = np.linalg.det(np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], 2))
        flip = dets < 0
        tets[flip] = tets[flip][:, [0, 1, 3, 2]]

        self.vertices = vertices
        self.tets = tets
        nt = len(tets)

        keys = np.sort(tets[:, LOCAL_FACETS], axis=2).reshape(-1, 3)
        self.facets, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        nf = len(self.facets)
        self.tet_facets = inverse.reshape(nt, 4)
        counts = np.bincount(inverse, minlength=nf)
        if counts.max() > 2:
            raise MeshError(f'facet {int(np.argmax(counts))} is shared by more than two tets')

        flat = np.arange(4 * nt)
        order = np.lexsort((flat, inverse))
        sorted_facets = inverse[order]
        first = np.r_[True, sorted_facets[1:] != sorted_facets[:-1]]
        self.facet_tets = np.full((nf, 2), -1, dtype=np.int64)
        self.facet_local = np.full((nf, 2), -1, dtype=np.int64)
        self.facet_tets[:, 0] = order[first] // 4
        self.facet_local[:, 0] = order[first] % 4
        second = order[~first]
        self.facet_tets[sorted_facets[~first], 1] = second // 4
        self.facet_local[sorted_facets[~first], 1] = second % 4

        # +1 where the tet is the owner of the facet (stored normal is outward).
        self.tet_facet_signs = np.where(
            self.facet_tets[self.tet_facets, 0] == np.arange(nt)[:, None], 1.0, -1.0
        )

        owner = ElementGeometry(vertices[tets])
        fv = vertices[self.facets]
        self.facet_normals = owner.outward_normals[self.facet_tets[:, 0], self.facet_local[:, 0]]
        self.facet_tangents = _tangents(self.facet_normals, fv[:, 1] - fv[:, 0])
        self.facet_centroids = fv.mean(axis=1)
        self.facet_areas = np.linalg.norm(np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0]), axis=1) / 2
        self.h_facet = owner.facet_diameters[self.facet_tets[:, 0], self.facet_local[:, 0]]

        self.geometry = ElementGeometry(
            vertices[tets],
            normals=self.tet_facet_signs[..., None] * self.facet_normals[self.tet_facets],
            tangents=self.facet_tangents[self.tet_facets],
        )
        self.h_max = float(self.geometry.diameters.max())
        # |det J|^(1/3) of the affine map from the unit tet; 1/n on the structured cube.
        self.element_size = np.cbrt(self.geometry.dets)

        self.facet_labels = np.full(nf, INTERIOR, dtype=np.int64)
        boundary = self.facet_tets[:, 1] < 0
        self.facet_labels[boundary] = DIRICHLET
        self.facet_labels[np.flatnonzero(boundary)[self._neumann_mask(neumann, boundary)]] = NEUMANN

    def _neumann_mask(self, neumann, boundary):
        nb = int(boundary.sum())
        if neumann is None:
            return np.zeros(nb, dtype=bool)
        if isinstance(neumann, str):
            if neumann == 'all':
                return np.ones(nb, dtype=bool)
            raise MeshError(f'unknown Neumann selector {neumann!r}')
        if callable(neumann):
            return np.asarray(neumann(self.facet_centroids[boundary]), dtype=bool)
        wanted = {tuple(sorted(int(i) for i in triple)) for triple in neumann}
        return np.array([tuple(f) in wanted for f in self.facets[boundary].tolist()], dtype=bool)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def boundary_facets(self):
        return np.flatnonzero(self.facet_labels != INTERIOR)

    def interior_facets(self):
        return np.flatnonzero(self.facet_labels == INTERIOR)

    def facets_with_label(self, label):
        return np.flatnonzero(self.facet_labels == label)

    def adjacent(self, f):
        return [
            (int(t), int(i))
            for t, i in zip(self.facet_tets[f], self.facet_local[f])
            if t >= 0
        ]

    def facet_h(self, h_mode):
        if h_mode == 'global':
            return np.full(self.n_facets, self.h_max)
        if h_mode == 'element':
            sizes = self.element_size[self.facet_tets]
            return np.where(self.facet_tets >= 0, sizes, 0.0).max(axis=1)
        return self.h_facet

    def element_h(self, h_mode):
        if h_mode == 'global':
            return np.full(self.n_tets, self.h_max)
        if h_mode == 'element':
            return self.element_size
        return self.geometry.diameters


def face_selector(face):
    if face is None or face == 'all':
        return face
    if face not in config.CUBE_FACES:
        raise ValueError(f'unknown cube face {face!r}, expected one of {", ".join(config.CUBE_FACES)}')
    axis, value = config.CUBE_FACES[face]
    return lambda centroids: np.abs(centroids[:, axis] - value) < 1e-12


def build_structured_cube(n, neumann_face=config.DEFAULT_NEUMANN_FACE):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f'the cube needs n >= 1 cells per direction, got {n!r}')
    n = int(n)
    ar = np.arange(n + 1)
    K, J, I = np.meshgrid(ar, ar, ar, indexing='ij')
    vertices = np.column_stack([I.ravel(), J.ravel(), K.ravel()]) / n

    cells = np.arange(n)
    K0, J0, I0 = np.meshgrid(cells, cells, cells, indexing='ij')
    origin = (I0 + (n + 1) * (J0 + (n + 1) * K0)).ravel()
    stride = [1, n + 1, (n + 1) ** 2]
    # Kuhn triangulation: one tet per monotone path along the cube diagonal.
    tets = []
    for perm in itertools.permutations(range(3)):
        v1 = origin + stride[perm[0]]
        v2 = v1 + stride[perm[1]]
        v3 = v2 + stride[perm[2]]
        tets.append(np.column_stack([origin, v1, v2, v3]))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return Mesh(vertices, tets, neumann=face_selector(neumann_face))


def element_geometry(mesh, t):
    g = mesh.geometry
    return g.jacobians[t], float(g.volumes[t]), float(g.diameters[t])


def facet_frame(mesh, f):
    return (
        mesh.facet_normals[f],
        mesh.facet_tangents[f],
        float(mesh.facet_areas[f]),
        mesh.facet_centroids[f],
    )


LABEL_ALIASES = {'d': DIRICHLET, 'dirichlet': DIRICHLET, 'n': NEUMANN, 'neumann': NEUMANN}


# Format: "nv nt", nv lines "x y z", nt lines "v0 v1 v2 v3", then optional
# boundary lines "a b c label" with label D/N.
def read_ascii_mesh(path):
    path = Path(path)
    tokens = [line.split() for line in path.read_text().splitlines() if line.strip()]
    try:
        nv, nt = (int(x) for x in tokens[0])
        vertices = np.array([[float(x) for x in row] for row in tokens[1 : 1 + nv]])
        tets = np.array([[int(x) for x in row] for row in tokens[1 + nv : 1 + nv + nt]])
        labels = {}
        for row in tokens[1 + nv + nt :]:
            *triple, label = row
            if len(triple) != 3:
                raise ValueError(f'bad boundary line {" ".join(row)!r}')
            labels[tuple(sorted(int(x) for x in triple))] = LABEL_ALIASES[label.lower()]
    except (ValueError, KeyError, IndexError) as e:
        raise MeshError(f'{path}: malformed mesh file ({e})') from e
    if vertices.shape != (nv, 3) or tets.shape != (nt, 4):
        raise MeshError(f'{path}: expected {nv} vertices and {nt} tets')
    return Mesh(vertices, tets, neumann=[k for k, v in labels.items() if v == NEUMANN])
