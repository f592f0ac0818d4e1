"""The discrete spaces of the velocity-vorticity schemes.

    Vh      BDM1 velocities, 3 normal moments per facet
    VhatH   tangential facet constants, 2 per facet off the Dirichlet boundary
    Wh      RT0 vorticities, 1 normal flux per facet
    SigmaH  element-local deviatoric P1 stresses with facet-constant nt-trace
    Qh      piecewise constant pressures

All element bases are affine. A basis function is stored by its value at the
element centroid and its constant gradient, so evaluation at any point is
`value + grad . (x - centroid)`. Orientation signs live in the DofMap.
"""

import enum
import functools

import numpy as np

import config
import mesh as meshlib
import quadrature


class SpaceTag(enum.Enum):
    Vh = 'Vh'
    VhatH = 'VhatH'
    Wh = 'Wh'
    SigmaH = 'SigmaH'
    Qh = 'Qh'


class BasisError(Exception):
    pass


def _deviatoric_basis():
    mats = []
    for i in range(3):
        for j in range(3):
            if i != j:
                e = np.zeros((3, 3))
                e[i, j] = 1
                mats.append(e)
    mats.append(np.diag([1.0, -1.0, 0.0]) / np.sqrt(2))
    mats.append(np.diag([1.0, 1.0, -2.0]) / np.sqrt(6))
    out = np.array(mats)
    out.setflags(write=False)
    return out


# Orthonormal basis of the trace-free 3x3 matrices (Frobenius product).
DEV_BASIS = _deviatoric_basis()

N_SIGMA_CANONICAL = 16


class ElementBasis:
    """Affine basis functions on a batch of elements.

    `values` has shape (m, nb, *shape) and `grads` (m, nb, *shape, 3), where
    the trailing axis is the derivative direction.
    """

    def __init__(self, space, centroids, values, grads):
        self.space = space
        self.centroids = centroids
        self.values = values
        self.grads = grads

    @property
    def n_elements(self):
        return self.values.shape[0]

    @property
    def n_basis(self):
        return self.values.shape[1]

    def evaluate(self, points):
        """Values at physical points of shape (m, q, 3); result (m, q, nb, *shape)."""
        d = np.asarray(points) - self.centroids[:, None, :]
        return self.values[:, None] + np.einsum('mb...l,mql->mqb...', self.grads, d)

    def gradient(self):
        return self.grads

    def divergence(self):
        """Constant divergence per basis function; row-wise for matrix fields."""
        return np.einsum('mb...jj->mb...', self.grads)

    def curl(self):
        g = self.grads
        return np.stack(
            [
                g[..., 2, 1] - g[..., 1, 2],
                g[..., 0, 2] - g[..., 2, 0],
                g[..., 1, 0] - g[..., 0, 1],
            ],
            axis=-1,
        )

    def sym_grad(self):
        g = self.grads
        return (g + np.swapaxes(g, -1, -2)) / 2

    def subset(self, elements):
        return ElementBasis(
            self.space, self.centroids[elements], self.values[elements], self.grads[elements]
        )


def _reference_barycentric(points):
    p = np.asarray(points)
    return np.column_stack([1 - p.sum(axis=1), p[:, 0], p[:, 1], p[:, 2]])


@functools.lru_cache(maxsize=None)
def _reference_dual(space):
    """Reference basis as (A, B) with v(x) = A + B x, dual to the facet functionals."""
    geom = meshlib.ElementGeometry(meshlib.REFERENCE_TET)
    rule = quadrature.rule_for(2, 2)
    if space == SpaceTag.Vh:
        rows = []
        for i in range(4):
            pts, w = quadrature.map_facet_rule(geom.facet_vertices[0, i], rule)
            n = geom.outward_normals[0, i]
            lam = _reference_barycentric(pts)
            for j in meshlib.LOCAL_FACETS[i]:
                wl = w * lam[:, j]
                # Primal functions: e_c, then x_d e_c at column 3 + 3c + d.
                rows.append(np.r_[n * wl.sum(), np.outer(n, wl @ pts).ravel()])
        M = np.array(rows)
        C = np.linalg.inv(M)
        A = C[:3].T
        B = C[3:].T.reshape(12, 3, 3)
    else:
        rows = []
        for i in range(4):
            pts, w = quadrature.map_facet_rule(geom.facet_vertices[0, i], rule)
            n = geom.outward_normals[0, i]
            rows.append(np.r_[n * w.sum(), (w * (pts @ n)).sum()])
        C = np.linalg.inv(np.array(rows))
        A = C[:3].T
        B = C[3][:, None, None] * np.eye(3)
    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def _piola(space, geometry):
    A, B = _reference_dual(space)
    J = geometry.jacobians
    det = geometry.dets[:, None, None]
    ref_centroid = np.full(3, 0.25)
    values = np.einsum('mij,bj->mbi', J, A + B @ ref_centroid) / det
    grads = np.einsum('mij,bjk,mkl->mbil', J, B, geometry.inverse_jacobians) / det[..., None]
    return ElementBasis(space, geometry.centroids, values, grads)


def bdm1_local_basis(geometry):
    """12 BDM1 functions per element; function 3i + k is dual to the normal moment on local
    facet i against the barycentric coordinate of its k-th vertex."""
    return _piola(SpaceTag.Vh, geometry)


def rt0_local_basis(geometry):
    """4 RT0 functions per element; function i carries unit outward flux through local facet i."""
    return _piola(SpaceTag.Wh, geometry)


def _sigma_raw(geometry):
    # 8 constants D_a, then D_a (x - x_T)_l / h_T at index 8 + 3a + l.
    m = geometry.n_elements
    h = geometry.diameters
    values = np.zeros((m, 32, 3, 3))
    values[:, :8] = DEV_BASIS
    grads = np.zeros((m, 32, 3, 3, 3))
    for a in range(8):
        for l in range(3):
            grads[:, 8 + 3 * a + l, :, :, l] = DEV_BASIS[a] / h[:, None, None]
    return values, grads


def sigma_constraints(geometry):
    """Rows t_b . (d tau / d t_g) n on every facet; tau has a facet-constant nt-trace
    exactly when all 16 rows vanish. Shape (m, 16, 32) over the raw functions."""
    n = geometry.outward_normals
    t = geometry.facet_tangents
    h = geometry.diameters
    tdn = np.einsum('mfbi,aij,mfj->mfba', t, DEV_BASIS, n)
    rows = np.einsum('mfba,mfgl->mfbgal', tdn, t) / h[:, None, None, None, None, None]
    m = geometry.n_elements
    return np.concatenate([np.zeros((m, 16, 8)), rows.reshape(m, 16, 24)], axis=2)


def sigma_canonical_functionals(geometry, values, grads):
    """Facet averages of t_b . tau n (8) and element averages of tau : D_a (8)."""
    d = geometry.facet_centroids - geometry.centroids[:, None, :]
    at_facets = values[:, :, None] + np.einsum('mr...l,mfl->mrf...', grads, d)
    facet = np.einsum(
        'mfbi,mrfij,mfj->mfbr', geometry.facet_tangents, at_facets, geometry.outward_normals
    )
    m, nr = values.shape[:2]
    element = np.einsum('mrij,aij->mar', values, DEV_BASIS)
    return np.concatenate([facet.reshape(m, 8, nr), element], axis=1)


def sigma_moment_functionals(geometry, grads, moments):
    """First order moments |T|^-1 h^-1 int tau : D_a (x - x_T)_l for the given (a, l) pairs."""
    v = geometry.vertices - geometry.centroids[:, None, :]
    second = np.einsum('mvi,mvj->mij', v, v) / 20
    h = geometry.diameters
    rows = [
        np.einsum('mrijk,ij,mk->mr', grads, DEV_BASIS[a], second[:, :, l]) / h[:, None]
        for a, l in moments
    ]
    return np.stack(rows, axis=1) if rows else np.zeros((geometry.n_elements, 0, grads.shape[1]))


def sigma_local_basis(geometry, *, rank_tol=1e-10):
    """Basis of {tau in P1(T, D) : tau_nt constant on each facet}, dual to the canonical
    functionals, built per element as the nullspace of the nt-trace constraints."""
    raw_values, raw_grads = _sigma_raw(geometry)
    constraints = sigma_constraints(geometry)
    _, s, vt = np.linalg.svd(constraints)
    ranks = (s > rank_tol * s[:, :1]).sum(axis=1)
    if np.any(ranks != ranks[0]):
        raise BasisError(f'nt-trace constraint rank varies over elements: {sorted(set(ranks))}')
    dim = 32 - int(ranks[0])
    null = vt[:, 32 - dim :, :]

    functionals = sigma_canonical_functionals(geometry, raw_values, raw_grads)
    if dim < N_SIGMA_CANONICAL:
        raise BasisError(f'stress space of dimension {dim} cannot carry the 16 canonical moments')
    moments = []
    if dim > N_SIGMA_CANONICAL:
        # Complete with first order moments, greedily on the first element.
        candidates = [(a, l) for a in range(8) for l in range(3)]
        for c in candidates:
            trial = moments + [c]
            extra = sigma_moment_functionals(geometry.subset([0]), raw_grads[:1], trial)
            mat = np.concatenate([functionals[:1], extra], axis=1) @ np.swapaxes(null[:1], 1, 2)
            if np.linalg.matrix_rank(mat[0], tol=rank_tol) == mat.shape[1]:
                moments = trial
            if N_SIGMA_CANONICAL + len(moments) == dim:
                break
        extra = sigma_moment_functionals(geometry, raw_grads, moments)
        functionals = np.concatenate([functionals, extra], axis=1)
    if functionals.shape[1] != dim:
        raise BasisError(f'could not complete the stress functionals to dimension {dim}')

    gram = functionals @ np.swapaxes(null, 1, 2)
    conds = np.linalg.cond(gram)
    if not np.all(np.isfinite(conds)) or conds.max() > 1e12:
        raise BasisError(f'singular stress interpolation matrix (condition {conds.max():g})')
    coeffs = np.swapaxes(np.linalg.inv(gram), 1, 2) @ null
    values = np.einsum('mjr,mrik->mjik', coeffs, raw_values)
    grads = np.einsum('mjr,mrikl->mjikl', coeffs, raw_grads)
    basis = ElementBasis(SpaceTag.SigmaH, geometry.centroids, values, grads)
    basis.moments = moments
    return basis


def vhat_local_basis(tangents):
    """The two facet tangents of each facet frame, shape (..., 2, 3)."""
    return np.asarray(tangents, dtype=float)


def qh_local_basis(geometry):
    m = geometry.n_elements
    return ElementBasis(SpaceTag.Qh, geometry.centroids, np.ones((m, 1)), np.zeros((m, 1, 3)))


class DofMap:
    """Global numbering of one space. `element_dofs[t]` lists the global dof of each local
    basis function of tet t (-1 where none exists) and `element_signs[t]` its orientation."""

    def __init__(self, space, n_global, element_dofs, element_signs, dirichlet_mask):
        self.space = space
        self.n_global = int(n_global)
        self.element_dofs = element_dofs
        self.element_signs = element_signs
        self.dirichlet_mask = dirichlet_mask

    @property
    def free_dofs(self):
        return np.flatnonzero(~self.dirichlet_mask)

    @property
    def n_free(self):
        return int((~self.dirichlet_mask).sum())

    def __repr__(self):
        return f'DofMap({self.space.value}, n_global={self.n_global}, n_free={self.n_free})'


def _vh_ranks(mesh):
    facet_triples = mesh.facets[mesh.tet_facets]
    local_vertices = mesh.tets[:, meshlib.LOCAL_FACETS]
    return np.argmax(local_vertices[..., :, None] == facet_triples[..., None, :], axis=-1)


def build_dofmap(mesh, space, dim_sigma=None):
    if not isinstance(space, SpaceTag):
        raise ValueError(f'unknown space {space!r}')
    nt, nf = mesh.n_tets, mesh.n_facets
    dirichlet_facets = mesh.facet_labels == meshlib.DIRICHLET
    if space == SpaceTag.Vh:
        dofs = (3 * mesh.tet_facets[:, :, None] + _vh_ranks(mesh)).reshape(nt, 12)
        signs = np.repeat(mesh.tet_facet_signs, 3, axis=1)
        return DofMap(space, 3 * nf, dofs, signs, np.repeat(dirichlet_facets, 3))
    if space == SpaceTag.Wh:
        return DofMap(space, nf, mesh.tet_facets.copy(), mesh.tet_facet_signs.copy(), dirichlet_facets)
    if space == SpaceTag.VhatH:
        index = np.full(nf, -1, dtype=np.int64)
        kept = np.flatnonzero(~dirichlet_facets)
        index[kept] = np.arange(len(kept))
        per_tet = index[mesh.tet_facets]
        dofs = np.stack([2 * per_tet, 2 * per_tet + 1], axis=2)
        dofs[per_tet < 0] = -1
        n_global = 2 * len(kept)
        return DofMap(
            space, n_global, dofs.reshape(nt, 8), np.ones((nt, 8)), np.zeros(n_global, dtype=bool)
        )
    if space == SpaceTag.SigmaH:
        if dim_sigma is None:
            raise ValueError('the stress dofmap needs the local dimension')
        dofs = np.arange(nt * dim_sigma).reshape(nt, dim_sigma)
        n_global = nt * dim_sigma
        return DofMap(
            space, n_global, dofs, np.ones((nt, dim_sigma)), np.zeros(n_global, dtype=bool)
        )
    dofs = np.arange(nt)[:, None]
    return DofMap(space, nt, dofs, np.ones((nt, 1)), np.zeros(nt, dtype=bool))


class Spaces:
    """All dofmaps and element bases of one mesh."""

    def __init__(self, mesh, h_mode=config.DEFAULT_H_MODE, *, with_sigma=True):
        self.mesh = mesh
        self.h_mode = h_mode
        geometry = mesh.geometry
        self.V = bdm1_local_basis(geometry)
        self.W = rt0_local_basis(geometry)
        self.Q = qh_local_basis(geometry)
        self.vhat = vhat_local_basis(mesh.facet_tangents)
        self.sigma = sigma_local_basis(geometry) if with_sigma else None
        self.dofmaps = {
            SpaceTag.Vh: build_dofmap(mesh, SpaceTag.Vh),
            SpaceTag.VhatH: build_dofmap(mesh, SpaceTag.VhatH),
            SpaceTag.Wh: build_dofmap(mesh, SpaceTag.Wh),
            SpaceTag.Qh: build_dofmap(mesh, SpaceTag.Qh),
        }
        if with_sigma:
            self.dofmaps[SpaceTag.SigmaH] = build_dofmap(
                mesh, SpaceTag.SigmaH, dim_sigma=self.sigma.n_basis
            )

    def __getitem__(self, space):
        return self.dofmaps[space]

    @property
    def dim_sigma(self):
        return None if self.sigma is None else self.sigma.n_basis

    def element_h(self):
        return self.mesh.element_h(self.h_mode)

    def facet_h(self):
        return self.mesh.facet_h(self.h_mode)
