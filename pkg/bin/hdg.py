"""Velocity-vorticity HDG discretization.

Unknowns per element, in local order: 12 BDM1 velocity functions, 2 tangential
facet values on each of the 4 facets, 4 RT0 vorticity functions. All discrete
functions are affine, so every facet integral of the bilinear form reduces to
an area times a centroid value.
"""

import attr
import numpy as np
import scipy.sparse

import config
import interp
import mesh as meshlib
import polycalc
import quadrature
import sparsela
import util
from fespaces import SpaceTag

N_LOCAL = 24
LOCAL_V = slice(0, 12)
LOCAL_VHAT = slice(12, 20)
LOCAL_W = slice(20, 24)


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError(f'{attribute.name} must be positive, got {value}')


def _h_mode(instance, attribute, value):
    if value not in config.H_MODES:
        raise ValueError(f'unknown h_mode {value!r}, expected one of {", ".join(config.H_MODES)}')


@attr.s(frozen=True)
class HdgParams:
    alpha = attr.ib(default=config.DEFAULT_ALPHA, converter=float, validator=_positive)
    nu = attr.ib(default=config.DEFAULT_NU, converter=float, validator=_positive)
    h_mode = attr.ib(default=config.DEFAULT_H_MODE, validator=_h_mode)


@attr.s
class Solution:
    u = attr.ib()
    uhat = attr.ib()
    omega = attr.ib()
    p = attr.ib()
    stats = attr.ib(default=None)
    sigma = attr.ib(default=None)

    def kinematic(self):
        return np.concatenate([self.u.coefficients, self.uhat.coefficients, self.omega.coefficients])


class KinematicLayout:
    """Numbering of (u, uhat, omega): full vectors stack the three spaces, the reduced vector
    keeps the non-Dirichlet dofs in the order [u_free | uhat | omega_free]."""

    def __init__(self, spaces):
        self.spaces = spaces
        dv, dh, dw = spaces[SpaceTag.Vh], spaces[SpaceTag.VhatH], spaces[SpaceTag.Wh]
        self.offsets = (0, dv.n_global, dv.n_global + dh.n_global)
        self.n_full = dv.n_global + dh.n_global + dw.n_global
        mask = np.concatenate([dv.dirichlet_mask, dh.dirichlet_mask, dw.dirichlet_mask])
        self.free = np.flatnonzero(~mask)
        self.n_free = len(self.free)
        self.reduced_index = np.full(self.n_full, -1, dtype=np.int64)
        self.reduced_index[self.free] = np.arange(self.n_free)

        parts = [
            (dv, self.offsets[0]),
            (dh, self.offsets[1]),
            (dw, self.offsets[2]),
        ]
        dofs = np.concatenate(
            [np.where(dm.element_dofs >= 0, dm.element_dofs + off, -1) for dm, off in parts], axis=1
        )
        self.element_signs = np.concatenate([dm.element_signs for dm, _ in parts], axis=1)
        self.element_dofs = np.where(dofs >= 0, self.reduced_index[np.maximum(dofs, 0)], -1)

    def reduce(self, full):
        return np.asarray(full)[self.free]

    def expand(self, reduced):
        full = np.zeros(self.n_full)
        full[self.free] = reduced
        return full

    def split(self, full):
        _, b, c = self.offsets
        return full[:b], full[b:c], full[c:]

    def fields(self, reduced):
        u, uhat, omega = self.split(self.expand(reduced))
        return (
            interp.DiscreteField(self.spaces, SpaceTag.Vh, u),
            interp.DiscreteField(self.spaces, SpaceTag.VhatH, uhat),
            interp.DiscreteField(self.spaces, SpaceTag.Wh, omega),
        )

    def pack(self, u, uhat, omega):
        return self.reduce(np.concatenate([u.coefficients, uhat.coefficients, omega.coefficients]))


class LocalOperators:
    """Per element and local facet, the affine data the kinematic forms are built from, each
    as a linear map on the 24 local unknowns:

        strain     eps(v) on the element                      (m, 3, 3, 24)
        jump       (vhat - v)_t at the facet centroid         (m, 4, 3, 24)
        flux       eps(v) n projected on the facet plane      (m, 4, 3, 24)
        curl_jump  (curl v - eta) . n at the facet centroid   (m, 4, 24)
        div        div v                                      (m, 24)
    """

    def __init__(self, spaces):
        g = spaces.mesh.geometry
        V, W = spaces.V, spaces.W
        m = g.n_elements
        n = g.outward_normals
        self.volumes = g.volumes
        self.areas = g.facet_areas
        proj = np.eye(3) - np.einsum('mfi,mfj->mfij', n, n)
        d = g.facet_centroids - g.centroids[:, None, :]
        v_facet = V.values[:, None] + np.einsum('mbil,mfl->mfbi', V.grads, d)
        w_facet = W.values[:, None] + np.einsum('mbil,mfl->mfbi', W.grads, d)
        eps = V.sym_grad()

        self.strain = np.zeros((m, 3, 3, N_LOCAL))
        self.strain[..., LOCAL_V] = np.moveaxis(eps, 1, -1)

        self.jump = np.zeros((m, 4, 3, N_LOCAL))
        self.jump[..., LOCAL_V] = -np.einsum('mfij,mfbj->mfib', proj, v_facet)
        for i in range(4):
            self.jump[:, i, :, 12 + 2 * i : 14 + 2 * i] = np.swapaxes(g.facet_tangents[:, i], 1, 2)

        self.flux = np.zeros((m, 4, 3, N_LOCAL))
        self.flux[..., LOCAL_V] = np.einsum('mfij,mbjk,mfk->mfib', proj, eps, n)

        self.curl_jump = np.zeros((m, 4, N_LOCAL))
        self.curl_jump[..., LOCAL_V] = np.einsum('mbi,mfi->mfb', V.curl(), n)
        self.curl_jump[..., LOCAL_W] = -np.einsum('mfbi,mfi->mfb', w_facet, n)

        self.div = np.zeros((m, N_LOCAL))
        self.div[:, LOCAL_V] = V.divergence()


def facet_h_per_element(spaces):
    """h on the four facets of every element, (m, 4); the element size itself in 'element' mode."""
    if spaces.h_mode == 'element':
        return np.repeat(spaces.element_h()[:, None], 4, axis=1)
    return spaces.facet_h()[spaces.mesh.tet_facets]


def hdg_element_matrices(ops, alpha, h_facets):
    """a^hdg per element on the local unknowns, without the viscosity."""
    a = ops.areas
    ke = ops.volumes[:, None, None] * np.einsum('mijk,mijl->mkl', ops.strain, ops.strain)
    coupling = np.einsum('mf,mfik,mfil->mkl', a, ops.jump, ops.flux)
    ke += coupling + np.swapaxes(coupling, 1, 2)
    ke += np.einsum('mf,mfik,mfil->mkl', a * alpha / h_facets, ops.jump, ops.jump)
    ke += np.einsum('mf,mfk,mfl->mkl', a * h_facets, ops.curl_jump, ops.curl_jump)
    return ke


def scatter_matrix(element_matrices, rows, row_signs, cols, col_signs, shape):
    """Sum signed element matrices into a CSR matrix; negative indices are dropped."""
    values = element_matrices * row_signs[:, :, None] * col_signs[:, None, :]
    r = np.broadcast_to(rows[:, :, None], values.shape)
    c = np.broadcast_to(cols[:, None, :], values.shape)
    keep = (r >= 0) & (c >= 0)
    return scipy.sparse.coo_matrix((values[keep], (r[keep], c[keep])), shape=shape).tocsr()


def scatter_vector(element_vectors, dofs, signs, n):
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=(element_vectors * signs)[keep], minlength=n)


def divergence_matrix(spaces, layout, ops):
    """The block -(div v, q) with rows over Qh and columns over the reduced kinematic dofs."""
    nt = spaces.mesh.n_tets
    local = -(ops.volumes[:, None] * ops.div)[:, None, :]
    return scatter_matrix(
        local,
        np.arange(nt)[:, None],
        np.ones((nt, 1)),
        layout.element_dofs,
        layout.element_signs,
        (nt, layout.n_free),
    )


def neumann_groups(mesh):
    """Neumann facets grouped by their (outward) normal."""
    facets = mesh.facets_with_label(meshlib.NEUMANN)
    if len(facets) == 0:
        return []
    normals = np.round(mesh.facet_normals[facets], 12)
    unique, inverse = np.unique(normals, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return [(unique[k], facets[inverse == k]) for k in range(len(unique))]


def load_vector(spaces, layout, data):
    """(f, v) plus the Neumann tractions (g_nn, v_n) + (g_nt, vhat) on the reduced dofs."""
    mesh = spaces.mesh
    g = mesh.geometry
    local = np.zeros((mesh.n_tets, N_LOCAL))
    degree = min(polycalc.degree(data.f) + 1, config.MAX_QUADRATURE_DEGREE)
    points, weights = quadrature.map_tet_rule(g, quadrature.rule_for(3, degree))
    f = polycalc.evaluate(data.f, points)
    phi = spaces.V.evaluate(points)
    local[:, LOCAL_V] = np.einsum('mq,mqi,mqbi->mb', weights, f, phi)
    rhs = scatter_vector(local, layout.element_dofs, layout.element_signs, layout.n_free)

    full = np.zeros(layout.n_full)
    for normal, facets in neumann_groups(mesh):
        g_nn, g_nt = polycalc.neumann_data(data, normal)
        degree = min(max(polycalc.degree(g_nn), polycalc.degree(g_nt)) + 1, config.MAX_QUADRATURE_DEGREE)
        rule = quadrature.rule_for(2, degree)
        fpoints, fweights = quadrature.map_facet_rule(mesh.vertices[mesh.facets[facets]], rule)
        nn = g_nn(fpoints)
        nt = polycalc.evaluate(g_nt, fpoints)
        tets, locs = mesh.facet_tets[facets, 0], mesh.facet_local[facets, 0]
        phi = spaces.V.subset(tets).evaluate(fpoints)
        vn = np.einsum('fqbi,i->fqb', phi, normal)
        contribution = np.einsum('fq,fq,fqb->fb', fweights, nn, vn)
        dofs = spaces[SpaceTag.Vh].element_dofs[tets]
        signs = spaces[SpaceTag.Vh].element_signs[tets]
        np.add.at(full, dofs + layout.offsets[0], contribution * signs)

        hat = spaces[SpaceTag.VhatH].element_dofs[tets].reshape(-1, 4, 2)[np.arange(len(facets)), locs]
        tangential = np.einsum('fq,fqi,fki->fk', fweights, nt, mesh.facet_tangents[facets])
        np.add.at(full, hat + layout.offsets[1], tangential)
    return rhs + layout.reduce(full)


class SaddleSystem:
    """[[A, B^T], [B, 0]] over the reduced kinematic dofs and the pressures."""

    def __init__(self, spaces, layout, A, B, rhs_kinematic, rhs_pressure, condensable=()):
        self.spaces = spaces
        self.layout = layout
        self.A = A
        self.B = B
        self.rhs_kinematic = rhs_kinematic
        self.rhs_pressure = rhs_pressure
        self.condensable = condensable

    @property
    def n_kinematic(self):
        return self.A.shape[0]

    def matrix(self):
        return scipy.sparse.bmat([[self.A, self.B.T], [self.B, None]], format='csr')

    def rhs(self):
        return np.concatenate([self.rhs_kinematic, self.rhs_pressure])

    def pack(self, solution):
        return np.concatenate(
            [self.layout.pack(solution.u, solution.uhat, solution.omega), solution.p.coefficients]
        )

    def unpack(self, x, stats=None):
        u, uhat, omega = self.layout.fields(x[: self.n_kinematic])
        p = interp.DiscreteField(self.spaces, SpaceTag.Qh, x[self.n_kinematic :])
        return Solution(u, uhat, omega, p, stats)


def assemble_hdg(spaces, params, data=None):
    """The HDG saddle point system; without data the loads are zero."""
    layout = KinematicLayout(spaces)
    ops = LocalOperators(spaces)
    ke = params.nu * hdg_element_matrices(ops, params.alpha, facet_h_per_element(spaces))
    A = scatter_matrix(
        ke,
        layout.element_dofs,
        layout.element_signs,
        layout.element_dofs,
        layout.element_signs,
        (layout.n_free, layout.n_free),
    )
    B = divergence_matrix(spaces, layout, ops)
    if data is None:
        rhs = np.zeros(layout.n_free)
    else:
        rhs = load_vector(spaces, layout, data)
    return SaddleSystem(spaces, layout, A, B, rhs, np.zeros(spaces.mesh.n_tets))


def require_neumann(mesh):
    if len(mesh.facets_with_label(meshlib.NEUMANN)) == 0:
        raise ValueError('the pressure is only unique with a nonempty Neumann boundary')


def check_solution(solution, residual):
    """Warn when the residual or the divergence of the velocity exceed their tolerances."""
    if residual > config.RESIDUAL_TOLERANCE:
        util.warn(f'relative residual {residual:.3e} exceeds {config.RESIDUAL_TOLERANCE:g}')
    defect, scale = divergence_defect(solution.u)
    if defect > config.DIV_FREE_TOLERANCE * max(scale, np.finfo(float).tiny):
        util.warn(f'velocity divergence {defect:.3e} exceeds tolerance (scale {scale:.3e})')


def divergence_defect(u):
    """max_T |div u| and the cancellation scale max_T sum_k |a_k div phi_k|."""
    local = u.local()
    div = u.basis.divergence()
    return (
        float(np.abs(np.einsum('mb,mb->m', local, div)).max()),
        float(np.abs(local * div).sum(axis=1).max()),
    )


def solve_hdg(system):
    require_neumann(system.spaces.mesh)
    x, stats = sparsela.solve(system.matrix(), system.rhs())
    solution = system.unpack(x, stats)
    check_solution(solution, stats.residual)
    return solution


def interpolate_exact(spaces, data):
    return Solution(
        interp.interp_V(spaces, data.u),
        interp.interp_Vhat(spaces, data.u),
        interp.interp_W(spaces, data.omega),
        interp.interp_Q(spaces, data.pressure),
    )


def consistency_residual(system, solution):
    """Relative residual of the discrete equations at the given (interpolated) fields."""
    x = system.pack(solution)
    rhs = system.rhs()
    return float(np.linalg.norm(system.matrix() @ x - rhs) / np.linalg.norm(rhs))


def consistency_defect(system, solution):
    """The kinematic residual r at the given fields in the energy dual norm, relative to their
    energy: sqrt(r^T A^-1 r / x^T A x). Needs a definite A block."""
    x = system.pack(solution)
    k = system.n_kinematic
    kinematic = x[:k]
    residual = system.A @ kinematic + system.B.T @ x[k:] - system.rhs_kinematic
    dual = float(residual @ sparsela.factor_solve(system.A, residual))
    energy = float(kinematic @ (system.A @ kinematic))
    return float(np.sqrt(max(dual, 0.0) / energy))


def hdg_energy(u, uhat, omega, params, *, degree=2):
    """nu a^hdg((u, uhat, omega), (u, uhat, omega)), evaluated by quadrature from the fields."""
    spaces = u.spaces
    g = spaces.mesh.geometry
    m = g.n_elements
    eps = u.sym_grad()
    energy = np.einsum('m,mij,mij->', g.volumes, eps, eps)

    rule = quadrature.rule_for(2, degree)
    points, weights = quadrature.map_facet_rule(g.facet_vertices, rule)
    q = len(rule)
    u_values = u.values(points.reshape(m, 4 * q, 3)).reshape(m, 4, q, 3)
    w_values = omega.values(points.reshape(m, 4 * q, 3)).reshape(m, 4, q, 3)
    n = g.outward_normals
    proj = np.eye(3) - np.einsum('mfi,mfj->mfij', n, n)
    jump = np.einsum('mfij,mfqj->mfqi', proj, uhat.facet_values()[:, :, None, :] - u_values)
    flux = np.einsum('mij,mfj->mfi', eps, n)
    h = facet_h_per_element(spaces)

    energy += 2 * np.einsum('mfq,mfi,mfqi->', weights, flux, jump)
    mean_jump = np.einsum('mfq,mfqi->mfi', weights, jump) / g.facet_areas[..., None]
    energy += np.einsum('mf,mfi,mfi->', params.alpha * g.facet_areas / h, mean_jump, mean_jump)
    curl_jump = np.einsum('mi,mfi->mf', u.curl(), n)[..., None] - np.einsum('mfqi,mfi->mfq', w_values, n)
    energy += np.einsum('mfq,mf,mfq->', weights, h, curl_jump**2)
    return params.nu * float(energy)


def boundary_tangential_mean(u):
    """The L2 norm over the Dirichlet boundary of the facet means of the tangential velocity."""
    mesh = u.spaces.mesh
    facets = mesh.facets_with_label(meshlib.DIRICHLET)
    tets, locs = mesh.facet_tets[facets, 0], mesh.facet_local[facets, 0]
    g = mesh.geometry
    centroid = g.facet_centroids[tets, locs]
    d = centroid - g.centroids[tets]
    local = u.local()[tets]
    V = u.basis
    values = np.einsum('fb,fbi->fi', local, V.values[tets]) + np.einsum(
        'fb,fbil,fl->fi', local, V.grads[tets], d
    )
    n = mesh.facet_normals[facets]
    tangential = values - np.einsum('fi,fi->f', values, n)[:, None] * n
    return float(np.sqrt(np.einsum('f,fi,fi->', mesh.facet_areas[facets], tangential, tangential)))


def coercivity_sweep(spaces, alphas, nu=config.DEFAULT_NU):
    """Smallest eigenvalue of the reduced A block for each alpha."""
    results = []
    for alpha in alphas:
        system = assemble_hdg(spaces, HdgParams(alpha=alpha, nu=nu, h_mode=spaces.h_mode))
        lam = sparsela.smallest_eigenvalue(system.A)
        util.verbose(f'alpha {alpha:g}: smallest eigenvalue {lam:.4e}')
        results.append((float(alpha), lam))
    return results
