"""Hybridized mass conserving mixed stress discretization.

The stress is element local and eliminated per element before the solve. The
assembled full system is the symmetrized one,

    [ M/nu   P       0   ] [sigma]   [ 0 ]
    [ P^T  -(C + D) -B^T ] [  U  ] = [-F ]
    [ 0     -B       0   ] [  p  ]   [ 0 ]

with P the hybrid divergence pairing, C the vorticity divergence stabilization,
D the optional (nu/3)(div u, div v) term and B = -(div u, q).
"""

import attr
import numpy as np
import scipy.sparse

import config
import hdg
import interp
import quadrature
import sparsela
from fespaces import BasisError, SpaceTag


def _bool(value):
    if isinstance(value, str):
        return value.lower() in ('1', 'true', 'yes', 'on')
    return bool(value)


@attr.s(frozen=True)
class McsParams:
    nu = attr.ib(default=config.DEFAULT_NU, converter=float, validator=hdg._positive)
    add_divdiv = attr.ib(default=False, converter=_bool)
    h_mode = attr.ib(default=config.DEFAULT_H_MODE, validator=hdg._h_mode)


def kappa_matrix(w):
    """The skew matrices with 2 kappa(w) x = w cross x, for w of shape (..., 3)."""
    z = np.zeros(w.shape[:-1])
    return 0.5 * np.stack(
        [
            np.stack([z, -w[..., 2], w[..., 1]], axis=-1),
            np.stack([w[..., 2], z, -w[..., 0]], axis=-1),
            np.stack([-w[..., 1], w[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def stress_mass(spaces):
    """(tau_k, tau_l)_T per element."""
    g = spaces.mesh.geometry
    points, weights = quadrature.map_tet_rule(g, quadrature.rule_for(3, 2))
    tau = spaces.sigma.evaluate(points)
    return np.einsum('mq,mqkij,mqlij->mkl', weights, tau, tau)


def _kappa_term(spaces):
    g = spaces.mesh.geometry
    points, weights = quadrature.map_tet_rule(g, quadrature.rule_for(3, 2))
    tau = spaces.sigma.evaluate(points)
    kappa = kappa_matrix(spaces.W.evaluate(points))
    out = np.zeros((g.n_elements, spaces.dim_sigma, hdg.N_LOCAL))
    out[..., hdg.LOCAL_W] = np.einsum('mq,mqkij,mqlij->mkl', weights, tau, kappa)
    return out


def _nt_traces(spaces):
    """(tau_k n)_t at the facet centroids, shape (m, 4, dim_sigma, 3); constant on each facet."""
    g = spaces.mesh.geometry
    sigma = spaces.sigma
    d = g.facet_centroids - g.centroids[:, None, :]
    at_facets = sigma.values[:, None] + np.einsum('mkijl,mfl->mfkij', sigma.grads, d)
    n = g.outward_normals
    tn = np.einsum('mfkij,mfj->mfki', at_facets, n)
    return tn - np.einsum('mfki,mfi->mfk', tn, n)[..., None] * n[:, :, None, :]


def pairing_compact(spaces, ops=None):
    """-(tau, grad v - kappa(eta))_T + (tau_nt, (v - vhat)_t)_dT as (m, dim_sigma, 24)."""
    if ops is None:
        ops = hdg.LocalOperators(spaces)
    g = spaces.mesh.geometry
    m = g.n_elements
    grad = np.zeros((m, 3, 3, hdg.N_LOCAL))
    grad[..., hdg.LOCAL_V] = np.moveaxis(spaces.V.gradient(), 1, -1)
    pairing = -g.volumes[:, None, None] * np.einsum(
        'mkij,mijl->mkl', spaces.sigma.values, grad
    )
    pairing += _kappa_term(spaces)
    pairing -= np.einsum('mf,mfki,mfil->mkl', g.facet_areas, _nt_traces(spaces), ops.jump)
    return pairing


def pairing_standard(spaces):
    """(div tau, v)_T - (tau_nn, v_n)_dT - (tau_nt, vhat)_dT + (tau, kappa(eta))_T."""
    g = spaces.mesh.geometry
    m = g.n_elements
    sigma, V = spaces.sigma, spaces.V
    pairing = _kappa_term(spaces)
    pairing[..., hdg.LOCAL_V] += g.volumes[:, None, None] * np.einsum(
        'mki,mli->mkl', sigma.divergence(), V.values
    )

    rule = quadrature.rule_for(2, 2)
    points, weights = quadrature.map_facet_rule(g.facet_vertices, rule)
    q = len(rule)
    flat = points.reshape(m, 4 * q, 3)
    tau = sigma.evaluate(flat).reshape(m, 4, q, spaces.dim_sigma, 3, 3)
    v = V.evaluate(flat).reshape(m, 4, q, 12, 3)
    n = g.outward_normals
    tau_nn = np.einsum('mfi,mfqkij,mfj->mfqk', n, tau, n)
    v_n = np.einsum('mfqli,mfi->mfql', v, n)
    pairing[..., hdg.LOCAL_V] -= np.einsum('mfq,mfqk,mfql->mkl', weights, tau_nn, v_n)

    nt = _nt_traces(spaces)
    for i in range(4):
        cols = slice(12 + 2 * i, 14 + 2 * i)
        pairing[..., cols] -= g.facet_areas[:, i, None, None] * np.einsum(
            'mki,mci->mkc', nt[:, i], g.facet_tangents[:, i]
        )
    return pairing


def stabilization_matrices(spaces, ops, params):
    """c(omega, eta) = nu h_T^2 (div omega, div eta), plus (nu/3)(div u, div v) when requested."""
    g = spaces.mesh.geometry
    m = g.n_elements
    h = spaces.mesh.element_h(params.h_mode)
    div_w = np.zeros((m, hdg.N_LOCAL))
    div_w[:, hdg.LOCAL_W] = spaces.W.divergence()
    ke = params.nu * (h**2 * g.volumes)[:, None, None] * np.einsum('mk,ml->mkl', div_w, div_w)
    if params.add_divdiv:
        ke += (params.nu / 3) * g.volumes[:, None, None] * np.einsum('mk,ml->mkl', ops.div, ops.div)
    return ke


class McsSystem:
    def __init__(self, spaces, params, layout, mass, pairing, P, K, B, rhs_kinematic):
        self.spaces = spaces
        self.params = params
        self.layout = layout
        self.mass = mass
        self.pairing = pairing
        self.P = P
        self.K = K
        self.B = B
        self.rhs_kinematic = rhs_kinematic
        # The second block row is negated to make the matrix symmetric.
        self.symmetrized = True
        self.condensable = (SpaceTag.SigmaH,)

    @property
    def n_sigma(self):
        return self.P.shape[0]

    def matrix(self):
        M = scipy.sparse.block_diag(list(self.mass / self.params.nu), format='csr')
        return scipy.sparse.bmat(
            [[M, self.P, None], [self.P.T, -self.K, -self.B.T], [None, -self.B, None]],
            format='csr',
        )

    def rhs(self):
        return np.concatenate(
            [np.zeros(self.n_sigma), -self.rhs_kinematic, np.zeros(self.B.shape[0])]
        )

    def pack(self, solution):
        return np.concatenate(
            [
                solution.sigma.coefficients,
                self.layout.pack(solution.u, solution.uhat, solution.omega),
                solution.p.coefficients,
            ]
        )


def assemble_mcs(spaces, params, data=None):
    if spaces.sigma is None:
        raise ValueError('the MCS system needs the stress space')
    layout = hdg.KinematicLayout(spaces)
    ops = hdg.LocalOperators(spaces)
    m, ds = spaces.mesh.n_tets, spaces.dim_sigma
    pairing = pairing_compact(spaces, ops)
    sigma_dofs = spaces[SpaceTag.SigmaH].element_dofs
    P = hdg.scatter_matrix(
        pairing,
        sigma_dofs,
        np.ones((m, ds)),
        layout.element_dofs,
        layout.element_signs,
        (m * ds, layout.n_free),
    )
    K = hdg.scatter_matrix(
        stabilization_matrices(spaces, ops, params),
        layout.element_dofs,
        layout.element_signs,
        layout.element_dofs,
        layout.element_signs,
        (layout.n_free, layout.n_free),
    )
    B = hdg.divergence_matrix(spaces, layout, ops)
    rhs = np.zeros(layout.n_free) if data is None else hdg.load_vector(spaces, layout, data)
    return McsSystem(spaces, params, layout, stress_mass(spaces), pairing, P, K, B, rhs)


class StressRecovery:
    """sigma = -nu M^-1 P U per element, from the reduced kinematic vector U."""

    def __init__(self, system, solved_pairing):
        self.system = system
        self.solved_pairing = solved_pairing

    def __call__(self, kinematic):
        layout = self.system.layout
        dofs = layout.element_dofs
        local = np.where(dofs >= 0, kinematic[np.maximum(dofs, 0)], 0.0) * layout.element_signs
        sigma = -self.system.params.nu * np.einsum('mkl,ml->mk', self.solved_pairing, local)
        return interp.DiscreteField(self.system.spaces, SpaceTag.SigmaH, sigma.ravel())


def condense_stress(system):
    """Eliminate the stress per element; returns the reduced SaddleSystem and a StressRecovery."""
    try:
        np.linalg.cholesky(system.mass)
    except np.linalg.LinAlgError as e:
        raise BasisError('stress mass matrix is not positive definite') from e
    solved = np.linalg.solve(system.mass, system.pairing)
    schur = system.params.nu * np.einsum('mki,mkj->mij', system.pairing, solved)
    schur = (schur + np.swapaxes(schur, 1, 2)) / 2
    layout = system.layout
    A = hdg.scatter_matrix(
        schur,
        layout.element_dofs,
        layout.element_signs,
        layout.element_dofs,
        layout.element_signs,
        (layout.n_free, layout.n_free),
    )
    reduced = hdg.SaddleSystem(
        system.spaces,
        layout,
        A + system.K,
        system.B,
        system.rhs_kinematic,
        np.zeros(system.B.shape[0]),
    )
    return reduced, StressRecovery(system, solved)


def solve_mcs(system):
    hdg.require_neumann(system.spaces.mesh)
    reduced, recover = condense_stress(system)
    x, stats = sparsela.solve(reduced.matrix(), reduced.rhs())
    solution = reduced.unpack(x, stats)
    solution.sigma = recover(x[: reduced.n_kinematic])
    if stats.kind != 'trivial':
        stats.residual = max(
            stats.residual,
            float(sparsela.relative_residual(system.matrix(), system.pack(solution), system.rhs())),
        )
    hdg.check_solution(solution, stats.residual)
    return solution


def omega_row_residual(system, solution):
    """Norm of the vorticity rows of the full residual, relative to the right hand side."""
    residual = system.matrix() @ system.pack(solution) - system.rhs()
    layout = system.layout
    free_w = layout.reduced_index[layout.offsets[2] :]
    rows = system.n_sigma + free_w[free_w >= 0]
    return float(np.linalg.norm(residual[rows]) / max(np.linalg.norm(system.rhs()), 1e-300))


def nt_jump(sigma):
    """L2 norm over interior facets of (sigma+ n+)_t + (sigma- n-)_t."""
    spaces = sigma.spaces
    mesh = spaces.mesh
    local = sigma.local()
    nt = np.einsum('mk,mfki->mfi', local, _nt_traces(spaces))
    facets = mesh.interior_facets()
    t, i = mesh.facet_tets[facets], mesh.facet_local[facets]
    jump = nt[t[:, 0], i[:, 0]] + nt[t[:, 1], i[:, 1]]
    return float(np.sqrt(np.einsum('f,fi,fi->', mesh.facet_areas[facets], jump, jump)))


def weak_symmetry_defect(sigma, omega=None, params=None):
    """max over the free vorticity basis functions eta of |(sigma, kappa(eta)) - c(omega, eta)|,
    and the size of the two moments as a scale. Without omega the c term is left out."""
    spaces = sigma.spaces
    dofmap = spaces[SpaceTag.Wh]
    kappa = _kappa_term(spaces)[..., hdg.LOCAL_W]
    skew = np.einsum('mk,mkl->ml', sigma.local(), kappa)
    stabilization = np.zeros_like(skew)
    if omega is not None:
        g = spaces.mesh.geometry
        h = spaces.mesh.element_h(params.h_mode)
        weight = params.nu * h**2 * g.volumes * omega.divergence()
        stabilization = weight[:, None] * spaces.W.divergence()

    def moments(local):
        out = hdg.scatter_vector(local, dofmap.element_dofs, dofmap.element_signs, dofmap.n_global)
        return out[~dofmap.dirichlet_mask]

    skew, stabilization = moments(skew), moments(stabilization)
    scale = max(float(np.abs(skew).max(initial=0.0)), float(np.abs(stabilization).max(initial=0.0)))
    return float(np.abs(skew - stabilization).max(initial=0.0)), scale
