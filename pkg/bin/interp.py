"""Discrete fields and the canonical interpolation operators into the five spaces."""

import numpy as np

import config
import fespaces
import mesh as meshlib
import polycalc
import quadrature
from fespaces import SpaceTag


class DiscreteField:
    """A coefficient vector of one space on one mesh."""

    def __init__(self, spaces, space, coefficients=None):
        self.spaces = spaces
        self.space = space
        n = spaces[space].n_global
        if coefficients is None:
            coefficients = np.zeros(n)
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (n,):
            raise ValueError(f'{space.value} field needs {n} coefficients, got {coefficients.shape}')
        self.coefficients = coefficients

    @property
    def dofmap(self):
        return self.spaces[self.space]

    @property
    def basis(self):
        return {
            SpaceTag.Vh: self.spaces.V,
            SpaceTag.Wh: self.spaces.W,
            SpaceTag.SigmaH: self.spaces.sigma,
            SpaceTag.Qh: self.spaces.Q,
        }[self.space]

    def local(self):
        """Signed coefficients per element, shape (nt, nloc)."""
        dm = self.dofmap
        dofs = dm.element_dofs
        c = np.where(dofs >= 0, self.coefficients[np.maximum(dofs, 0)], 0.0)
        return c * dm.element_signs

    def values(self, points, elements=slice(None)):
        """Field values at physical points (m, q, 3) of the given elements."""
        basis = self.basis
        local = self.local()[elements]
        center = np.einsum('mb...,mb->m...', basis.values[elements], local)
        slope = np.einsum('mb...,mb->m...', basis.grads[elements], local)
        d = np.asarray(points) - basis.centroids[elements][:, None, :]
        return center[:, None] + np.einsum('m...l,mql->mq...', slope, d)

    def divergence(self):
        return np.einsum('mb...,mb->m...', self.basis.divergence(), self.local())

    def curl(self):
        return np.einsum('mbi,mb->mi', self.basis.curl(), self.local())

    def gradient(self):
        return np.einsum('mbij,mb->mij', self.basis.gradient(), self.local())

    def sym_grad(self):
        return np.einsum('mbij,mb->mij', self.basis.sym_grad(), self.local())

    def facet_values(self):
        """Facet vectors of a VhatH field per element and local facet, shape (nt, 4, 3)."""
        assert self.space == SpaceTag.VhatH
        c = self.local().reshape(-1, 4, 2)
        return np.einsum('mfk,mfki->mfi', c, self.spaces.mesh.geometry.facet_tangents)

    def max_abs(self):
        return float(np.abs(self.coefficients).max(initial=0.0))

    def _combine(self, other, factor):
        assert other.space == self.space and other.spaces is self.spaces
        return DiscreteField(self.spaces, self.space, self.coefficients + factor * other.coefficients)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, factor):
        return DiscreteField(self.spaces, self.space, factor * self.coefficients)

    __rmul__ = __mul__

    def __repr__(self):
        return f'DiscreteField({self.space.value}, n={len(self.coefficients)})'


def _resolve(field, degree):
    if isinstance(field, (polycalc.MultiPoly, list, tuple)):
        if degree is None:
            degree = polycalc.degree(field)
        return (lambda points: polycalc.evaluate(field, points)), degree
    if callable(field):
        if degree is None:
            raise ValueError('interpolating a plain function needs an explicit degree')
        return field, degree
    raise ValueError(f'cannot interpolate {type(field).__name__}')


def _capped(degree):
    return min(int(degree), config.MAX_QUADRATURE_DEGREE)


def _facet_quadrature(mesh, degree):
    rule = quadrature.rule_for(2, _capped(degree))
    points, weights = quadrature.map_facet_rule(mesh.vertices[mesh.facets], rule)
    return rule, points, weights


def interp_V(spaces, field, degree=None):
    """Normal moments against the facet barycentric coordinates."""
    fn, degree = _resolve(field, degree)
    mesh = spaces.mesh
    rule, points, weights = _facet_quadrature(mesh, degree + 1)
    un = np.einsum('fqi,fi->fq', fn(points), mesh.facet_normals)
    lam = np.column_stack([1 - rule.points.sum(axis=1), rule.points[:, 0], rule.points[:, 1]])
    coefficients = np.einsum('fq,fq,qr->fr', weights, un, lam).ravel()
    return DiscreteField(spaces, SpaceTag.Vh, coefficients)


def interp_W(spaces, field, degree=None):
    fn, degree = _resolve(field, degree)
    mesh = spaces.mesh
    _, points, weights = _facet_quadrature(mesh, degree)
    flux = np.einsum('fq,fqi,fi->f', weights, fn(points), mesh.facet_normals)
    return DiscreteField(spaces, SpaceTag.Wh, flux)


def interp_Vhat(spaces, field, degree=None):
    """Tangential L2 projection onto facet constants; no dofs on Dirichlet facets."""
    fn, degree = _resolve(field, degree)
    mesh = spaces.mesh
    _, points, weights = _facet_quadrature(mesh, degree)
    mean = np.einsum('fq,fqi->fi', weights, fn(points)) / mesh.facet_areas[:, None]
    tangential = np.einsum('fki,fi->fk', mesh.facet_tangents, mean)
    kept = mesh.facet_labels != meshlib.DIRICHLET
    return DiscreteField(spaces, SpaceTag.VhatH, tangential[kept].ravel())


def interp_Q(spaces, field, degree=None):
    fn, degree = _resolve(field, degree)
    geometry = spaces.mesh.geometry
    points, weights = quadrature.map_tet_rule(geometry, quadrature.rule_for(3, _capped(degree)))
    means = np.einsum('mq,mq->m', weights, fn(points)) / geometry.volumes
    return DiscreteField(spaces, SpaceTag.Qh, means)


def interp_Sigma(spaces, field, degree=None):
    """Facet means of the nt-trace and element means against the deviatoric basis; the stress
    basis is dual to exactly these functionals, so they are the coefficients."""
    fn, degree = _resolve(field, degree)
    geometry = spaces.mesh.geometry
    basis = spaces.sigma
    rule2 = quadrature.rule_for(2, _capped(degree))
    points, weights = quadrature.map_facet_rule(geometry.facet_vertices, rule2)
    facet = np.einsum(
        'mfq,mfbi,mfqij,mfj->mfb',
        weights,
        geometry.facet_tangents,
        fn(points),
        geometry.outward_normals,
    ) / geometry.facet_areas[..., None]

    rule3 = quadrature.rule_for(3, _capped(degree + 1))
    points3, weights3 = quadrature.map_tet_rule(geometry, rule3)
    sigma3 = fn(points3)
    element = np.einsum('mq,mqij,aij->ma', weights3, sigma3, fespaces.DEV_BASIS)
    element /= geometry.volumes[:, None]
    parts = [facet.reshape(-1, 8), element]
    if basis.moments:
        d = points3 - geometry.centroids[:, None, :]
        scale = geometry.volumes * geometry.diameters
        for a, l in basis.moments:
            moment = np.einsum('mq,mqij,ij,mq->m', weights3, sigma3, fespaces.DEV_BASIS[a], d[..., l])
            parts.append((moment / scale)[:, None])
    coefficients = np.concatenate(parts, axis=1)
    return DiscreteField(spaces, SpaceTag.SigmaH, coefficients.ravel())


def random_field(spaces, space, rng, scale=1.0):
    """Unit-variance coefficients with the Dirichlet dofs zeroed."""
    dofmap = spaces[space]
    coefficients = scale * rng.standard_normal(dofmap.n_global)
    coefficients[dofmap.dirichlet_mask] = 0.0
    return DiscreteField(spaces, space, coefficients)
