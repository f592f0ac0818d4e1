"""Quadrature on the reference triangle and tetrahedron.

Rules are collapsed tensor products of Gauss-Jacobi rules, so all weights are
positive. The reference triangle is {x, y >= 0, x + y <= 1}, the reference
tetrahedron {x, y, z >= 0, x + y + z <= 1}.
"""

import functools

import attr
import numpy as np
import scipy.special

import config


@attr.s(frozen=True)
class QuadRule:
    dim = attr.ib()
    points = attr.ib()
    weights = attr.ib()
    exact_degree = attr.ib()

    def __len__(self):
        return len(self.weights)


def _gauss(m, alpha, scale):
    # Nodes mapped from [-1, 1] to [0, 1] for the weight (1 - t)^alpha.
    if alpha == 0:
        t, w = scipy.special.roots_legendre(m)
    else:
        t, w = scipy.special.roots_jacobi(m, alpha, 0)
    return (t + 1) / 2, w / scale


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=None)
def _build(dim, degree):
    m = degree // 2 + 1
    if dim == 2:
        a, wa = _gauss(m, 1, 4)
        b, wb = _gauss(m, 0, 2)
        A, B = np.meshgrid(a, b, indexing='ij')
        points = np.column_stack([A.ravel(), ((1 - A) * B).ravel()])
        weights = np.outer(wa, wb).ravel()
    else:
        a, wa = _gauss(m, 2, 8)
        b, wb = _gauss(m, 1, 4)
        c, wc = _gauss(m, 0, 2)
        A, B, C = np.meshgrid(a, b, c, indexing='ij')
        points = np.column_stack(
            [A.ravel(), ((1 - A) * B).ravel(), ((1 - A) * (1 - B) * C).ravel()]
        )
        weights = np.einsum('i,j,k->ijk', wa, wb, wc).ravel()
    return QuadRule(dim, _freeze(points), _freeze(weights), 2 * m - 1)


def rule_for(simplex_dim, degree):
    """A rule on the reference simplex of the given dimension exact for total degree `degree`."""
    if simplex_dim not in (2, 3):
        raise ValueError(f'quadrature is available on triangles and tetrahedra, not dim {simplex_dim}')
    if isinstance(degree, bool) or not isinstance(degree, (int, np.integer)) or degree < 0:
        raise ValueError(f'quadrature degree must be a nonnegative integer, got {degree!r}')
    if degree > config.MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f'quadrature degree {degree} exceeds the maximum {config.MAX_QUADRATURE_DEGREE}'
        )
    return _build(int(simplex_dim), int(degree))


def map_tet_rule(geometry, rule):
    """Physical points (m, q, 3) and weights (m, q) on every element of an ElementGeometry."""
    points = geometry.vertices[:, 0, None, :] + np.einsum(
        'mij,qj->mqi', geometry.jacobians, rule.points
    )
    weights = geometry.dets[:, None] * rule.weights[None, :]
    return points, weights


def map_facet_rule(vertices, rule):
    """Physical points (..., q, 3) and weights (..., q) on triangles with vertices (..., 3, 3)."""
    v = np.asarray(vertices, dtype=float)
    e1 = v[..., 1, :] - v[..., 0, :]
    e2 = v[..., 2, :] - v[..., 0, :]
    points = (
        v[..., None, 0, :]
        + rule.points[:, 0, None] * e1[..., None, :]
        + rule.points[:, 1, None] * e2[..., None, :]
    )
    jac = np.linalg.norm(np.cross(e1, e2), axis=-1)
    weights = jac[..., None] * rule.weights
    return points, weights
