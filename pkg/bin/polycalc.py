"""Exact polynomial calculus in (x, y, z).

Vector fields are lists of three MultiPoly, matrix fields are 3x3 nested
lists (row i holds component i). All operations work on the coefficient
arrays directly, so identities like div(curl v) = 0 hold exactly.
"""

import numbers

import numpy as np
import scipy.signal


def _trim(c):
    nz = np.nonzero(c)
    if len(nz[0]) == 0:
        return np.zeros((1, 1, 1))
    return c[: nz[0].max() + 1, : nz[1].max() + 1, : nz[2].max() + 1]


def _pad(c, shape):
    out = np.zeros(shape)
    out[: c.shape[0], : c.shape[1], : c.shape[2]] = c
    return out


class MultiPoly:
    """Polynomial with coefficients[i, j, k] multiplying x^i y^j z^k."""

    __slots__ = ('coeffs',)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1, 1, 1)
        if c.ndim != 3:
            raise ValueError('coefficients must be a 3d array')
        self.coeffs = _trim(c)

    @staticmethod
    def constant(value):
        return MultiPoly(float(value))

    @staticmethod
    def monomial(i, j, k, coefficient=1.0):
        c = np.zeros((i + 1, j + 1, k + 1))
        c[i, j, k] = coefficient
        return MultiPoly(c)

    def degree(self):
        nz = np.nonzero(self.coeffs)
        if len(nz[0]) == 0:
            return 0
        return int((nz[0] + nz[1] + nz[2]).max())

    def is_zero(self, tol=0.0):
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def terms(self):
        for i, j, k in zip(*np.nonzero(self.coeffs)):
            yield (int(i), int(j), int(k)), float(self.coeffs[i, j, k])

    def diff(self, axis):
        c = self.coeffs
        n = c.shape[axis]
        if n == 1:
            return MultiPoly(0.0)
        shape = [1, 1, 1]
        shape[axis] = n - 1
        factor = np.arange(1, n, dtype=float).reshape(shape)
        return MultiPoly(np.take(c, range(1, n), axis=axis) * factor)

    # Sparse evaluation over the nonzero monomials; points has shape (..., 3).
    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        x, y, z = points[..., 0], points[..., 1], points[..., 2]
        powers = [[np.ones_like(x)], [np.ones_like(y)], [np.ones_like(z)]]
        for axis, coordinate in enumerate((x, y, z)):
            for _ in range(1, self.coeffs.shape[axis]):
                powers[axis].append(powers[axis][-1] * coordinate)
        out = np.zeros_like(x)
        for (i, j, k), c in self.terms():
            out += c * powers[0][i] * powers[1][j] * powers[2][k]
        return out

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            return other
        if isinstance(other, numbers.Number):
            return MultiPoly(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        shape = np.maximum(self.coeffs.shape, other.coeffs.shape)
        return MultiPoly(_pad(self.coeffs, shape) + _pad(other.coeffs, shape))

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return MultiPoly(self.coeffs * float(other))
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return MultiPoly(scipy.signal.convolve(self.coeffs, other.coeffs, method='direct'))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, numbers.Number):
            return NotImplemented
        return MultiPoly(self.coeffs / float(other))

    def __pow__(self, exponent):
        if not isinstance(exponent, int) or exponent < 0:
            return NotImplemented
        out = MultiPoly(1.0)
        for _ in range(exponent):
            out = out * self
        return out

    def __repr__(self):
        terms = ' + '.join(f'{c:g}*x^{i}y^{j}z^{k}' for (i, j, k), c in self.terms())
        return f'MultiPoly({terms or "0"})'


X = MultiPoly.monomial(1, 0, 0)
Y = MultiPoly.monomial(0, 1, 0)
Z = MultiPoly.monomial(0, 0, 1)
ZERO = MultiPoly(0.0)


def is_matrix(obj):
    return isinstance(obj, (list, tuple)) and isinstance(obj[0], (list, tuple))


def apply(fn, obj):
    if isinstance(obj, MultiPoly):
        return fn(obj)
    return [apply(fn, o) for o in obj]


def scale(obj, factor):
    return apply(lambda p: p * factor, obj)


def add(a, b):
    if isinstance(a, MultiPoly):
        return a + b
    return [add(x, y) for x, y in zip(a, b)]


def sub(a, b):
    return add(a, scale(b, -1.0))


def degree(obj):
    if isinstance(obj, MultiPoly):
        return obj.degree()
    return max(degree(o) for o in obj)


def is_zero(obj, tol=0.0):
    if isinstance(obj, MultiPoly):
        return obj.is_zero(tol)
    return all(is_zero(o, tol) for o in obj)


def evaluate(obj, points):
    """Values at points of shape (..., 3); vectors gain a trailing axis of 3, matrices (3, 3)."""
    if isinstance(obj, MultiPoly):
        return obj(points)
    if is_matrix(obj):
        return np.stack([evaluate(row, points) for row in obj], axis=-2)
    return np.stack([evaluate(o, points) for o in obj], axis=-1)


def grad(p):
    return [p.diff(0), p.diff(1), p.diff(2)]


def jacobian(v):
    return [grad(vi) for vi in v]


def curl(v):
    return [
        v[2].diff(1) - v[1].diff(2),
        v[0].diff(2) - v[2].diff(0),
        v[1].diff(0) - v[0].diff(1),
    ]


def div(obj):
    """Divergence of a vector field, or the row-wise divergence of a matrix field."""
    if is_matrix(obj):
        return [div(row) for row in obj]
    return obj[0].diff(0) + obj[1].diff(1) + obj[2].diff(2)


def transpose(t):
    return [[t[j][i] for j in range(3)] for i in range(3)]


def trace(t):
    return t[0][0] + t[1][1] + t[2][2]


def eps(v):
    g = jacobian(v)
    return [[(g[i][j] + g[j][i]) * 0.5 for j in range(3)] for i in range(3)]


def dev(t):
    tr = trace(t) / 3.0
    return [[t[i][j] - tr if i == j else t[i][j] for j in range(3)] for i in range(3)]


def kappa(v):
    return [
        [ZERO, v[2] * -0.5, v[1] * 0.5],
        [v[2] * 0.5, ZERO, v[0] * -0.5],
        [v[1] * -0.5, v[0] * 0.5, ZERO],
    ]


def dot(v, n):
    return v[0] * float(n[0]) + v[1] * float(n[1]) + v[2] * float(n[2])


def matvec(t, n):
    return [dot(row, n) for row in t]


def identity_times(p):
    return [[p if i == j else ZERO for j in range(3)] for i in range(3)]


class ManufacturedSolution:
    """Exact Stokes solution: velocity u, vorticity curl u, viscous stress nu*eps(u),
    pressure and the body force f = -div(sigma) + grad(p)."""

    def __init__(self, u, omega, sigma, pressure, f, nu):
        self.u = u
        self.omega = omega
        self.sigma = sigma
        self.pressure = pressure
        self.f = f
        self.nu = nu
        self.strain = scale(sigma, 1.0 / nu)

    @classmethod
    def from_fields(cls, u, pressure, nu):
        if not nu > 0:
            raise ValueError(f'viscosity must be positive, got {nu}')
        u = list(u)
        sigma = scale(eps(u), nu)
        f = add(scale(div(sigma), -1.0), grad(pressure))
        return cls(u, curl(u), sigma, pressure, f, nu)

    def with_potential(self, phi):
        """Same velocity, pressure p + phi, forcing f + grad(phi)."""
        return ManufacturedSolution(
            self.u, self.omega, self.sigma, self.pressure + phi, add(self.f, grad(phi)), self.nu
        )

    def degrees(self):
        return {
            'u': degree(self.u),
            'omega': degree(self.omega),
            'sigma': degree(self.sigma),
            'pressure': degree(self.pressure),
            'f': degree(self.f),
        }

    def velocity(self, points):
        return evaluate(self.u, points)

    def vorticity(self, points):
        return evaluate(self.omega, points)

    def stress(self, points):
        return evaluate(self.sigma, points)

    def pressure_at(self, points):
        return self.pressure(points)

    def force(self, points):
        return evaluate(self.f, points)


def stream_function():
    x, y, z = X, Y, Z
    return (x * x * (x - 1) * (x - 1)) * (y * y * (y - 1) * (y - 1)) * (z * z * (z - 1) * (z - 1))


def build_manufactured(nu):
    psi = stream_function()
    u = curl([psi, psi, psi])
    pressure = X**5 + Y**5 + Z**5 - 0.5
    ms = ManufacturedSolution.from_fields(u, pressure, nu)
    assert psi.degree() == 12
    assert ms.degrees() == {'u': 11, 'omega': 10, 'sigma': 10, 'pressure': 5, 'f': 9}
    assert is_zero(div(ms.u))
    return ms


def neumann_data(ms, normal):
    """Boundary tractions for a facet with the given unit normal:
    g_nn = n.sigma.n - p and g_nt = sigma n - (n.sigma.n) n."""
    n = np.asarray(normal, dtype=float)
    sn = matvec(ms.sigma, n)
    snn = dot(sn, n)
    g_nn = snn - ms.pressure
    g_nt = [sn[i] - snn * float(n[i]) for i in range(3)]
    return g_nn, g_nt
