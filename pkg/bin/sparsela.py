"""Direct solves and extremal eigenvalue estimates for the assembled systems."""

import attr
import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

import config

# Below this dimension eigenvalues come from a dense symmetric eigensolver.
DENSE_EIGEN_LIMIT = 20


class SingularMatrixError(Exception):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConvergenceError(Exception):
    def __init__(self, message, lambda_max=None, lambda_min=None):
        super().__init__(message)
        self.lambda_max = lambda_max
        self.lambda_min = lambda_min


@attr.s
class SolveStats:
    kind = attr.ib()
    dimension = attr.ib()
    nnz = attr.ib()
    residual = attr.ib()


@attr.s
class CondEstimate:
    lambda_max = attr.ib()
    lambda_min = attr.ib()
    iterations = attr.ib()
    residuals = attr.ib(default=(0.0, 0.0))

    @property
    def cond(self):
        return abs(self.lambda_max) / abs(self.lambda_min)

    @property
    def definite(self):
        return self.lambda_min > 0 and self.lambda_max > 0


def is_symmetric(m, tol=1e-12):
    if scipy.sparse.issparse(m):
        scale = abs(m).max()
        diff = abs(m - m.T).max() if m.nnz else 0.0
    else:
        m = np.asarray(m)
        scale = np.abs(m).max(initial=0.0)
        diff = np.abs(m - m.T).max(initial=0.0)
    return diff <= tol * max(scale, np.finfo(float).tiny)


def jacobi_scaled(m):
    """D^-1/2 m D^-1/2 with D = |diag(m)|, the matrix in the basis scaled to unit diagonal."""
    m = scipy.sparse.csr_matrix(m)
    d = np.abs(m.diagonal())
    if np.any(d == 0):
        row = int(np.flatnonzero(d == 0)[0])
        raise SingularMatrixError(f'zero diagonal entry in row {row}', row=row)
    scaling = scipy.sparse.diags(1 / np.sqrt(d))
    return (scaling @ m @ scaling).tocsr()


class Factorization:
    """LU factorization: dense below config.DENSE_SOLVE_THRESHOLD, SuperLU with its
    default COLAMD column ordering above."""

    def __init__(self, m):
        if m.shape[0] != m.shape[1]:
            raise ValueError(f'cannot factor a non-square {m.shape} matrix')
        self.matrix = scipy.sparse.csc_matrix(m)
        self.n = m.shape[0]
        scale = abs(self.matrix).max() if self.matrix.nnz else 0.0
        if scale == 0.0 and self.n > 0:
            raise SingularMatrixError('matrix is zero', row=0)
        threshold = config.PIVOT_TOLERANCE * scale

        if self.n < config.DENSE_SOLVE_THRESHOLD:
            self.kind = 'dense'
            self._lu = scipy.linalg.lu_factor(self.matrix.toarray(), check_finite=True)
            pivots = np.abs(np.diag(self._lu[0]))
            if np.any(pivots <= threshold):
                row = int(np.flatnonzero(pivots <= threshold)[0])
                raise SingularMatrixError(f'zero pivot in row {row}', row=row)
        else:
            self.kind = 'sparse'
            try:
                self._lu = scipy.sparse.linalg.splu(self.matrix)
            except RuntimeError as e:
                raise SingularMatrixError(f'sparse factorization failed: {e}') from e
            pivots = np.abs(self._lu.U.diagonal())
            if np.any(pivots <= threshold):
                j = int(np.flatnonzero(pivots <= threshold)[0])
                row = int(np.argsort(self._lu.perm_c)[j])
                raise SingularMatrixError(f'zero pivot at unknown {row}', row=row)

    def _solve(self, rhs):
        if self.kind == 'dense':
            return scipy.linalg.lu_solve(self._lu, rhs)
        return self._lu.solve(rhs)

    def solve(self, rhs, refine=True):
        rhs = np.asarray(rhs, dtype=float)
        x = self._solve(rhs)
        if refine:
            x = x + self._solve(rhs - self.matrix @ x)
        return x


def relative_residual(m, x, rhs):
    norm = np.linalg.norm(rhs)
    r = np.linalg.norm(m @ x - rhs)
    return r / norm if norm > 0 else r


def solve(m, rhs):
    """Solve m x = rhs; returns x and the SolveStats of the solve."""
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        x = np.zeros(m.shape[1])
        return x, SolveStats('trivial', m.shape[0], int(scipy.sparse.csr_matrix(m).nnz), 0.0)
    factorization = Factorization(m)
    x = factorization.solve(rhs)
    stats = SolveStats(
        factorization.kind,
        factorization.n,
        int(factorization.matrix.nnz),
        float(relative_residual(factorization.matrix, x, rhs)),
    )
    return x, stats


def factor_solve(m, rhs):
    return solve(m, rhs)[0]


def _dense_estimate(m):
    eigenvalues = np.linalg.eigvalsh(m)
    magnitude = np.abs(eigenvalues)
    return CondEstimate(
        float(eigenvalues[np.argmax(magnitude)]), float(eigenvalues[np.argmin(magnitude)]), 0
    )


def estimate_condition(m, tol=config.EIGEN_TOLERANCE, maxiter=config.EIGEN_MAXITER):
    """Largest and smallest magnitude eigenvalues of a symmetric matrix.

    The largest comes from Lanczos on m, the smallest from Lanczos on m^-1 applied
    through one factorization. For SPD input cond = lambda_max / lambda_min.
    """
    n = m.shape[0]
    if n != m.shape[1]:
        raise ValueError(f'cannot estimate the condition of a non-square {m.shape} matrix')
    if n <= DENSE_EIGEN_LIMIT:
        dense = m.toarray() if scipy.sparse.issparse(m) else np.asarray(m, dtype=float)
        return _dense_estimate(dense)

    m = scipy.sparse.csr_matrix(m)
    count = {'products': 0, 'solves': 0}

    def product(x):
        count['products'] += 1
        return m @ x

    operator = scipy.sparse.linalg.LinearOperator((n, n), matvec=product, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        values, vectors = scipy.sparse.linalg.eigsh(
            operator, k=1, which='LM', tol=tol, maxiter=maxiter, v0=v0
        )
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        best = float(e.eigenvalues[0]) if len(e.eigenvalues) else None
        raise ConvergenceError('largest eigenvalue did not converge', lambda_max=best) from e
    lambda_max = float(values[0])
    res_max = np.linalg.norm(m @ vectors[:, 0] - lambda_max * vectors[:, 0]) / abs(lambda_max)

    factorization = Factorization(m)

    def inverse(x):
        count['solves'] += 1
        return factorization.solve(x, refine=False)

    inverse_operator = scipy.sparse.linalg.LinearOperator((n, n), matvec=inverse, dtype=float)
    try:
        values, vectors = scipy.sparse.linalg.eigsh(
            m, k=1, sigma=0.0, which='LM', OPinv=inverse_operator, tol=tol, maxiter=maxiter, v0=v0
        )
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        best = float(e.eigenvalues[0]) if len(e.eigenvalues) else None
        raise ConvergenceError(
            'smallest eigenvalue did not converge', lambda_max=lambda_max, lambda_min=best
        ) from e
    lambda_min = float(values[0])
    res_min = np.linalg.norm(m @ vectors[:, 0] - lambda_min * vectors[:, 0]) / abs(lambda_min)
    return CondEstimate(
        lambda_max,
        lambda_min,
        count['products'] + count['solves'],
        (float(res_max), float(res_min)),
    )


def smallest_eigenvalue(m):
    """Algebraically smallest eigenvalue; dense when small enough, else shift-invert at zero."""
    n = m.shape[0]
    if n < config.DENSE_SOLVE_THRESHOLD:
        dense = m.toarray() if scipy.sparse.issparse(m) else np.asarray(m, dtype=float)
        return float(np.linalg.eigvalsh(dense)[0])
    return estimate_condition(m).lambda_min
