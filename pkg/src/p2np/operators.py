"""Complex linear operators, Gram products, power iteration and weighted norms.

Inner products follow ``<a, b> = sum(conj(a) * b)`` everywhere
(``numpy.vdot``).
"""

from typing import NamedTuple

import numpy as np

from ._validation import ContractError, as_complex_vector, check_random_state

DEFAULT_MAX_ENTRIES = 2 ** 26


def inner(a, b):
    """``<a, b> = sum(conj(a) * b)``."""
    return np.vdot(a, b)


class LinearOperator:
    """A linear map C^N -> C^M given by forward and adjoint callables.

    Subclasses override ``_matvec`` and ``_rmatvec``; both receive flat
    complex arrays that have already been length-checked.
    """

    def __init__(self, range_dim, domain_dim, matvec=None, rmatvec=None):
        self.range_dim = int(range_dim)
        self.domain_dim = int(domain_dim)
        if matvec is not None:
            self._matvec = matvec
        if rmatvec is not None:
            self._rmatvec = rmatvec

    @property
    def shape(self):
        return (self.range_dim, self.domain_dim)

    def apply(self, x):
        x = as_complex_vector(x, self.domain_dim)
        return np.asarray(self._matvec(x), dtype=np.complex128)

    def adjoint(self, y):
        y = as_complex_vector(y, self.range_dim, name="y")
        return np.asarray(self._rmatvec(y), dtype=np.complex128)

    def gram(self, x):
        """A^H A x. Subclasses with a cheaper exact route override this."""
        return self.adjoint(self.apply(x))

    @property
    def H(self):
        return LinearOperator(self.domain_dim, self.range_dim,
                              matvec=self.adjoint, rmatvec=self.apply)

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class DenseOperator(LinearOperator):
    """Operator backed by an explicit complex matrix."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.complex128)
        if self.matrix.ndim != 2:
            raise ContractError("matrix must be 2-D")
        super().__init__(*self.matrix.shape)

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self.matrix.conj().T @ y


class IdentityOperator(LinearOperator):
    def __init__(self, n):
        super().__init__(n, n)

    def _matvec(self, x):
        return x.copy()

    def _rmatvec(self, y):
        return y.copy()


class HermitianOperator(LinearOperator):
    """Square operator equal to its own adjoint."""

    def __init__(self, dim, apply=None):
        super().__init__(dim, dim, matvec=apply)

    def _rmatvec(self, y):
        return self._matvec(y)


class GramOperator(HermitianOperator):
    """``A^H A`` for a given operator ``A`` (positive semidefinite)."""

    def __init__(self, op):
        self.op = op
        super().__init__(op.domain_dim)

    def _matvec(self, x):
        return self.op.gram(x)


class MatrixHermitianOperator(HermitianOperator):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.complex128)
        n, m = self.matrix.shape
        if n != m:
            raise ContractError("Hermitian operator must be square")
        super().__init__(n)

    def _matvec(self, x):
        return self.matrix @ x


def gram_apply(op, x):
    """Return ``A^H (A x)``."""
    x = as_complex_vector(x, op.domain_dim)
    return np.asarray(op.gram(x), dtype=np.complex128)


class PowerResult(NamedTuple):
    lambda_max: float
    n_iter: int
    converged: bool


def power_method(op, tol=1e-8, max_iter=1000, seed=0, history=None):
    """Largest eigenvalue of a Hermitian PSD operator.

    Starts from a seeded complex Gaussian vector and stops when successive
    Rayleigh quotients agree to ``tol`` relative. If ``history`` is a list,
    every Rayleigh quotient is appended to it.

    Returns
    -------
    PowerResult
        ``(lambda_max, n_iter, converged)``; on exhaustion the last
        estimate is returned with ``converged=False``.
    """
    if not tol > 0:
        raise ContractError("tol must be > 0")
    rng = check_random_state(seed)
    n = op.domain_dim
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam_prev = None
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = op.apply(x)
        lam = float(np.real(inner(x, y)))
        if history is not None:
            history.append(lam)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return PowerResult(0.0, it, True)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return PowerResult(lam, it, True)
        lam_prev = lam
        x = y / ny
    return PowerResult(lam, max_iter, False)


def materialize_dense(op, max_entries=DEFAULT_MAX_ENTRIES):
    """Dense matrix whose column j is ``op.apply(e_j)``."""
    entries = op.range_dim * op.domain_dim
    if entries > max_entries:
        raise ContractError(
            f"dense materialization needs {entries} entries, "
            f"cap is {max_entries}")
    out = np.empty((op.range_dim, op.domain_dim), dtype=np.complex128)
    e = np.zeros(op.domain_dim, dtype=np.complex128)
    for j in range(op.domain_dim):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


def weighted_norm_sq(v, P):
    """``v^H P^{-1} v`` for a dense Hermitian positive definite ``P``."""
    P = np.asarray(P, dtype=np.complex128)
    n = P.shape[0]
    v = as_complex_vector(v, n, name="v")
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("P is not positive definite") from exc
    threshold = 1e-12 * abs(np.trace(P).real) / n
    if np.min(np.abs(np.diag(L))) ** 2 <= threshold:
        raise np.linalg.LinAlgError("P is numerically singular")
    w = np.linalg.solve(L, v)
    return float(np.real(inner(w, w)))


def adjoint_mismatch(op, n_probes=100, seed=0):
    """Largest relative gap between ``<Ax, z>`` and ``<x, A^H z>``."""
    rng = check_random_state(seed)
    worst = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(op.domain_dim) + 1j * rng.standard_normal(op.domain_dim)
        z = rng.standard_normal(op.range_dim) + 1j * rng.standard_normal(op.range_dim)
        Ax = op.apply(x)
        AHz = op.adjoint(z)
        lhs = inner(Ax, z)
        rhs = inner(x, AHz)
        scale = np.linalg.norm(Ax) * np.linalg.norm(z) + np.linalg.norm(x) * np.linalg.norm(AHz)
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def hermitian_mismatch(op, n_probes=100, seed=0):
    """Largest relative gap between ``<Hx, y>`` and ``conj(<Hy, x>)``."""
    rng = check_random_state(seed)
    worst = 0.0
    n = op.domain_dim
    for _ in range(n_probes):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        Hx = op.apply(x)
        Hy = op.apply(y)
        scale = np.linalg.norm(Hx) * np.linalg.norm(y) + np.linalg.norm(Hy) * np.linalg.norm(x)
        if scale > 0:
            worst = max(worst, abs(inner(Hx, y) - np.conj(inner(Hy, x))) / scale)
    return worst
