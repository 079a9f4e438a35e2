"""Fixed polynomial and dynamic rank-1 preconditioners.

A polynomial preconditioner is ``P = sum_g p_g (alpha G)^(g-1)`` with
``G = A^H A``. The dynamic one is the zero-memory self-scaling Hermitian
rank-1 (ZMSHR1) quasi-Newton estimate ``P = tau I + u u^H / <s - tau v, v>``
of the inverse Hessian, rebuilt from the last step and gradient change.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import polynomial as npoly

from ._validation import ContractError, as_complex_vector, check_positive
from .operators import inner

ETA_GRID_POINTS = 10001


class DegenerateStepError(ArithmeticError):
    """The step ``s = x_k - x_{k-1}`` is numerically zero."""


class IndefinitePreconditionerError(ValueError):
    """The polynomial is not positive on the spectrum interval."""


def binomial_coeffs(gamma):
    """``p_g = C(gamma, g) (-1)^(g-1)`` for ``g = 1..gamma``."""
    if gamma < 1:
        raise ContractError("gamma must be >= 1")
    return [float(math.comb(gamma, g) * (-1) ** (g - 1)) for g in range(1, gamma + 1)]


def cheb2_coeffs():
    """The two-term Chebyshev instance ``P = 4 - (10/3) alpha A^H A``."""
    return [4.0, -10.0 / 3.0]


def chebyshev_coeffs(gamma, lam_min, lam_max, alpha=1.0):
    """Coefficients of the standard Chebyshev polynomial preconditioner.

    The residual ``1 - t p(t)`` equals ``T_gamma`` mapped onto
    ``[alpha lam_min, alpha lam_max]`` and normalized to one at ``t = 0``,
    which minimizes its maximum modulus on that interval. On ``[0, 1]`` with
    ``gamma = 2`` this gives ``p(t) = 8 - 8t``.
    """
    if gamma < 1:
        raise ContractError("gamma must be >= 1")
    a, b = alpha * lam_min, alpha * lam_max
    if not 0 <= a < b:
        raise ContractError("need 0 <= lam_min < lam_max")
    cheb = Chebyshev.basis(gamma, domain=[a, b])
    resid = cheb.convert(kind=np.polynomial.Polynomial).coef
    resid = resid / resid[0]
    # 1 - resid has zero constant term; divide by t
    p = -resid[1:]
    return [float(c) for c in p]


cheb_standard_coeffs = chebyshev_coeffs


def poly_eval(coeffs, t):
    """Evaluate ``p(t) = sum_g coeffs[g-1] t^(g-1)``."""
    return npoly.polyval(t, np.asarray(coeffs, dtype=np.float64))


class PolynomialPreconditioner:
    """``P = sum_g p_g (alpha G)^(g-1)`` for a Hermitian ``gram`` operator.

    ``apply`` uses Horner's rule and costs ``gamma - 1`` gram products; the
    running total is kept in ``n_gram`` on the instance that performed them.
    """

    def __init__(self, coeffs, alpha, gram):
        coeffs = [float(c) for c in coeffs]
        if len(coeffs) < 1:
            raise ContractError("need at least one coefficient")
        self.coeffs = tuple(coeffs)
        self.alpha = check_positive(alpha, "alpha")
        self.gram = gram

    @property
    def gamma(self):
        return len(self.coeffs)

    def apply(self, v, counter=None):
        v = as_complex_vector(v, self.gram.domain_dim, name="v")
        w = self.coeffs[-1] * v
        for c in reversed(self.coeffs[:-1]):
            w = c * v + self.alpha * self.gram.apply(w)
            if counter is not None:
                counter.add_gram()
        return w

    def __call__(self, v):
        return self.apply(v)

    def scalar(self, t):
        return poly_eval(self.coeffs, t)

    def __repr__(self):
        return f"PolynomialPreconditioner(coeffs={list(self.coeffs)}, alpha={self.alpha})"


def poly_apply(P, v, counter=None):
    return P.apply(v, counter=counter)


def eta_norm_inv(P, lambda_max, n_grid=ETA_GRID_POINTS):
    """Upper bound on ``||P^{-1}||_2`` from ``min p(t)`` on ``[0, alpha lambda_max]``."""
    t = np.linspace(0.0, P.alpha * lambda_max, n_grid)
    pmin = float(np.min(poly_eval(P.coeffs, t)))
    if pmin <= 0:
        raise IndefinitePreconditionerError(
            f"p(t) reaches {pmin:.3g} on [0, {P.alpha * lambda_max:.3g}]; P is not positive")
    return 1.0 / pmin


def _feasible(s, m, a, ss, theta1, theta2):
    v = a * s + (1.0 - a) * m
    sv = float(np.real(inner(s, v)))
    if sv / ss < theta1:
        return False
    if sv <= 0:
        return False
    vv = float(np.real(inner(v, v)))
    return vv / sv <= theta2


def search_a(s, m, theta1, theta2):
    """Smallest ``a`` in [0, 1] making ``v = a s + (1 - a) m`` well scaled.

    Feasible means ``theta1 <= Re<s, v> / <s, s>`` and
    ``<v, v> / Re<s, v> <= theta2``. The grid ``0, 0.01, ..., 1`` is scanned
    first, then the interval below the first feasible point is rescanned at
    ``1e-4`` resolution. ``a = 1`` is always feasible.
    """
    s = np.asarray(s, dtype=np.complex128)
    m = np.asarray(m, dtype=np.complex128)
    ss = float(np.real(inner(s, s)))
    if ss == 0.0:
        raise DegenerateStepError("zero step")
    coarse = None
    for j in range(101):
        if _feasible(s, m, j / 100, ss, theta1, theta2):
            coarse = j
            break
    if coarse is None:
        # only reachable through round-off at a = 1
        return 1.0
    if coarse == 0:
        return 0.0
    for i in range(1, 101):
        a = (100 * (coarse - 1) + i) / 10000
        if _feasible(s, m, a, ss, theta1, theta2):
            return a
    return coarse / 100


@dataclass(frozen=True)
class DynamicPreconditioner:
    """``P = tau I + u u^H / denom`` (rank-1 term absent when ``u`` is None)."""

    tau: float
    u: Optional[np.ndarray] = None
    denom: float = 0.0
    a: float = 0.0

    @classmethod
    def identity(cls):
        return cls(1.0)

    def apply(self, v):
        v = np.asarray(v, dtype=np.complex128)
        if self.u is None:
            return self.tau * v
        if v.shape != self.u.shape:
            raise ContractError(f"v has length {v.size}, expected {self.u.size}")
        return self.tau * v + self.u * (inner(self.u, v) / self.denom)

    def __call__(self, v):
        return self.apply(v)

    def eigenvalue_bounds(self):
        """``(min, max)`` eigenvalue; ``tau`` repeated plus ``tau + |u|^2 / denom``."""
        if self.u is None:
            return self.tau, self.tau
        top = self.tau + float(np.real(inner(self.u, self.u))) / self.denom
        return min(self.tau, top), max(self.tau, top)

    @property
    def eta(self):
        """``||P^{-1}||_2``."""
        return 1.0 / self.eigenvalue_bounds()[0]

    def to_dense(self, n):
        out = self.tau * np.eye(n, dtype=np.complex128)
        if self.u is not None:
            out += np.outer(self.u, self.u.conj()) / self.denom
        return out


def dynamic_apply(P, v):
    return P.apply(v)


def zmshr1_update(x_prev, x_cur, g_prev, g_cur, delta=1e-8, theta1=2e-6, theta2=200.0):
    """One ZMSHR1 update from the last step and gradient change.

    Raises
    ------
    DegenerateStepError
        When ``||x_cur - x_prev||`` is below ``1e-14 ||x_cur||``; the caller
        keeps its previous preconditioner.
    """
    if not delta > 0 or not 0 < theta1 < 1 or not theta2 > 1:
        raise ContractError("need delta > 0, theta1 in (0, 1), theta2 > 1")
    x_prev = np.asarray(x_prev, dtype=np.complex128)
    x_cur = np.asarray(x_cur, dtype=np.complex128)
    s = x_cur - x_prev
    m = np.asarray(g_cur, dtype=np.complex128) - np.asarray(g_prev, dtype=np.complex128)
    if s.shape != m.shape:
        raise ContractError("step and gradient change have different lengths")
    s_norm = np.linalg.norm(s)
    if s_norm == 0.0 or s_norm < 1e-14 * np.linalg.norm(x_cur):
        raise DegenerateStepError("step too small for a quasi-Newton update")
    if np.array_equal(s, m):
        # identity curvature: the formulas give a = 0, tau = 1, no rank-1 term,
        # but separate reductions over s and v can disagree in the last ulp
        return DynamicPreconditioner(1.0, None, 0.0, 0.0)

    a = search_a(s, m, theta1, theta2)
    v = a * s + (1.0 - a) * m
    ss = float(np.real(inner(s, s)))
    sv_c = inner(s, v)
    sv = float(np.real(sv_c))
    vv = float(np.real(inner(v, v)))
    ratio = ss / sv
    # ratio^2 - ss/vv = ss (ss vv - sv^2) / (sv^2 vv); the Cauchy-Schwarz gap
    # ss vv - |<s,v>|^2 is ss |v - proj_s v|^2, which avoids cancellation
    r = v - (sv_c / ss) * s
    gap = ss * float(np.real(inner(r, r))) + float(np.imag(sv_c)) ** 2
    root = math.sqrt(max(0.0, ss * gap / (sv * sv * vv)))
    tau = (ss / vv) / (ratio + root)

    w = s - tau * v
    c = float(np.real(inner(w, v)))
    # a correction at round-off level relative to s is noise, not curvature
    w_norm = np.linalg.norm(w)
    if w_norm <= 64 * np.finfo(float).eps * s_norm or c <= delta * w_norm * np.linalg.norm(v):
        return DynamicPreconditioner(tau, None, 0.0, a)
    return DynamicPreconditioner(tau, w, c, a)
