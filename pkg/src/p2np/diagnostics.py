"""Reconstruction metrics and convergence/stability checks.

Covers PSNR, the normalized fixed-point residual, the empirical rate,
the contraction factor ``(1 + eps) rho(I - alpha P A^H A)``, the stability
bound for dynamically preconditioned runs, the bounds on ZMSHR1
preconditioners and trace CSV output.
"""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import ContractError, as_complex_vector
from .operators import (GramOperator, HermitianOperator, materialize_dense,
                        power_method)
from .preconditioners import DynamicPreconditioner, PolynomialPreconditioner, poly_eval

CSV_HEADER = ("iter", "psnr_db", "E_xk", "grad_norm", "step_norm", "eta", "wall_ms")
DENSE_RATE_MAX_DIM = 1024


def psnr(xhat, xtrue, peak=1.0):
    """``10 log10(peak^2 / MSE)`` over complex values; ``inf`` when exact."""
    xhat = np.asarray(xhat, dtype=np.complex128)
    xtrue = np.asarray(xtrue, dtype=np.complex128)
    if xhat.size != xtrue.size or (xhat.ndim > 1 and xtrue.ndim > 1 and xhat.shape != xtrue.shape):
        raise ContractError(f"shape mismatch: {xhat.shape} vs {xtrue.shape}")
    if not peak > 0:
        raise ContractError("peak must be > 0")
    mse = float(np.sum(np.abs(xhat.reshape(-1) - xtrue.reshape(-1)) ** 2)) / xhat.size
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


def _apply_precond(P, g):
    if P is None:
        return g
    if isinstance(P, (PolynomialPreconditioner, DynamicPreconditioner)):
        return P.apply(g)
    if isinstance(P, np.ndarray):
        return P @ g
    return P(g)


def fixed_point_residual(x_k, model, y, d, P, alpha, sigma, x1_norm):
    """``||x_k - D(x_k - alpha P grad f(x_k))||^2 / ||x_1||^2``.

    ``P`` may be ``None`` (identity), a preconditioner object, a dense matrix
    or a callable.
    """
    if not x1_norm > 0:
        raise ContractError("normalizer ||x_1|| must be > 0")
    x = as_complex_vector(x_k, model.domain_dim)
    g = model.gram(x) - model.adjoint(as_complex_vector(y, model.range_dim, name="y"))
    shape = tuple(getattr(model, "grid_shape", (model.domain_dim,)))
    z = x - alpha * _apply_precond(P, g)
    out = np.asarray(d.denoise(z.reshape(shape), sigma)).reshape(-1)
    return float(np.linalg.norm(x - out) ** 2 / x1_norm ** 2)


def empirical_rate(trace, k):
    """``(||x_{k+2} - x_{k+1}|| / ||x_2 - x_1||)^(1/k)``.

    ``trace`` is a :class:`~p2np.solvers.SolveTrace` or a sequence of step
    norms ``||x_{j+1} - x_j||``. Returns ``nan`` when the first step is zero.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    steps = trace.column("step_norm") if hasattr(trace, "column") else np.asarray(trace, float)
    if len(steps) < k + 1:
        raise ContractError(f"need {k + 1} steps, trace has {len(steps)}")
    if steps[0] == 0:
        return float("nan")
    return float((steps[k] / steps[0]) ** (1.0 / k))


def gradient_bound(trace):
    """``(R, k)`` with ``R = max_k ||grad f(x_k)||`` and its 1-based index."""
    g = trace.column("grad_norm")
    k = int(np.argmax(g))
    return float(g[k]), k + 1


class RateBoundReport(NamedTuple):
    r0: float
    epsilon: float
    spectral_radius: float
    method: str


def _poly_rate(coeffs, t):
    return float(np.max(np.abs(1.0 - t * poly_eval(coeffs, t))))


def rate_bound(model, P, alpha, epsilon=0.0, method="auto", tol=1e-12, seed=0):
    """``r0 = (1 + eps) rho(I - alpha P A^H A)``.

    ``P`` is a :class:`PolynomialPreconditioner`, ``None`` (identity) or a
    dense matrix. For polynomials the iteration matrix is Hermitian, so the
    radius comes from the Gram spectrum mapped through ``1 - t p(t)``
    (``method="dense"``) or from power iteration on its square
    (``method="power"``). ``"auto"`` picks dense up to 1024 unknowns.
    Dense ``P`` is only supported on the dense path.
    """
    n = model.domain_dim
    if method == "auto":
        method = "dense" if n <= DENSE_RATE_MAX_DIM else "power"
    if P is None:
        coeffs = (1.0,)
    elif isinstance(P, PolynomialPreconditioner):
        coeffs = P.coeffs
    else:
        coeffs = None

    if coeffs is None:
        P = np.asarray(P, dtype=np.complex128)
        if n > DENSE_RATE_MAX_DIM:
            raise ContractError("dense preconditioners are limited to 1024 unknowns")
        G = materialize_dense(GramOperator(model))
        M = np.eye(n) - alpha * P @ G
        rho = float(np.max(np.abs(np.linalg.eigvals(M))))
        return RateBoundReport((1 + epsilon) * rho, epsilon, rho, "dense-oracle")

    if method == "dense":
        G = materialize_dense(GramOperator(model))
        lam = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
        rho = _poly_rate(coeffs, alpha * lam)
        return RateBoundReport((1 + epsilon) * rho, epsilon, rho, "dense-oracle")
    if method != "power":
        raise ContractError(f"unknown method {method!r}")

    Pp = PolynomialPreconditioner(coeffs, alpha, GramOperator(model))

    def iteration(v):
        return v - alpha * Pp.apply(model.gram(v))

    def squared(v):
        return iteration(iteration(v))

    res = power_method(HermitianOperator(n, squared), tol=tol, max_iter=20000, seed=seed)
    rho = math.sqrt(max(res.lambda_max, 0.0))
    return RateBoundReport((1 + epsilon) * rho, epsilon, rho, "power-iteration")


@dataclass(frozen=True)
class StabilityBoundInputs:
    """Constants of the stability bound for dynamically preconditioned runs.

    ``q`` is the contraction factor of the reference preconditioner ``P*``,
    ``lambda_star`` bounds ``P*`` from above, ``R`` bounds the gradient norm
    along the run and ``dist0 = ||x_1 - x*||``.
    """

    q: float
    lambda_star: float
    R: float
    delta: float
    theta1: float
    alpha: float
    epsilon: float
    dist0: float

    def __post_init__(self):
        for name in ("lambda_star", "delta", "theta1", "alpha"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")
        for name in ("q", "R", "epsilon", "dist0"):
            if not getattr(self, name) >= 0:
                raise ContractError(f"{name} must be >= 0")

    @property
    def beta(self):
        """Upper bound on ``max ||P_m - P*||``."""
        return (self.delta + 1) / (self.delta * self.theta1) + self.lambda_star

    @property
    def asymptotic_term(self):
        return ((1 + self.epsilon) * self.alpha
                * (self.delta + 1 + self.delta * self.theta1 * self.lambda_star) * self.R
                / (self.delta * self.theta1 * (1 - self.q)))


class InapplicableBoundError(ValueError):
    pass


def stability_bound(inputs, k):
    """Bound on ``||x_{k+1} - x*||``: ``q^k ||x_1 - x*|| + asymptotic term``."""
    if not inputs.q < 1:
        raise InapplicableBoundError(f"q = {inputs.q} >= 1, the bound does not apply")
    return inputs.q ** k * inputs.dist0 + inputs.asymptotic_term


class Lemma1Report(NamedTuple):
    passed: bool
    tau: float
    eig_min: float
    eig_max: float
    tau_lower_margin: float
    tau_upper_margin: float
    eig_lower_margin: float
    eig_upper_margin: float


def lemma1_monitor(P, delta, theta1, theta2, tol=0.0):
    """Check a ZMSHR1 state against its guaranteed bounds.

    ``1/(2 theta2) < tau <= 1/theta1`` and every eigenvalue of ``P`` in
    ``[1/(2 theta2), (delta+1)/(delta theta1)]``. Eigenvalues come from the
    closed form: ``tau`` (multiplicity N-1) and ``tau + |u|^2 / denom``.
    Margins are positive when satisfied; ``passed`` allows ``-tol``.
    """
    lo = 1.0 / (2.0 * theta2)
    hi_tau = 1.0 / theta1
    hi_eig = (delta + 1.0) / (delta * theta1)
    if P.u is not None and not P.denom > 0:
        eig_min = eig_max = float("nan")
    else:
        eig_min, eig_max = P.eigenvalue_bounds()
    margins = (P.tau - lo, hi_tau - P.tau, eig_min - lo, hi_eig - eig_max)
    passed = all(m >= -tol for m in margins)
    return Lemma1Report(bool(passed), float(P.tau), float(eig_min), float(eig_max), *map(float, margins))


def _fmt(v):
    return repr(float(v))


def trace_to_csv(trace, path, walltime=True):
    """Write one row per iteration under the header ``CSV_HEADER``.

    Floats use ``repr`` so they parse back exactly. With ``walltime=False``
    the wall-clock column is written as 0, making files byte-reproducible.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in trace.records:
            w.writerow([r.iter, _fmt(r.psnr), _fmt(r.E), _fmt(r.grad_norm), _fmt(r.step_norm),
                        _fmt(r.eta), _fmt(r.wall_ms if walltime else 0.0)])


def read_trace_csv(path):
    """Parse a trace CSV into a dict of column name -> numpy array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ContractError(f"{path}: not a trace CSV")
    cols = {name: [] for name in CSV_HEADER}
    for row in rows[1:]:
        for name, val in zip(CSV_HEADER, row):
            cols[name].append(int(val) if name == "iter" else float(val))
    return {name: np.asarray(v, dtype=int if name == "iter" else float)
            for name, v in cols.items()}
