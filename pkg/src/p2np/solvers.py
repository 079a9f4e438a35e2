"""PnP-ISTA, PnP-ADMM and preconditioned PnP reconstruction loops.

All solvers minimize ``f(x) = 0.5 ||A x - y||^2`` plus an implicit prior
given by a denoiser, start from ``x_1 = A^H y`` and return a
:class:`SolveTrace`. Gradients are formed as ``G x - A^H y`` with
``A^H y`` computed once, so each gradient costs one Gram product.
"""

import math
import time
import warnings
import weakref
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from ._validation import ContractError, as_complex_vector, check_positive
from .operators import GramOperator, inner, power_method
from .preconditioners import (DegenerateStepError, DynamicPreconditioner,
                              IndefinitePreconditionerError, eta_norm_inv,
                              zmshr1_update)


class DivergenceError(ArithmeticError):
    """Iterates blew up; ``iteration`` and the partial ``trace`` are attached."""

    def __init__(self, message, iteration, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


class ConfigurationError(ValueError):
    pass


class CGBreakdownError(ArithmeticError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class SolveConfig:
    """Knobs shared by all solvers.

    ``alpha=None`` selects ``1 / ||A^H A||_2`` by power iteration. ``e_tol``
    stops early once the fixed-point residual falls below it. The ZMSHR1
    defaults are ``delta=1e-8, theta1=2e-6, theta2=200``.

    ``quasi_newton_scaling="normalized"`` feeds ZMSHR1 the gradient of
    ``alpha f``, i.e. the problem rescaled so that ``||A^H A||_2 = 1``;
    ``"raw"`` uses the gradient of ``f`` as is. The two coincide when
    ``alpha = 1``.
    """

    max_iters: int = 200
    alpha: Optional[float] = None
    sigma: Optional[float] = None
    cg_tol: float = 1e-10
    cg_max_iter: int = 200
    delta: float = 1e-8
    theta1: float = 2e-6
    theta2: float = 200.0
    e_tol: Optional[float] = None
    keep_iterates: bool = False
    keep_preconditioners: bool = False
    power_tol: float = 1e-10
    power_max_iter: int = 5000
    seed: int = 0
    divergence_factor: float = 1e6
    quasi_newton_scaling: str = "normalized"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        if self.quasi_newton_scaling not in ("normalized", "raw"):
            raise ContractError("quasi_newton_scaling must be 'normalized' or 'raw'")
        if self.alpha is not None:
            check_positive(self.alpha, "alpha")


@dataclass
class IterationRecord:
    iter: int
    psnr: float
    E: float
    grad_norm: float
    step_norm: float
    eta: float
    wall_ms: float
    n_gram: int
    cg_iters: int = 0
    cg_converged: bool = True


@dataclass
class SolveTrace:
    """Per-iteration record of a solve.

    Record ``k`` describes the step from ``x_k`` to ``x_{k+1}``: ``E`` and
    ``grad_norm`` are evaluated at ``x_k``, ``psnr`` at ``x_{k+1}``.
    """

    solver: str
    alpha: float
    x_init: np.ndarray
    records: List[IterationRecord] = field(default_factory=list)
    x_final: Optional[np.ndarray] = None
    iterates: Optional[list] = None
    preconditioners: Optional[list] = None
    stop_reason: str = "max_iters"

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def n_gram_total(self):
        return int(sum(r.n_gram for r in self.records))


class _Counter:
    def __init__(self):
        self.n_gram = 0

    def add_gram(self, n=1):
        self.n_gram += n


_alpha_cache = weakref.WeakKeyDictionary()


def step_size(model, tol=1e-10, seed=0, max_iter=5000):
    """``alpha = 1 / ||A^H A||_2`` by power iteration, cached per model."""
    per_model = _alpha_cache.setdefault(model, {})
    key = (tol, seed, max_iter)
    if key not in per_model:
        res = power_method(GramOperator(model), tol=tol, max_iter=max_iter, seed=seed)
        if not res.converged:
            warnings.warn(f"power method stopped after {res.n_iter} iterations "
                          "without converging", ConvergenceWarning)
        if res.lambda_max <= 0:
            raise ContractError("A^H A is zero; no step size")
        per_model[key] = 1.0 / res.lambda_max
    return per_model[key]


def init_x(model, y):
    """``A^H y``, the starting image for every solver."""
    return model.adjoint(as_complex_vector(y, model.range_dim, name="y"))


class CGResult(NamedTuple):
    x: np.ndarray
    n_iter: int
    converged: bool
    residual: float
    n_apply: int


def cg_solve(op, rhs, tol=1e-10, max_iter=200, x0=None):
    """Conjugate gradients for a Hermitian positive definite ``op``.

    Stops once ``||op(x) - rhs|| <= tol ||rhs||``. A warm start ``x0`` costs
    one extra operator application (counted in ``n_apply``).
    """
    b = as_complex_vector(rhs, op.domain_dim, name="rhs")
    bnorm = np.linalg.norm(b)
    n_apply = 0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = as_complex_vector(x0, op.domain_dim, name="x0").copy()
        r = b - op.apply(x)
        n_apply += 1
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, True, 0.0, n_apply)
    rr = float(np.real(inner(r, r)))
    if math.sqrt(rr) <= tol * bnorm:
        return CGResult(x, 0, True, math.sqrt(rr) / bnorm, n_apply)
    p = r.copy()
    for it in range(1, max_iter + 1):
        Ap = op.apply(p)
        n_apply += 1
        curv = float(np.real(inner(p, Ap)))
        if curv <= 0.0:
            raise CGBreakdownError(f"nonpositive curvature {curv:.3g} at iteration {it}")
        step = rr / curv
        x = x + step * p
        r = r - step * Ap
        rr_new = float(np.real(inner(r, r)))
        if math.sqrt(rr_new) <= tol * bnorm:
            return CGResult(x, it, True, math.sqrt(rr_new) / bnorm, n_apply)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, max_iter, False, math.sqrt(rr) / bnorm, n_apply)


def _shape(model):
    return tuple(getattr(model, "grid_shape", (model.domain_dim,)))


def _denoise(d, v, shape, sigma):
    out = d.denoise(v.reshape(shape), sigma)
    return np.asarray(out, dtype=np.complex128).reshape(-1)


def _psnr(x, x_true):
    if x_true is None:
        return float("nan")
    from .diagnostics import psnr
    return psnr(x, x_true)


def _snapshot(x):
    out = x.copy()
    out.setflags(write=False)
    return out


class _Run:
    """Bookkeeping shared by the solver loops."""

    def __init__(self, name, model, y, cfg, x_true, callback, alpha=None):
        self.model = model
        self.shape = _shape(model)
        self.cfg = cfg
        self.callback = callback
        self.counter = _Counter()
        self.AHy = init_x(model, y)
        self.x_true = None if x_true is None else np.asarray(x_true, dtype=np.complex128).reshape(-1)
        if alpha is None:
            alpha = cfg.alpha if cfg.alpha is not None else step_size(
                model, cfg.power_tol, cfg.seed, cfg.power_max_iter)
        self.alpha = float(alpha)
        x1 = self.AHy.copy()
        self.x1_norm = float(np.linalg.norm(x1))
        self.trace = SolveTrace(name, self.alpha, _snapshot(x1.reshape(self.shape)))
        if cfg.keep_iterates:
            self.trace.iterates = [_snapshot(x1)]
        if cfg.keep_preconditioners:
            self.trace.preconditioners = []
        self.t0 = time.perf_counter()
        self.k = 0
        if callback is not None:
            callback(1, _snapshot(x1))

    def gram(self, v):
        self.counter.add_gram()
        return self.model.gram(v)

    def grad(self, x):
        return self.gram(x) - self.AHy

    def record(self, x_old, x_new, grad_norm, eta, n_gram, resid=None,
               cg_iters=0, cg_converged=True):
        """Append a record for the step ``x_old -> x_new``; True means stop."""
        self.k += 1
        if not np.all(np.isfinite(x_new)) or (
                np.linalg.norm(x_new) > self.cfg.divergence_factor * max(self.x1_norm, 1e-300)):
            raise DivergenceError(f"{self.trace.solver} diverged at iteration {self.k}",
                                  self.k, self.trace)
        step = float(np.linalg.norm(x_new - x_old))
        if resid is None:
            resid = step
        E = resid ** 2 / self.x1_norm ** 2 if self.x1_norm > 0 else float("nan")
        self.trace.records.append(IterationRecord(
            iter=self.k, psnr=_psnr(x_new, self.x_true), E=E, grad_norm=float(grad_norm),
            step_norm=step, eta=float(eta),
            wall_ms=1000.0 * (time.perf_counter() - self.t0), n_gram=n_gram,
            cg_iters=cg_iters, cg_converged=cg_converged))
        if self.trace.iterates is not None:
            self.trace.iterates.append(_snapshot(x_new))
        if self.callback is not None:
            self.callback(self.k + 1, _snapshot(x_new))
        if self.cfg.e_tol is not None and E <= self.cfg.e_tol:
            self.trace.stop_reason = "e_tol"
            return True
        return False

    def finish(self, x):
        self.trace.x_final = _snapshot(x.reshape(self.shape))
        return self.trace


def _prox_gradient(name, model, y, d, cfg, x_true, callback, direction, alpha=None):
    """``x_{k+1} = D(x_k - alpha * direction(k, x_k, g_k))``.

    ``direction`` returns the preconditioned gradient and the current
    ``eta = ||P^{-1}||_2``.
    """
    run = _Run(name, model, y, cfg, x_true, callback, alpha)
    x = run.AHy.copy()
    for k in range(1, cfg.max_iters + 1):
        before = run.counter.n_gram
        g = run.grad(x)
        pg, eta = direction(k, x, g, run)
        x_new = _denoise(d, x - run.alpha * pg, run.shape, cfg.sigma)
        stop = run.record(x, x_new, np.linalg.norm(g), eta, run.counter.n_gram - before)
        x = x_new
        if stop:
            break
    return run.finish(x)


def pnp_ista(model, y, d, cfg=None, x_true=None, callback=None):
    """PnP-ISTA: ``x_{k+1} = D(x_k - alpha grad f(x_k))``."""
    cfg = cfg or SolveConfig()
    return _prox_gradient("pnp-ista", model, y, d, cfg, x_true, callback,
                          lambda k, x, g, run: (g, 1.0))


def p2np_fixed(model, y, d, P, cfg=None, x_true=None, callback=None, name="p2np-fixed"):
    """Preconditioned PnP with a fixed polynomial preconditioner ``P``.

    ``P.alpha`` is used as the step size so that ``P`` and the step agree.
    Each iteration costs ``P.gamma`` Gram products.
    """
    cfg = cfg or SolveConfig()
    if P.gram.domain_dim != model.domain_dim:
        raise ContractError("preconditioner was built for a different model")
    try:
        lam_max = 1.0 / step_size(model, cfg.power_tol, cfg.seed, cfg.power_max_iter)
        eta = eta_norm_inv(P, lam_max)
    except IndefinitePreconditionerError as exc:
        warnings.warn(str(exc))
        eta = float("nan")

    def direction(k, x, g, run):
        return P.apply(g, counter=run.counter), eta

    return _prox_gradient(name, model, y, d, cfg, x_true, callback, direction,
                          alpha=P.alpha)


def p2np_dynamic(model, y, d, cfg=None, x_true=None, callback=None):
    """Preconditioned PnP with ZMSHR1 preconditioners rebuilt every step.

    The first step is unpreconditioned. Requires a normalization-equivariant
    denoiser so that the varying ``eta_k`` needs no retuning of ``sigma``.
    """
    cfg = cfg or SolveConfig()
    if not getattr(d, "norm_equivariant", False):
        raise ConfigurationError(
            "dynamic preconditioning needs a normalization-equivariant denoiser")
    state = {"P": DynamicPreconditioner.identity(), "x": None, "g": None}

    def direction(k, x, g, run):
        gs = run.alpha * g if cfg.quasi_newton_scaling == "normalized" else g
        if k >= 2:
            try:
                state["P"] = zmshr1_update(state["x"], x, state["g"], gs,
                                           cfg.delta, cfg.theta1, cfg.theta2)
            except DegenerateStepError:
                pass
        state["x"], state["g"] = x, gs
        P = state["P"]
        if run.trace.preconditioners is not None:
            run.trace.preconditioners.append(P)
        return P.apply(g), P.eta

    return _prox_gradient("p2np-dynamic", model, y, d, cfg, x_true, callback, direction)


class _ShiftedGram(GramOperator):
    """``A^H A + I``, counting Gram products on a solver counter."""

    def __init__(self, op, run):
        super().__init__(op)
        self.run = run

    def _matvec(self, x):
        return self.run.gram(x) + x


def pnp_admm(model, y, d, cfg=None, x_true=None, callback=None):
    """PnP-ADMM in scaled form.

    ``x_k = argmin f(x) + 0.5 ||x - (v_{k-1} - u_{k-1})||^2`` by warm-started
    CG, ``v_k = D(x_k + u_{k-1})`` and ``u_k = u_{k-1} + x_k - v_k``, with
    ``v_0 = A^H y`` and ``u_0 = 0``. The reported iterate is ``v_k``; ``E``
    records the normalized primal residual ``||x_k - v_k||^2``.
    """
    cfg = cfg or SolveConfig()
    run = _Run("pnp-admm", model, y, cfg, x_true, callback, alpha=float("nan"))
    op = _ShiftedGram(model, run)
    v = run.AHy.copy()
    u = np.zeros_like(v)
    x = v.copy()
    for k in range(1, cfg.max_iters + 1):
        before = run.counter.n_gram
        center = v - u
        rhs = run.AHy + center
        res = cg_solve(op, rhs, cfg.cg_tol, cfg.cg_max_iter, x0=x)
        if not res.converged:
            warnings.warn(f"CG did not converge at outer iteration {k} "
                          f"(residual {res.residual:.2e})", ConvergenceWarning)
        x = res.x
        grad_norm = _admm_grad_norm(run, x)
        v_new = _denoise(d, x + u, run.shape, cfg.sigma)
        u = u + x - v_new
        stop = run.record(v, v_new, grad_norm, float("nan"), run.counter.n_gram - before,
                          resid=float(np.linalg.norm(x - v_new)),
                          cg_iters=res.n_iter, cg_converged=res.converged)
        v = v_new
        if stop:
            break
    return run.finish(v)


def _admm_grad_norm(run, x):
    # uncounted: diagnostic only, not part of the algorithm's cost
    return float(np.linalg.norm(run.model.gram(x) - run.AHy))
