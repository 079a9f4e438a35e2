"""Estimator-style wrappers around the solvers.

Each estimator holds a forward model and a denoiser as hyper-parameters.
``fit(y)`` reconstructs from k-space data ``y`` and stores the image in
``x_``, the per-iteration record in ``trace_`` and the step size in
``alpha_``. ``transform(y)`` reconstructs without touching fitted state and
``score(y, x_true)`` returns the PSNR of that reconstruction.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ContractError
from .diagnostics import psnr
from .operators import GramOperator
from .preconditioners import (PolynomialPreconditioner, binomial_coeffs, cheb2_coeffs)
from .solvers import (SolveConfig, p2np_dynamic, p2np_fixed, pnp_admm, pnp_ista,
                      step_size)


class _Reconstructor(TransformerMixin, BaseEstimator):
    def _config(self):
        return SolveConfig(max_iters=self.max_iters, alpha=self.alpha, sigma=self.sigma,
                           e_tol=self.e_tol, seed=self.seed)

    def _check(self):
        if self.model is None or self.denoiser is None:
            raise ContractError(f"{type(self).__name__} needs a model and a denoiser")

    def _solve(self, y, x_true=None):
        raise NotImplementedError

    def fit(self, y, x_true=None):
        self._check()
        trace = self._solve(y, x_true)
        self.trace_ = trace
        self.x_ = trace.x_final
        self.alpha_ = trace.alpha
        self.n_iter_ = len(trace)
        return self

    def transform(self, y):
        self._check()
        return self._solve(y).x_final

    def fit_transform(self, y, x_true=None, **fit_params):
        return self.fit(y, x_true).x_

    def score(self, y, x_true):
        """PSNR (dB) of the reconstruction of ``y`` against ``x_true``."""
        return psnr(self.transform(y), x_true)

    @property
    def psnr_(self):
        check_is_fitted(self, "trace_")
        return self.trace_.column("psnr")


class PnPISTA(_Reconstructor):
    def __init__(self, model=None, denoiser=None, max_iters=100, alpha=None, sigma=None,
                 e_tol=None, seed=0):
        self.model = model
        self.denoiser = denoiser
        self.max_iters = max_iters
        self.alpha = alpha
        self.sigma = sigma
        self.e_tol = e_tol
        self.seed = seed

    def _solve(self, y, x_true=None):
        return pnp_ista(self.model, y, self.denoiser, self._config(), x_true)


class PnPADMM(_Reconstructor):
    def __init__(self, model=None, denoiser=None, max_iters=100, sigma=None, cg_tol=1e-10,
                 cg_max_iter=200, e_tol=None, seed=0):
        self.model = model
        self.denoiser = denoiser
        self.max_iters = max_iters
        self.sigma = sigma
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.e_tol = e_tol
        self.seed = seed

    def _config(self):
        return SolveConfig(max_iters=self.max_iters, sigma=self.sigma, cg_tol=self.cg_tol,
                           cg_max_iter=self.cg_max_iter, e_tol=self.e_tol, seed=self.seed)

    def _solve(self, y, x_true=None):
        return pnp_admm(self.model, y, self.denoiser, self._config(), x_true)


class P2nPFixed(_Reconstructor):
    """``preconditioner`` is ``"cheb2"``, ``"binomial"`` (with ``gamma``) or a coefficient list."""

    def __init__(self, model=None, denoiser=None, preconditioner="cheb2", gamma=2,
                 max_iters=100, alpha=None, sigma=None, e_tol=None, seed=0):
        self.model = model
        self.denoiser = denoiser
        self.preconditioner = preconditioner
        self.gamma = gamma
        self.max_iters = max_iters
        self.alpha = alpha
        self.sigma = sigma
        self.e_tol = e_tol
        self.seed = seed

    def _coeffs(self):
        if isinstance(self.preconditioner, str):
            if self.preconditioner == "cheb2":
                return cheb2_coeffs()
            if self.preconditioner == "binomial":
                return binomial_coeffs(self.gamma)
            raise ContractError(f"unknown preconditioner {self.preconditioner!r}")
        return list(self.preconditioner)

    def _solve(self, y, x_true=None):
        alpha = self.alpha if self.alpha is not None else step_size(self.model, seed=self.seed)
        P = PolynomialPreconditioner(self._coeffs(), alpha, GramOperator(self.model))
        return p2np_fixed(self.model, y, self.denoiser, P, self._config(), x_true)


class P2nPDynamic(_Reconstructor):
    def __init__(self, model=None, denoiser=None, max_iters=100, alpha=None, sigma=None,
                 delta=1e-8, theta1=2e-6, theta2=200.0, e_tol=None, seed=0):
        self.model = model
        self.denoiser = denoiser
        self.max_iters = max_iters
        self.alpha = alpha
        self.sigma = sigma
        self.delta = delta
        self.theta1 = theta1
        self.theta2 = theta2
        self.e_tol = e_tol
        self.seed = seed

    def _config(self):
        cfg = super()._config()
        cfg.delta, cfg.theta1, cfg.theta2 = self.delta, self.theta1, self.theta2
        return cfg

    def _solve(self, y, x_true=None):
        return p2np_dynamic(self.model, y, self.denoiser, self._config(), x_true)


def reconstruction_error(estimator, x_true):
    """``||x_ - x_true||`` for a fitted estimator."""
    check_is_fitted(estimator, "x_")
    return float(np.linalg.norm(np.asarray(estimator.x_) - np.asarray(x_true)))
