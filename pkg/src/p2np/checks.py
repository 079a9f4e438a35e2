"""Quick self-checks of operator, denoiser and preconditioner invariants."""

from typing import Callable, List, NamedTuple

import numpy as np

from .denoisers import ConvDenoiser, IdentityDenoiser, check_norm_equivariance, estimate_lipschitz
from .diagnostics import lemma1_monitor
from .mri import (ForwardModel, acceleration_factor_radial, acceleration_factor_spiral,
                  make_radial_trajectory, make_spiral_trajectory, synth_sensitivity_maps)
from .operators import GramOperator, adjoint_mismatch, materialize_dense
from .phantom import make_phantom
from .preconditioners import (PolynomialPreconditioner, binomial_coeffs, cheb2_coeffs,
                              eta_norm_inv, zmshr1_update)
from .solvers import SolveConfig, p2np_fixed, pnp_ista, step_size


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _small_model(n=12, spokes=9, readout=24, coils=3):
    return ForwardModel(make_radial_trajectory(spokes, readout), synth_sensitivity_maps(coils, n, n))


def check_adjoint():
    worst = 0.0
    for model in (_small_model(), ForwardModel(make_spiral_trajectory(3, 64, 12),
                                               synth_sensitivity_maps(2, 12, 12))):
        worst = max(worst, adjoint_mismatch(model, n_probes=20, seed=1))
    return worst < 1e-10, f"max relative adjoint mismatch {worst:.2e}"


def check_gram():
    model = _small_model()
    A = materialize_dense(model)
    G = materialize_dense(GramOperator(model))
    err = np.max(np.abs(G - A.conj().T @ A))
    return err < 1e-10, f"Toeplitz Gram vs dense A^H A: {err:.2e}"


def check_poly_identities():
    model = _small_model()
    alpha = step_size(model)
    lam = 1.0 / alpha
    eta_b = eta_norm_inv(PolynomialPreconditioner(binomial_coeffs(2), alpha, GramOperator(model)), lam)
    eta_c = eta_norm_inv(PolynomialPreconditioner(cheb2_coeffs(), alpha, GramOperator(model)), lam)
    ok = (binomial_coeffs(2) == [2.0, -1.0] and abs(eta_b - 1) < 1e-9 and abs(eta_c - 1.5) < 1e-9)
    return ok, f"eta binomial {eta_b:.12f}, eta cheb2 {eta_c:.12f}"


def check_equivariance():
    rng = np.random.default_rng(0)
    d = ConvDenoiser(1.0, (16, 16))
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        mu = rng.uniform(1e-3, 10)
        delta = complex(rng.standard_normal(), rng.standard_normal())
        worst = max(worst, check_norm_equivariance(d, x, mu, delta))
    lip = estimate_lipschitz(d, (16, 16)).value
    ok = worst < 1e-12 and abs(lip - 1) < 1e-10
    return ok, f"max deviation {worst:.2e}, Lipschitz {lip:.12f}"


def check_zmshr1_bounds(n_updates=200):
    rng = np.random.default_rng(0)
    delta, theta1, theta2 = 1e-8, 2e-6, 200.0
    worst = np.inf
    for _ in range(n_updates):
        n = int(rng.integers(2, 12))
        B = rng.standard_normal((n + 2, n)) + 1j * rng.standard_normal((n + 2, n))
        G = B.conj().T @ B
        x0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x1 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        P = zmshr1_update(x0, x1, G @ x0, G @ x1, delta, theta1, theta2)
        rep = lemma1_monitor(P, delta, theta1, theta2)
        worst = min(worst, min(rep[4:]))
    return worst >= -1e-10, f"smallest margin {worst:.3e} over {n_updates} updates"


def check_reduction():
    model = _small_model()
    x = make_phantom(12)
    y = model.forward(x)
    cfg = SolveConfig(max_iters=15, keep_iterates=True)
    d = IdentityDenoiser()
    a = pnp_ista(model, y, d, cfg)
    P = PolynomialPreconditioner([1.0], step_size(model), GramOperator(model))
    b = p2np_fixed(model, y, d, P, cfg)
    err = max(np.max(np.abs(u - v)) for u, v in zip(a.iterates, b.iterates))
    return err <= 1e-14, f"max iterate difference {err:.1e}"


def check_acceleration_factors():
    sp = acceleration_factor_spiral(256, 6)
    ra = acceleration_factor_radial(256, 21)
    return 127 <= sp <= 137 and 11.6 <= ra <= 12.8, f"spiral {sp:.2f}, radial {ra:.2f}"


CHECKS: List[Callable] = [check_adjoint, check_gram, check_poly_identities, check_equivariance,
                          check_zmshr1_bounds, check_reduction, check_acceleration_factors]


def run_checks(checks=None):
    results = []
    for fn in checks or CHECKS:
        name = fn.__name__.removeprefix("check_")
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
