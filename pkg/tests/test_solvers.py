import warnings

import numpy as np
import pytest

from conftest import crandn
from p2np._validation import ContractError
from p2np.denoisers import (CallableDenoiser, ConvDenoiser, IdentityDenoiser,
                            SoftThresholdDenoiser, WienerDenoiser)
from p2np.diagnostics import lemma1_monitor
from p2np.mri import add_noise
from p2np.operators import DenseOperator, GramOperator, IdentityOperator, MatrixHermitianOperator, materialize_dense
from p2np.phantom import make_phantom
from p2np.preconditioners import PolynomialPreconditioner, binomial_coeffs, cheb2_coeffs
from p2np.solvers import (CGBreakdownError, ConfigurationError, DivergenceError, SolveConfig,
                          cg_solve, init_x, p2np_dynamic, p2np_fixed, pnp_admm, pnp_ista, step_size)


def mean_blend(x, s=None):
    """Equivariant toy denoiser: pulls every entry halfway to the mean."""
    return 0.5 * x + 0.5 * np.mean(x)


EQUIVARIANT_1D = CallableDenoiser(mean_blend, declared_lipschitz=1.0, norm_equivariant=True, linear=True)


def well_posed(rng, m=24, n=12):
    A = crandn(rng, m, n)
    return DenseOperator(A), A


@pytest.fixture(scope="module")
def radial_problem(radial16):
    x = make_phantom(16)
    y = add_noise(radial16.forward(x.reshape(-1)), 3e-4, seed=1)
    return radial16, y, x


class TestStepSize:
    def test_unitary(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 6, 6))
        assert step_size(DenseOperator(Q), tol=1e-12) == pytest.approx(1.0, rel=1e-9)

    def test_scaled_identity(self):
        assert step_size(DenseOperator(2 * np.eye(5)), tol=1e-12) == pytest.approx(0.25)

    def test_radial_matches_dense_eigensolver(self, radial16):
        G = materialize_dense(GramOperator(radial16))
        lam = np.linalg.eigvalsh(G)[-1]
        assert step_size(radial16, tol=1e-12) == pytest.approx(1 / lam, rel=1e-6)

    def test_cached(self, radial8):
        assert step_size(radial8) is step_size(radial8)

    def test_zero_operator(self):
        with pytest.raises(ContractError):
            step_size(DenseOperator(np.zeros((3, 3))))


class TestInit:
    def test_zero_data(self, radial8):
        np.testing.assert_array_equal(init_x(radial8, np.zeros(radial8.range_dim)), 0)

    def test_unitary_recovers(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 6, 6))
        x = crandn(rng, 6)
        np.testing.assert_allclose(init_x(DenseOperator(Q), Q @ x), x, atol=1e-13)

    def test_matches_adjoint(self, radial8, rng):
        y = crandn(rng, radial8.range_dim)
        np.testing.assert_allclose(init_x(radial8, y), materialize_dense(radial8).conj().T @ y, atol=1e-12)

    def test_shape_mismatch(self, radial8):
        with pytest.raises(ContractError):
            init_x(radial8, np.zeros(3))


class TestISTA:
    def test_identity_denoiser_solves_least_squares(self, rng):
        op, A = well_posed(rng)
        xbar = crandn(rng, 12)
        cfg = SolveConfig(max_iters=400, keep_iterates=True)
        tr = pnp_ista(op, A @ xbar, IdentityDenoiser(), cfg)
        errs = [np.linalg.norm(x - xbar) for x in tr.iterates]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(errs, errs[1:]))
        np.testing.assert_allclose(tr.x_final, xbar, atol=1e-6)

    def test_fixed_point_is_stationary(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 6, 6))
        x = crandn(rng, 6)
        tr = pnp_ista(DenseOperator(Q), Q @ x, IdentityDenoiser(), SolveConfig(max_iters=5, keep_iterates=True))
        assert tr.records[0].E == pytest.approx(0, abs=1e-24)
        for it in tr.iterates:
            np.testing.assert_allclose(it, x, atol=1e-12)

    def test_linear_denoiser_fixed_point(self, rng):
        op, A = well_posed(rng)
        W = np.diag(rng.uniform(0.3, 0.9, 12)).astype(complex)
        d = CallableDenoiser(lambda x, s: W @ x, declared_lipschitz=0.9, linear=True)
        y = crandn(rng, 24)
        alpha = step_size(op)
        tr = pnp_ista(op, y, d, SolveConfig(max_iters=2000, e_tol=1e-30))
        G = A.conj().T @ A
        ref = np.linalg.solve(np.eye(12) - W @ (np.eye(12) - alpha * G), alpha * W @ A.conj().T @ y)
        np.testing.assert_allclose(tr.x_final, ref, atol=1e-8)

    def test_one_gram_per_iteration(self, radial_problem):
        model, y, x = radial_problem
        tr = pnp_ista(model, y, ConvDenoiser(0.7, (16, 16)), SolveConfig(max_iters=6), x_true=x)
        assert [r.n_gram for r in tr.records] == [1] * 6
        assert len(tr) == 6
        assert np.all(np.diff(tr.column("wall_ms")) >= 0)

    def test_divergence(self, rng):
        op, A = well_posed(rng)
        d = CallableDenoiser(lambda x, s: 10 * x, declared_lipschitz=10, linear=True)
        with pytest.raises(DivergenceError) as exc:
            pnp_ista(op, crandn(rng, 24), d, SolveConfig(max_iters=100))
        assert exc.value.iteration >= 1
        assert len(exc.value.trace) == exc.value.iteration - 1

    def test_nan_triggers_divergence(self, rng):
        op, _ = well_posed(rng)
        d = CallableDenoiser(lambda x, s: np.full_like(x, np.nan))
        with pytest.raises(DivergenceError) as exc:
            pnp_ista(op, crandn(rng, 24), d)
        assert exc.value.iteration == 1

    def test_deterministic(self, radial_problem):
        model, y, x = radial_problem
        d = ConvDenoiser(0.7, (16, 16))
        a = pnp_ista(model, y, d, SolveConfig(max_iters=10), x_true=x)
        b = pnp_ista(model, y, d, SolveConfig(max_iters=10), x_true=x)
        np.testing.assert_array_equal(a.x_final, b.x_final)
        for ra, rb in zip(a.records, b.records):
            assert (ra.psnr, ra.E, ra.grad_norm, ra.step_norm) == (rb.psnr, rb.E, rb.grad_norm, rb.step_norm)

    def test_callback_receives_read_only_snapshots(self, radial_problem):
        model, y, _ = radial_problem
        seen = []
        pnp_ista(model, y, IdentityDenoiser(), SolveConfig(max_iters=3), callback=lambda k, x: seen.append((k, x)))
        assert [k for k, _ in seen] == [1, 2, 3, 4]
        with pytest.raises(ValueError):
            seen[0][1][0] = 1


class TestCG:
    def test_identity(self, rng):
        b = crandn(rng, 5)
        res = cg_solve(IdentityOperator(5), b)
        assert res.n_iter == 1 and res.converged
        np.testing.assert_allclose(res.x, b)

    def test_diagonal(self):
        res = cg_solve(MatrixHermitianOperator(np.diag([1.0, 2.0, 4.0])), [1, 2, 4], tol=1e-14)
        np.testing.assert_allclose(res.x, [1, 1, 1], atol=1e-13)

    def test_random_spd(self, rng):
        B = crandn(rng, 16, 16)
        H = B.conj().T @ B + np.eye(16)
        b = crandn(rng, 16)
        res = cg_solve(MatrixHermitianOperator(H), b, tol=1e-10, max_iter=500)
        assert res.converged
        assert np.linalg.norm(H @ res.x - b) <= 1e-10 * np.linalg.norm(b) * (1 + 1e-6)
        ref = np.linalg.solve(H, b)
        assert np.linalg.norm(res.x - ref) <= 1e-10 * np.linalg.cond(H) * np.linalg.norm(ref)

    def test_zero_rhs(self):
        res = cg_solve(IdentityOperator(3), np.zeros(3))
        assert res.converged and not np.any(res.x)

    def test_cap_flagged(self, rng):
        H = np.diag(np.logspace(0, 6, 30))
        res = cg_solve(MatrixHermitianOperator(H), np.ones(30), tol=1e-14, max_iter=3)
        assert not res.converged and res.n_iter == 3

    def test_breakdown(self):
        with pytest.raises(CGBreakdownError):
            cg_solve(MatrixHermitianOperator(np.diag([1.0, -1.0])), [1, 1])

    def test_warm_start_costs_one_apply(self, rng):
        B = crandn(rng, 6, 6)
        H = MatrixHermitianOperator(B.conj().T @ B + np.eye(6))
        b = crandn(rng, 6)
        res = cg_solve(H, b, x0=np.zeros(6))
        assert res.n_apply == res.n_iter + 1


class TestADMM:
    def test_identity_denoiser(self, rng):
        op, A = well_posed(rng)
        y = crandn(rng, 24)
        tr = pnp_admm(op, y, IdentityDenoiser(),
                      SolveConfig(max_iters=60, keep_iterates=True, cg_tol=1e-13))
        # with D = I the scaled dual stays zero, so v_k = (G + I)^{-1} (A^H y + v_{k-1})
        M = A.conj().T @ A + np.eye(12)
        v = A.conj().T @ y
        for it in tr.iterates[1:]:
            v = np.linalg.solve(M, A.conj().T @ y + v)
            np.testing.assert_allclose(it, v, atol=1e-9)
        np.testing.assert_allclose(tr.x_final, np.linalg.lstsq(A, y, rcond=None)[0], atol=1e-6)

    def test_zero_data(self, radial8):
        tr = pnp_admm(radial8, np.zeros(radial8.range_dim), ConvDenoiser(0.7, (8, 8)), SolveConfig(max_iters=3))
        assert not np.any(tr.x_final)

    def test_fixed_point_residual(self, radial_problem):
        model, y, _ = radial_problem
        cfg = SolveConfig(max_iters=300, sigma=1.0, cg_tol=1e-10)
        d = WienerDenoiser(np.ones((16, 16)), 1.0)
        tr = pnp_admm(model, y, d, cfg)
        last = tr.records[-1]
        assert np.sqrt(last.E) * np.linalg.norm(tr.x_init) <= 10 * cfg.cg_tol * max(1.0, np.linalg.norm(tr.x_init))

    def test_gram_count_is_one_plus_cg(self, radial_problem):
        model, y, x = radial_problem
        tr = pnp_admm(model, y, ConvDenoiser(0.7, (16, 16)), SolveConfig(max_iters=5), x_true=x)
        for r in tr.records:
            assert r.n_gram == 1 + r.cg_iters and r.cg_iters > 0 and r.cg_converged
        assert np.all(np.isnan(tr.column("eta")))

    def test_cg_nonconvergence_flagged(self, radial_problem):
        model, y, _ = radial_problem
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            tr = pnp_admm(model, y, IdentityDenoiser(), SolveConfig(max_iters=2, cg_max_iter=1, cg_tol=1e-14))
        assert not tr.records[0].cg_converged
        assert any("CG did not converge" in str(m.message) for m in w)


class TestFixed:
    def test_unit_coeffs_reproduce_ista(self, radial_problem):
        model, y, x = radial_problem
        d = ConvDenoiser(0.7, (16, 16))
        cfg = SolveConfig(max_iters=15, keep_iterates=True)
        a = pnp_ista(model, y, d, cfg, x_true=x)
        P = PolynomialPreconditioner([1.0], step_size(model), GramOperator(model))
        b = p2np_fixed(model, y, d, P, cfg, x_true=x)
        for u, v in zip(a.iterates, b.iterates):
            assert np.max(np.abs(u - v)) <= 1e-14

    def test_exact_inverse_converges_in_one_step(self, rng):
        # G has eigenvalues {1, 2}: G^{-1} = (3 - G) / 2 = alpha (3 - 2 alpha G) at alpha = 1/2
        Q, _ = np.linalg.qr(crandn(rng, 6, 6))
        A = Q @ np.diag(np.sqrt([1.0, 1, 1, 2, 2, 2]))
        op = DenseOperator(A)
        assert step_size(op, tol=1e-14) == pytest.approx(0.5)
        P = PolynomialPreconditioner([3.0, -2.0], 0.5, GramOperator(op))
        np.testing.assert_allclose(0.5 * np.column_stack([P.apply(e) for e in np.eye(6)]),
                                   np.linalg.inv(A.conj().T @ A), atol=1e-12)
        xbar = crandn(rng, 6)
        tr = p2np_fixed(op, A @ xbar, IdentityDenoiser(), P, SolveConfig(max_iters=3, keep_iterates=True))
        np.testing.assert_allclose(tr.iterates[1], xbar, atol=1e-12)
        assert tr.records[1].step_norm < 1e-12

    @pytest.mark.parametrize("coeffs,gamma", [(binomial_coeffs(2), 2), (cheb2_coeffs(), 2), (binomial_coeffs(3), 3)])
    def test_gram_count_is_gamma(self, radial_problem, coeffs, gamma):
        model, y, _ = radial_problem
        P = PolynomialPreconditioner(coeffs, step_size(model), GramOperator(model))
        tr = p2np_fixed(model, y, ConvDenoiser(0.7, (16, 16)), P, SolveConfig(max_iters=4))
        assert [r.n_gram for r in tr.records] == [gamma] * 4

    def test_eta_recorded(self, radial_problem):
        model, y, _ = radial_problem
        a = step_size(model)
        P = PolynomialPreconditioner(cheb2_coeffs(), a, GramOperator(model))
        tr = p2np_fixed(model, y, ConvDenoiser(0.7, (16, 16)), P, SolveConfig(max_iters=3))
        np.testing.assert_allclose(tr.column("eta"), 1.5, atol=1e-8)

    def test_foreign_preconditioner(self, radial_problem, radial8):
        model, y, _ = radial_problem
        P = PolynomialPreconditioner([1.0], 1.0, GramOperator(radial8))
        with pytest.raises(ContractError):
            p2np_fixed(model, y, IdentityDenoiser(), P)


class TestDynamic:
    def test_identity_gram_matches_ista(self, rng):
        op = IdentityOperator(10)
        y = crandn(rng, 10)
        d = EQUIVARIANT_1D
        cfg = SolveConfig(max_iters=8, keep_iterates=True, keep_preconditioners=True)
        a = pnp_ista(op, y, d, cfg)
        b = p2np_dynamic(op, y, d, cfg)
        for P in b.preconditioners:
            assert P.tau == 1.0 and P.u is None
        for u, v in zip(a.iterates, b.iterates):
            np.testing.assert_array_equal(u, v)

    def test_refuses_non_equivariant(self, radial_problem):
        model, y, _ = radial_problem
        for d in (SoftThresholdDenoiser(0.1), WienerDenoiser(np.ones((16, 16)), 0.2)):
            with pytest.raises(ConfigurationError):
                p2np_dynamic(model, y, d)

    def test_stationary_at_fixed_point(self, rng):
        Q, _ = np.linalg.qr(crandn(rng, 6, 6))
        x = np.ones(6, complex)
        d = EQUIVARIANT_1D
        tr = p2np_dynamic(DenseOperator(Q), Q @ x, d, SolveConfig(max_iters=4, keep_iterates=True))
        for it in tr.iterates:
            np.testing.assert_allclose(it, x, atol=1e-12)

    def test_eigenvalue_bounds_every_iteration(self, radial_problem):
        model, y, x = radial_problem
        cfg = SolveConfig(max_iters=200, keep_preconditioners=True)
        tr = p2np_dynamic(model, y, ConvDenoiser(0.7, (16, 16)), cfg, x_true=x)
        assert len(tr.preconditioners) == 200
        for P in tr.preconditioners:
            rep = lemma1_monitor(P, cfg.delta, cfg.theta1, cfg.theta2)
            assert rep.passed, rep
            dense = np.linalg.eigvalsh(P.to_dense(256)) if P.u is not None else np.array([P.tau])
            assert dense[0] >= 1 / (2 * cfg.theta2) - 1e-10
            assert dense[-1] <= (cfg.delta + 1) / (cfg.delta * cfg.theta1)
        assert [r.n_gram for r in tr.records] == [1] * 200

    def test_first_step_is_unpreconditioned(self, radial_problem):
        model, y, x = radial_problem
        d = ConvDenoiser(0.7, (16, 16))
        a = pnp_ista(model, y, d, SolveConfig(max_iters=1))
        b = p2np_dynamic(model, y, d, SolveConfig(max_iters=1))
        np.testing.assert_array_equal(a.x_final, b.x_final)

    def test_raw_scaling_differs_only_when_alpha_not_one(self, radial_problem, rng):
        model, y, x = radial_problem
        d = ConvDenoiser(0.7, (16, 16))
        raw = p2np_dynamic(model, y, d, SolveConfig(max_iters=6, quasi_newton_scaling="raw"))
        norm = p2np_dynamic(model, y, d, SolveConfig(max_iters=6))
        assert np.linalg.norm(raw.x_final - norm.x_final) > 0
        Q, _ = np.linalg.qr(crandn(rng, 8, 8))
        op, yy = DenseOperator(Q @ np.diag(np.linspace(0.5, 1, 8))), crandn(rng, 8)
        d1 = EQUIVARIANT_1D
        cfg = dict(max_iters=6, alpha=1.0)
        np.testing.assert_array_equal(p2np_dynamic(op, yy, d1, SolveConfig(quasi_newton_scaling="raw", **cfg)).x_final,
                                      p2np_dynamic(op, yy, d1, SolveConfig(**cfg)).x_final)

    def test_bad_scaling_name(self):
        with pytest.raises(ContractError):
            SolveConfig(quasi_newton_scaling="auto")


def test_config_validation():
    with pytest.raises(ContractError):
        SolveConfig(max_iters=0)
    with pytest.raises(ContractError):
        SolveConfig(alpha=-1.0)


def test_early_stop(radial_problem):
    model, y, _ = radial_problem
    tr = pnp_ista(model, y, ConvDenoiser(0.7, (16, 16)), SolveConfig(max_iters=5000, e_tol=1e-8))
    assert tr.stop_reason == "e_tol" and len(tr) < 5000
    assert tr.records[-1].E <= 1e-8 < tr.records[-2].E
