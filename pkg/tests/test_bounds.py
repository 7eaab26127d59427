"""The learning-rate condition and convergence bound against independent
high-precision re-implementations, plus a quadratic end-to-end sanity run."""

import math

import mpmath
import numpy as np
import pytest

from gmtlsim.bounds import (
    BoundInputs,
    TraceComparison,
    compare_trace,
    convergence_bound,
    estimate_lipschitz,
    estimate_sigma_sq,
    lr_condition,
)
from gmtlsim.errors import ValidationError


def lhs_mpmath(eta, L, tau, zeta):
    eta, L, tau, zeta = map(mpmath.mpf, (eta, L, tau, zeta))
    bracket = 2 * zeta**2 / (1 + zeta) + 2 * zeta / (1 - zeta) + (tau - 1) / tau
    return eta * L + (eta**2 * L**2 * tau**2 / (1 - zeta)) * bracket


def bound_mpmath(inp):
    eta, L, tau, zeta = map(mpmath.mpf, (inp.eta, inp.L, inp.tau, inp.zeta))
    sigma_sq, K, T = map(mpmath.mpf, (inp.sigma_sq, inp.K, inp.T))
    df = mpmath.mpf(inp.f_init) - mpmath.mpf(inp.f_inf)
    return (
        2 * df / (eta * T)
        + eta * L * sigma_sq / K
        + eta**2 * L**2 * sigma_sq * ((1 + zeta**2) / (1 - zeta**2) * tau - 1)
    )


def grid_points():
    pts = []
    i = 0
    for eta in (0.001, 0.01, 0.1, 0.4, 0.9):
        for tau in (1, 2, 5, 10, 20):
            zeta = (i % 10) / 10.0
            pts.append(BoundInputs(eta=eta, L=1.5, tau=tau, zeta=zeta, sigma_sq=0.7,
                                   K=8, T=100, f_init=2.0))
            i += 1
    assert len(pts) == 25
    # second sheet varies L and sigma
    for eta in (0.002, 0.05, 0.2, 0.5, 0.8):
        for L in (0.5, 1.0, 2.0, 4.0, 8.0):
            zeta = (i % 9) / 10.0
            pts.append(BoundInputs(eta=eta, L=L, tau=4, zeta=zeta, sigma_sq=1.3,
                                   K=4, T=50, f_init=1.0))
            i += 1
    assert len(pts) == 50
    return pts


class TestLrCondition:
    def test_no_mixing_penalty_reduces_to_eta_L(self):
        res = lr_condition(BoundInputs(eta=0.5, L=2.0, tau=1, zeta=0.0, sigma_sq=0.0,
                                       K=4, T=10))
        assert res.feasible
        assert abs(res.lhs - 1.0) < 1e-15  # boundary case

    def test_matches_independent_arithmetic(self):
        for inp in grid_points():
            res = lr_condition(inp)
            ref = float(lhs_mpmath(inp.eta, inp.L, inp.tau, inp.zeta))
            assert abs(res.lhs - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_vanishing_eta_always_feasible(self):
        for zeta in (0.0, 0.3, 0.9):
            res = lr_condition(BoundInputs(eta=1e-9, L=5.0, tau=10, zeta=zeta,
                                           sigma_sq=1.0, K=4, T=10))
            assert res.feasible

    def test_zeta_one_is_infeasible_not_a_crash(self):
        res = lr_condition(BoundInputs(eta=0.1, L=1.0, tau=2, zeta=1.0, sigma_sq=1.0,
                                       K=4, T=10))
        assert not res.feasible
        assert res.lhs is None
        assert "zeta" in res.reason


class TestConvergenceBound:
    def test_centralized_limit_drops_the_mixing_term(self):
        inp = BoundInputs(eta=0.1, L=1.0, tau=1, zeta=0.0, sigma_sq=2.0, K=8, T=100,
                          f_init=1.0)
        expected = 2.0 * 1.0 / (0.1 * 100) + 0.1 * 1.0 * 2.0 / 8
        assert abs(convergence_bound(inp) - expected) < 1e-15

    def test_worked_example_matches_independent_arithmetic(self):
        inp = BoundInputs(eta=0.1, L=1.0, tau=5, zeta=1 / 3, sigma_sq=1.0, K=8, T=100,
                          f_init=1.0)
        assert abs(convergence_bound(inp) - float(bound_mpmath(inp))) < 1e-12

    def test_grid_matches_independent_arithmetic(self):
        for inp in grid_points():
            ref = float(bound_mpmath(inp))
            assert abs(convergence_bound(inp) - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_noiseless_bound_vanishes_with_horizon(self):
        vals = [
            convergence_bound(BoundInputs(eta=0.1, L=1.0, tau=3, zeta=0.5, sigma_sq=0.0,
                                          K=4, T=t, f_init=1.0))
            for t in (10, 100, 1000, 100000)
        ]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3

    def test_monotone_in_tau_zeta_sigma(self):
        base = dict(eta=0.05, L=2.0, sigma_sq=1.0, K=8, T=200, f_init=1.0)
        taus = [convergence_bound(BoundInputs(tau=t, zeta=0.5, **base)) for t in range(1, 8)]
        assert all(a <= b for a, b in zip(taus, taus[1:]))
        zetas = [convergence_bound(BoundInputs(tau=4, zeta=z, **base))
                 for z in np.linspace(0.0, 0.95, 12)]
        assert all(a <= b for a, b in zip(zetas, zetas[1:]))
        sigmas = [
            convergence_bound(BoundInputs(eta=0.05, L=2.0, tau=4, zeta=0.5, sigma_sq=s,
                                          K=8, T=200, f_init=1.0))
            for s in (0.0, 0.5, 1.0, 2.0)
        ]
        assert all(a <= b for a, b in zip(sigmas, sigmas[1:]))

    def test_zeta_one_is_unbounded(self):
        inp = BoundInputs(eta=0.1, L=1.0, tau=2, zeta=1.0, sigma_sq=1.0, K=4, T=10)
        assert math.isinf(convergence_bound(inp))

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValidationError):
            BoundInputs(eta=0.1, L=-1.0, tau=1, zeta=0.0, sigma_sq=1.0, K=4, T=10).validate()
        with pytest.raises(ValidationError):
            BoundInputs(eta=0.1, L=1.0, tau=1, zeta=2.0, sigma_sq=1.0, K=4, T=10).validate()


class TestCompareTrace:
    def test_zero_trace_is_below_any_positive_bound(self):
        inp = BoundInputs(eta=0.1, L=1.0, tau=1, zeta=0.0, sigma_sq=1.0, K=4, T=10,
                          f_init=1.0)
        report = compare_trace([0.0, 0.0, 0.0], inp)
        assert isinstance(report, TraceComparison)
        assert not report.exceeds_bound

    def test_empty_trace_rejected(self):
        inp = BoundInputs(eta=0.1, L=1.0, tau=1, zeta=0.0, sigma_sq=1.0, K=4, T=10)
        with pytest.raises(ValidationError):
            compare_trace([], inp)

    def test_quadratic_full_batch_run_respects_the_bound(self):
        # Deterministic quadratic consensus problem with exactly known L and
        # sigma^2 = 0: K clients minimize mean_k 0.5 * L * ||x - c_k||^2 with
        # periodic averaging; the logged averaged-gradient norms must sit
        # under the evaluated bound.
        K, T, tau, L, eta = 4, 60, 3, 2.0, 0.1
        rng = np.random.default_rng(5)
        centers = rng.standard_normal((K, 6))
        mix = np.full((K, K), 1.0 / K)
        xs = np.zeros((K, 6))
        f_init = float(np.mean([0.5 * L * np.sum((xs[k] - centers[k]) ** 2)
                                for k in range(K)]))
        f_star = float(
            np.mean([0.5 * L * np.sum((centers.mean(axis=0) - centers[k]) ** 2)
                     for k in range(K)])
        )
        grad_norms = []
        for t in range(1, T + 1):
            u = xs.mean(axis=0)
            grad_u = np.mean([L * (u - centers[k]) for k in range(K)], axis=0)
            grad_norms.append(float(np.sum(grad_u**2)))
            for k in range(K):
                xs[k] = xs[k] - eta * L * (xs[k] - centers[k])
            if t % tau == 0:
                xs = mix @ xs
        inp = BoundInputs(eta=eta, L=L, tau=tau, zeta=0.0, sigma_sq=0.0, K=K, T=T,
                          f_init=f_init, f_inf=f_star)
        report = compare_trace(grad_norms, inp)
        assert lr_condition(inp).feasible
        assert not report.exceeds_bound

    def test_bound_increases_with_tau(self):
        base = dict(eta=0.05, L=1.0, zeta=0.4, sigma_sq=1.0, K=8, T=100, f_init=1.0)
        b1 = convergence_bound(BoundInputs(tau=2, **base))
        b2 = convergence_bound(BoundInputs(tau=6, **base))
        assert b2 > b1


class TestEstimators:
    def test_lipschitz_recovers_a_quadratic_constant(self):
        rng = np.random.default_rng(0)
        A = np.diag([3.0, 1.0, 0.5])
        pairs = []
        for _ in range(6):
            x = rng.standard_normal(3)
            pairs.append((x, A @ x))
        L = estimate_lipschitz(pairs)
        assert 0.5 <= L <= 3.0 + 1e-9

    def test_sigma_sq_of_identical_gradients_is_zero(self):
        g = np.ones(5)
        assert estimate_sigma_sq([g, g, g]) == 0.0

    def test_sigma_sq_known_case(self):
        grads = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
        assert estimate_sigma_sq(grads) == 1.0
