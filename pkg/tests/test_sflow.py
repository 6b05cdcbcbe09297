import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfc

from specflow import instances as inst
from specflow.algebra import BlockOperator, ProjectionPair, TraceContext, f_map, relative_index
from specflow.quad import PiecewisePath, QuadratureSpec
from specflow.sflow import (
    SpectralFlowResult,
    eta_eps,
    eta_eps_quadrature,
    gamma_eta_identity_check,
    gamma_h,
    gamma_mollified,
    infinitesimal_pairing,
    kernel_trace,
    one_form_integral,
    projection_constant,
    sf_bounded_formula,
    sf_crossing,
    sf_from_ssf,
    sf_function_pairing,
    sf_projection_pair,
    sf_summable,
    sf_theta,
    theta_potential,
)
from specflow.weights import gaussian, mollifier, resolvent_power

from conftest import diag, random_pair

WEIGHTED = [(1, 1.0), (1, 0.5)]


def with_kernel(rng, ctx, mu=0.0):
    lam = rng.uniform(-3, 3, ctx.total_dim)
    lam[0] = mu
    return inst.with_spectrum(ctx, lam, rng)


class TestCrossing:
    def test_scalar(self):
        assert sf_crossing(diag([-1.0]), diag([1.0]), 0.0).value == 1

    def test_weighted(self):
        assert sf_crossing(diag([-1.0, -1.0], WEIGHTED), diag([1.0, 1.0], WEIGHTED), 0.0).value == 1.5

    def test_gauge(self, rng):
        h0 = inst.random_hermitian(inst.random_context(rng), rng)
        h1 = inst.gauge(h0, inst.random_unitary(h0.context, rng))
        lam = np.concatenate([np.linspace(-4, 4, 9), [float(np.linalg.eigvalsh(h0.blocks[0])[0])]])
        assert all(sf_crossing(h0, h1, mu).value == 0 for mu in lam)

    def test_concatenation_and_antisymmetry(self, rng):
        for _ in range(30):
            ctx = inst.random_context(rng)
            h0, h1, h2 = (inst.random_hermitian(ctx, rng) for _ in range(3))
            mu = float(rng.uniform(-2, 2))
            a, b, c = sf_crossing(h0, h1, mu).value, sf_crossing(h1, h2, mu).value, sf_crossing(h0, h2, mu).value
            assert a + b == pytest.approx(c, abs=1e-13)
            assert sf_crossing(h1, h0, mu).value == -a

    def test_result_validation(self):
        with pytest.raises(ValueError):
            SpectralFlowResult(1.0, "guess")


class TestFromSsf:
    def test_diagonal_at_jump(self):
        r = sf_from_ssf(diag([0.0, 2.0]), diag([1.0, 1.0]), 1.0)
        assert r.value == 1
        assert r.diagnostics["xi"] == 0 and r.diagnostics["ker_h1"] == 2

    def test_below_spectra(self, rng):
        h0, h1 = random_pair(rng)
        assert sf_from_ssf(h0, h1, -100.0).value == 0

    def test_exact_on_eigenvalues(self, rng):
        for _ in range(50):
            h0, h1 = random_pair(rng)
            grid = list(np.linalg.eigvalsh(h0.blocks[0])) + list(np.linalg.eigvalsh(h1.blocks[-1]))
            grid += list(rng.uniform(-4, 4, 5))
            for mu in grid:
                assert sf_from_ssf(h0, h1, mu).value == sf_crossing(h0, h1, mu).value


class TestBoundedFormula:
    def test_equal_endpoints(self, rng):
        f = f_map(inst.random_hermitian(inst.random_context(rng), rng))
        assert abs(sf_bounded_formula(f, f, lambda s: s * s, -1.0, 1.0).value) <= 1e-12

    def test_commuting_diagonal(self):
        f0, f1 = diag([-0.5, 0.2, 0.6]), diag([0.4, -0.3, 0.0])
        r = sf_bounded_formula(f0, f1, lambda s: s * s, -1.0, 1.0)
        assert r.value == pytest.approx(sf_crossing(f0, f1, 0.0).value, abs=1e-8)
        assert set(r.diagnostics) >= {"integral_term", "gamma0", "gamma1", "h_scale"}
        d = r.diagnostics
        assert d["integral_term"] + d["gamma1"] - d["gamma0"] == pytest.approx(r.value, abs=1e-15)

    def test_random_and_profile_independence(self, rng):
        for _ in range(10):
            h0, h1 = random_pair(rng)
            f0, f1 = f_map(h0), f_map(h1)
            mu = float(rng.uniform(-0.5, 0.5))
            oracle = sf_crossing(f0, f1, mu).value
            a = sf_bounded_formula(f0, f1, lambda s: s, -1.0, 1.0, mu=mu).value
            b = sf_bounded_formula(f0, f1, lambda s: np.sin(s) ** 2, -1.0, 1.0, mu=mu).value
            assert abs(a - oracle) <= 1e-6 and abs(a - b) <= 1e-6

    def test_window_checks(self):
        with pytest.raises(ValueError):
            sf_bounded_formula(diag([0.5]), diag([2.0]), lambda s: s, -1.0, 1.0)
        with pytest.raises(ValueError):
            sf_bounded_formula(diag([0.5]), diag([0.2]), lambda s: s, -1.0, 1.0, mu=1.0)


class TestGamma:
    def test_two_valued(self):
        assert gamma_h(diag([-1.0, 1.0]), lambda s: s, -1.0, 1.0) == 0

    def test_scalar(self):
        c, b = 0.3, 1.4
        # h(x) = (b - x)(x + 1) integrated from c to b
        expect = -(b ** 3 - c ** 3) / 3 + (b - 1) * (b * b - c * c) / 2 + b * (b - c)
        assert gamma_h(diag([c]), lambda s: s, -1.0, b) == pytest.approx(expect, abs=1e-12)

    def test_limit_is_half_kernel(self, rng):
        ctx = inst.random_context(rng, (3, 8))
        lam = rng.choice([-1, 1], ctx.total_dim) * rng.uniform(0.25, 0.9, ctx.total_dim)
        lam[:2] = 0.1
        f = inst.with_spectrum(ctx, lam, rng)
        target = 0.5 * kernel_trace(f, 0.1)
        errs = [abs(gamma_mollified(f, 0.1, mollifier(e)) - target) for e in (0.1, 0.05, 0.025, 0.0125)]
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
        assert errs[-1] <= 1e-2

    def test_gamma_eta_identity(self, rng):
        for _ in range(5):
            h = with_kernel(rng, inst.random_context(rng, (2, 6)))
            for eps in (0.1, 1.0):
                assert gamma_eta_identity_check(h, eps) <= 1e-6

    def test_gamma_eta_symmetric(self):
        h = diag([-0.7, 0.7])
        assert eta_eps(h, 0.5) == 0
        assert gamma_eta_identity_check(h, 0.5) <= 1e-10

    def test_gamma_eta_kernel(self):
        assert gamma_eta_identity_check(diag([0.0]), 0.3) <= 1e-9


class TestProjectionPair:
    def test_equal(self, rng):
        p = inst.random_projection(inst.random_context(rng), rng)
        assert abs(sf_projection_pair(ProjectionPair(p, p), lambda s: s, -1.0, 1.0).value) <= 1e-15

    def test_constant(self):
        c = projection_constant(lambda s: s, -1.0, 1.0)
        assert abs(c - 8 / 6) <= 2 * np.spacing(8 / 6)

    def test_commuting(self):
        pq = ProjectionPair(diag([1.0, 0.0, 0.0]), diag([1.0, 1.0, 0.0]))
        assert sf_projection_pair(pq, lambda s: s, -1.0, 1.0).value == pytest.approx(1.0, abs=1e-14)

    def test_non_commuting(self, rng):
        for _ in range(20):
            pq = inst.random_projection_pair(inst.random_context(rng), rng)
            r = sf_projection_pair(pq, lambda s: s * s, -0.5, 2.0)
            ri = relative_index(pq)
            assert abs(r.value - ri) <= 1e-8
            assert ri == sf_crossing(2.5 * pq.p - 0.5, 2.5 * pq.q - 0.5, 0.0).value


class TestOneForm:
    def test_closed_loop_and_detour(self, rng):
        ctx = TraceContext.single(6)
        h0, h1, m = (inst.random_hermitian(ctx, rng, (-2, 2)) for _ in range(3))
        f = gaussian(0.5)
        assert abs(one_form_integral(PiecewisePath((h0, m, h0)), f)) <= 1e-8
        a = one_form_integral(PiecewisePath.straight(h0, h1), f)
        b = one_form_integral(PiecewisePath((h0, m, h1)), f)
        assert abs(a - b) <= 1e-8

    def test_commuting_diagonal(self):
        f = gaussian(0.7)
        h0, h1 = diag([-1.0, 0.5]), diag([2.0, -0.5])
        expect = (f.integral(-1.0, 2.0) + f.integral(0.5, -0.5))
        assert one_form_integral(PiecewisePath.straight(h0, h1), f) == pytest.approx(expect, abs=1e-12)

    def test_compact_support_crossings(self, rng):
        ctx = TraceContext.single(4)
        h0, h1 = inst.random_hermitian(ctx, rng, (-2, 2)), inst.random_hermitian(ctx, rng, (-2, 2))
        phi = mollifier(0.6, 0.2)
        path = PiecewisePath.straight(h0, h1)
        assert abs(infinitesimal_pairing(path, phi) - sf_function_pairing(h0, h1, phi)) <= 1e-7


class TestThetaPotential:
    def test_zero(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        assert theta_potential(h, h, gaussian(1.0)) == 0

    def test_scalar(self):
        f, t = gaussian(1.0), 1.7
        assert theta_potential(diag([0.0]), diag([t]), f) == pytest.approx(f.integral(0.0, t), abs=1e-12)

    def test_gradient(self, rng):
        ctx = TraceContext.single(4)
        h0, h, x = (inst.random_hermitian(ctx, rng) for _ in range(3))
        f = gaussian(0.4)
        s = 1e-4
        fd = (theta_potential(h0, h + s * x, f) - theta_potential(h0, h - s * x, f)) / (2 * s)
        from specflow.algebra import matrix_function, weighted_trace

        assert fd == pytest.approx(weighted_trace(x @ matrix_function(h, f.fn)).real, abs=1e-6)


class TestEta:
    def test_zero(self):
        assert eta_eps(diag([0.0, 0.0]), 1.0) == 0

    def test_symmetric(self):
        assert eta_eps(diag([-1.3, 1.3, 0.2, -0.2]), 0.4) == 0

    def test_example(self):
        val = eta_eps(diag([1.0, -2.0]), 0.01)
        assert abs(val - (erfc(0.1) - erfc(0.2))) <= 1e-10
        assert abs(eta_eps_quadrature(diag([1.0, -2.0]), 0.01) - val) <= 1e-10

    def test_random(self, rng):
        for _ in range(10):
            h = with_kernel(rng, inst.random_context(rng))
            for eps in (0.05, 1.0):
                assert abs(eta_eps(h, eps) - eta_eps_quadrature(h, eps)) <= 1e-8

    def test_eps_positive(self):
        with pytest.raises(ValueError):
            eta_eps(diag([1.0]), 0.0)


class TestTheta:
    def test_equal(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        assert abs(sf_theta(h, h, 0.5).value) <= 1e-15

    def test_scalar(self):
        for eps in (0.05, 0.5, 5.0):
            r = sf_theta(diag([-1.0]), diag([1.0]), eps)
            assert r.value == pytest.approx(1.0, abs=1e-12)
            assert r.diagnostics["eta1"] == pytest.approx(erfc(math.sqrt(eps)), abs=1e-15)

    def test_random_with_kernels(self, rng):
        for _ in range(10):
            ctx = inst.random_context(rng, (2, 10))
            h0, h1 = with_kernel(rng, ctx), inst.random_hermitian(ctx, rng)
            oracle = sf_crossing(h0, h1, 0.0).value
            vals = [sf_theta(h0, h1, e).value for e in (0.05, 0.5, 5.0)]
            assert max(abs(v - oracle) for v in vals) <= 1e-6
            assert max(vals) - min(vals) <= 2e-6


class TestSummable:
    def test_swap(self):
        h0 = diag([-1.0, 1.0])
        u = BlockOperator(h0.context, [np.array([[0.0, 1.0], [1.0, 0.0]])])
        h1 = inst.gauge(h0, u)
        assert abs(sf_summable(h0, h1, gaussian(1.0), 0.0).value) <= 1e-15
        assert abs(sf_summable(h0, h1, resolvent_power(2.0), 0.0).value) <= 1e-7

    def test_random_gauge(self, rng):
        h0 = inst.random_hermitian(inst.random_context(rng), rng)
        h1 = inst.gauge(h0, inst.random_unitary(h0.context, rng))
        for mu in np.linspace(-3, 3, 7):
            for f in (gaussian(1.0), resolvent_power(2.0), resolvent_power(3.0)):
                assert abs(sf_summable(h0, h1, f, mu).value) <= 1e-7

    def test_rejects_inequivalent(self):
        with pytest.raises(ValueError):
            sf_summable(diag([0.0, 1.0]), diag([0.0, 2.0]), gaussian(1.0))


class TestInfinitesimal:
    def test_constant_path(self):
        h = diag([0.1, -0.2])
        assert infinitesimal_pairing(PiecewisePath.straight(h, h), mollifier(0.5)) == 0

    def test_scalar(self):
        phi = mollifier(0.5, 0.0)
        path = PiecewisePath.straight(diag([-1.0]), diag([1.0]))
        assert infinitesimal_pairing(path, phi) == pytest.approx(1.0, abs=1e-10)
        assert sf_function_pairing(diag([-1.0]), diag([1.0]), phi) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5), st.floats(0.05, 5.0))
def test_eta_odd(values, eps):
    h = diag(values)
    assert eta_eps(-1.0 * h, eps) == pytest.approx(-eta_eps(h, eps), abs=1e-14)
    assert abs(eta_eps(h, eps)) <= len(values) + 1e-12
