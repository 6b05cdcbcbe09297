import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specflow import instances as inst
from specflow.algebra import (
    BlockOperator,
    ContextMismatch,
    ProjectionPair,
    TraceContext,
    eigendecompose,
    f_map,
    kappa,
    matrix_function,
    relative_index,
    resolvent_bound_check,
    sign_ab,
    spectral_projection,
    trace_against_spectral_measure,
    weighted_trace,
)
from specflow.weights import gaussian

from conftest import diag

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])


class TestTraceContext:
    def test_rejects_bad_blocks(self):
        with pytest.raises(ValueError):
            TraceContext(())
        with pytest.raises(ValueError):
            TraceContext(((0, 1.0),))
        with pytest.raises(ValueError):
            TraceContext(((2, 0.0),))
        with pytest.raises(ValueError):
            TraceContext(((2, float("inf")),))

    def test_dimensions(self):
        ctx = TraceContext(((2, 1.0), (3, 0.5)))
        assert ctx.total_dim == 5
        assert ctx.tau_identity() == 3.5

    def test_json_round_trip(self):
        ctx = TraceContext(((2, 1.0), (1, 0.25)))
        assert TraceContext.from_json(json.loads(json.dumps(ctx.to_json()))) == ctx


class TestBlockOperator:
    def test_hermitian_check(self):
        ctx = TraceContext.single(2)
        with pytest.raises(ValueError):
            BlockOperator.hermitian(ctx, [np.array([[0, 1], [0, 0]])])

    def test_shape_check(self):
        ctx = TraceContext(((2, 1.0), (1, 1.0)))
        with pytest.raises(ValueError):
            BlockOperator(ctx, [np.eye(2)])
        with pytest.raises(ValueError):
            BlockOperator(ctx, [np.eye(2), np.eye(2)])

    def test_context_mismatch(self):
        a = diag([1.0, 2.0])
        b = diag([1.0, 2.0], [(1, 1.0), (1, 1.0)])
        with pytest.raises(ContextMismatch):
            a + b

    def test_blocks_read_only(self):
        a = diag([1.0, 2.0])
        with pytest.raises(ValueError):
            a.blocks[0][0, 0] = 5

    def test_arithmetic(self):
        a = diag([1.0, 2.0])
        assert (2 * a - a).allclose(a)
        assert (a + 1.0).allclose(diag([2.0, 3.0]))
        assert (a @ a).allclose(diag([1.0, 4.0]))
        assert (a / 2).allclose(diag([0.5, 1.0]))

    def test_json_round_trip(self, rng):
        ctx = inst.random_context(rng)
        h = inst.random_hermitian(ctx, rng)
        back = BlockOperator.from_json(json.loads(json.dumps(h.to_json())))
        assert back.allclose(h, atol=0)


class TestWeightedTrace:
    def test_identity(self):
        ctx = TraceContext(((2, 1.0), (1, 0.5)))
        assert weighted_trace(BlockOperator.identity(ctx)) == 2.5

    def test_zero(self):
        assert weighted_trace(BlockOperator.zeros(TraceContext.single(3))) == 0

    def test_diag(self):
        assert weighted_trace(diag([1.0, 2.0, 3.0], [(2, 1.0), (1, 0.5)])) == 4.5

    def test_trace_property(self, rng):
        for _ in range(20):
            ctx = inst.random_context(rng)
            a = BlockOperator(ctx, [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for n in ctx.dims])
            b = BlockOperator(ctx, [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for n in ctx.dims])
            ab, ba = weighted_trace(a @ b), weighted_trace(b @ a)
            assert abs(ab - ba) <= 1e-10 * (1 + abs(ab))


class TestEigendecompose:
    def test_diag(self):
        assert np.allclose(eigendecompose(diag([3.0, 1.0])).eigenvalues[0], [1.0, 3.0])

    def test_pauli(self):
        h = BlockOperator.hermitian(TraceContext.single(2), [PAULI_X])
        assert np.allclose(eigendecompose(h).eigenvalues[0], [-1.0, 1.0])

    def test_reconstruction(self, rng):
        h = inst.random_hermitian(TraceContext.single(8), rng)
        es = eigendecompose(h)
        for lam, u, b in zip(es.eigenvalues, es.eigenvectors, h.blocks):
            assert np.linalg.norm(u @ np.diag(lam) @ u.conj().T - b, 2) <= 1e-10 * (1 + h.norm())
            assert np.linalg.norm(u.conj().T @ u - np.eye(len(lam)), 2) <= 1e-10


class TestMatrixFunction:
    def test_identity(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        assert matrix_function(h, lambda x: x).allclose(h)

    def test_square_of_pauli(self):
        h = BlockOperator.hermitian(TraceContext.single(2), [PAULI_X])
        assert matrix_function(h, lambda x: x ** 2).allclose(BlockOperator.identity(h.context))

    def test_gaussian(self):
        out = matrix_function(diag([0.0, 2.0]), gaussian(1.0))
        assert out.allclose(diag([1.0, np.exp(-4.0)]), atol=1e-15)

    def test_multiplicative(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        f, g = np.sin, np.exp
        lhs = matrix_function(h, lambda x: f(x) * g(x))
        rhs = matrix_function(h, f) @ matrix_function(h, g)
        assert (lhs - rhs).norm() <= 1e-9


class TestSpectralProjection:
    def test_half_line(self):
        p = spectral_projection(diag([-1.0, 1.0]), 0.0, np.inf, closed=(True, False))
        assert p.allclose(diag([0.0, 1.0]))

    def test_whole_line(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        assert spectral_projection(h, -np.inf, np.inf).allclose(BlockOperator.identity(h.context))

    def test_kernel_capture(self):
        h = diag([0.0, 1.0])
        k = kappa(h)
        assert spectral_projection(h, -k / 2, k / 2, closed=(False, False)).allclose(diag([0.0, 0.0]))
        # the kernel tolerance snaps 0 onto the closed endpoint
        assert spectral_projection(h, -k / 2, k / 2, closed=(True, True), tol=k).allclose(diag([1.0, 0.0]))

    def test_idempotent_and_commuting(self, rng):
        for _ in range(10):
            h = inst.random_hermitian(inst.random_context(rng), rng)
            lo, hi = sorted(rng.uniform(-3, 3, 2))
            p = spectral_projection(h, lo, hi)
            assert (p @ p - p).norm() <= 1e-10
            assert (p @ h - h @ p).norm() <= 1e-10


class TestTraceAgainstSpectralMeasure:
    def test_identity(self, rng):
        h = inst.random_hermitian(inst.random_context(rng), rng)
        one = BlockOperator.identity(h.context)
        val = trace_against_spectral_measure(one, h, lambda x: np.ones_like(x))
        assert val == pytest.approx(h.context.tau_identity(), rel=1e-12)

    def test_kernel(self):
        val = trace_against_spectral_measure(diag([1.0, 0.0]), diag([0.0, 2.0]), lambda x: x)
        assert val == 0

    def test_functional_calculus_oracle(self, rng):
        ctx = TraceContext.single(6)
        h, v = inst.random_hermitian(ctx, rng), inst.random_hermitian(ctx, rng)
        val = trace_against_spectral_measure(v, h, np.cos)
        assert abs(val - weighted_trace(v @ matrix_function(h, np.cos))) <= 1e-10


class TestSignAndMap:
    def test_sign_ab(self):
        assert sign_ab(diag([-0.3, 0.7]), -1, 1).allclose(diag([-1.0, 1.0]))
        assert sign_ab(diag([0.0, 0.0]), -1, 2).allclose(diag([2.0, 2.0]))
        assert sign_ab(diag([-2.0, 0.0, 2.0]), -1, 1).allclose(diag([-1.0, 1.0, 1.0]))

    def test_sign_ab_window(self):
        with pytest.raises(ValueError):
            sign_ab(diag([1.0]), 0.5, 1.0)

    def test_f_map(self):
        assert f_map(diag([0.0, 0.0])).allclose(diag([0.0, 0.0]))
        assert f_map(diag([1.0])).allclose(diag([1 / np.sqrt(2)]))

    def test_f_map_order_kernel_and_range(self, rng):
        ctx = inst.random_context(rng)
        lam = rng.uniform(-50, 50, ctx.total_dim)
        lam[0] = 0.0
        h = inst.with_spectrum(ctx, lam, rng)
        es, ef = eigendecompose(h), eigendecompose(f_map(h))
        for a, b in zip(es.eigenvalues, ef.eigenvalues):
            assert np.all(np.abs(b) < 1)
            assert np.allclose(b, a / np.sqrt(1 + a * a))
            assert np.array_equal(np.argsort(a), np.argsort(b))
        assert sum(np.sum(np.abs(b) <= 1e-12) for b in ef.eigenvalues) == 1


class TestRelativeIndex:
    def test_equal(self):
        p = diag([1.0, 0.0])
        assert relative_index(ProjectionPair(p, p)) == 0

    def test_commuting(self):
        assert relative_index(ProjectionPair(diag([1.0, 0.0]), diag([1.0, 1.0]))) == 1

    def test_rejects_non_projection(self):
        with pytest.raises(ValueError):
            ProjectionPair(diag([0.5, 0.0]), diag([1.0, 0.0]))

    def test_antisymmetric_and_odd_function(self, rng):
        for i in range(20):
            ctx = inst.random_context(rng)
            pq = inst.random_projection_pair(ctx, rng, commuting=bool(i % 2))
            ri = relative_index(pq)
            assert relative_index(ProjectionPair(pq.q, pq.p)) == -ri
            odd = matrix_function(pq.p - pq.q, lambda x: x ** 3 + np.sin(x))
            # (f(1) with the sign convention tau(E_{-1}) - tau(E_{+1}))
            assert abs(weighted_trace(odd) + (1 + np.sin(1.0)) * ri) <= 1e-9


class TestResolventBound:
    def test_zero_perturbation(self):
        h = diag([0.0, 1.0])
        ok, margin = resolvent_bound_check(h, BlockOperator.zeros(h.context))
        assert ok and abs(margin) <= 1e-15

    def test_scalar(self):
        ok, margin = resolvent_bound_check(diag([0.0]), diag([1.0]))
        assert ok and margin >= 0

    def test_random(self, rng):
        for _ in range(500):
            ctx = inst.random_context(rng, (2, 8))
            h0 = inst.random_hermitian(ctx, rng, (-5, 5))
            a = inst.random_hermitian(ctx, rng, (-5, 5))
            assert resolvent_bound_check(h0, a)[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(0.25, 2.0))
def test_diag_trace_property(values, weight):
    ctx = TraceContext.single(len(values), weight)
    h = BlockOperator.diag(ctx, values)
    assert weighted_trace(h) == pytest.approx(weight * sum(values), abs=1e-12)
    lam, w = eigendecompose(h).flat()
    assert np.allclose(np.sort(lam), np.sort(values))
    assert np.all(w == weight)
