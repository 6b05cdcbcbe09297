"""Seeded generation of test operators."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .algebra import BlockOperator, ProjectionPair, TraceContext


def random_context(
    rng: np.random.Generator,
    total_dim: tuple[int, int] = (2, 12),
    min_blocks: int = 2,
    max_blocks: int = 4,
    weights: tuple[float, float] = (0.25, 2.0),
) -> TraceContext:
    n = int(rng.integers(max(total_dim[0], min_blocks), total_dim[1] + 1))
    k = int(rng.integers(min_blocks, min(max_blocks, n) + 1))
    # split n into k positive parts
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else []
    dims = np.diff(np.concatenate([[0], cuts, [n]])).astype(int)
    return TraceContext(tuple((int(d), float(rng.uniform(*weights))) for d in dims))


def random_unitary(ctx: TraceContext, rng: np.random.Generator) -> BlockOperator:
    return BlockOperator(ctx, [unitary_group.rvs(n, random_state=rng) if n > 1 else np.exp(2j * np.pi * rng.random()) * np.eye(1) for n in ctx.dims])


def with_spectrum(ctx: TraceContext, spectrum: Sequence[float], rng: np.random.Generator) -> BlockOperator:
    """Hermitian operator with the given flat spectrum, conjugated by a random unitary."""
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.size != ctx.total_dim:
        raise ValueError("spectrum length does not match the context dimension")
    u = random_unitary(ctx, rng)
    blocks, start = [], 0
    for n, ub in zip(ctx.dims, u.blocks):
        lam = spectrum[start:start + n]
        start += n
        blocks.append(ub @ np.diag(lam) @ ub.conj().T)
    return BlockOperator.hermitian(ctx, blocks)


def random_hermitian(
    ctx: TraceContext, rng: np.random.Generator, spectrum_range: tuple[float, float] = (-3.0, 3.0)
) -> BlockOperator:
    return with_spectrum(ctx, rng.uniform(*spectrum_range, size=ctx.total_dim), rng)


def gauge(h0: BlockOperator, u: BlockOperator) -> BlockOperator:
    """``u h0 u^*``, symmetrized."""
    return BlockOperator.hermitian(h0.context, (u @ h0 @ u.H).blocks)


def lattice_shift(n: int) -> tuple[BlockOperator, BlockOperator]:
    """Truncated lattice ``diag(-n, ..., n)`` and its unit shift."""
    if n < 1:
        raise ValueError("lattice_shift needs n >= 1")
    ctx = TraceContext.single(2 * n + 1)
    h0 = BlockOperator.diag(ctx, np.arange(-n, n + 1, dtype=float))
    return h0, h0 + 1.0


def random_projection(ctx: TraceContext, rng: np.random.Generator) -> BlockOperator:
    blocks = []
    for n, ub in zip(ctx.dims, random_unitary(ctx, rng).blocks):
        rank = int(rng.integers(0, n + 1))
        uu = ub[:, :rank]
        blocks.append(uu @ uu.conj().T)
    return BlockOperator.hermitian(ctx, blocks)


def random_projection_pair(ctx: TraceContext, rng: np.random.Generator, commuting: bool = False) -> ProjectionPair:
    if not commuting:
        return ProjectionPair(random_projection(ctx, rng), random_projection(ctx, rng))
    u = random_unitary(ctx, rng)
    pb, qb = [], []
    for n, ub in zip(ctx.dims, u.blocks):
        dp = rng.integers(0, 2, n).astype(float)
        dq = rng.integers(0, 2, n).astype(float)
        pb.append(ub @ np.diag(dp) @ ub.conj().T)
        qb.append(ub @ np.diag(dq) @ ub.conj().T)
    return ProjectionPair(BlockOperator.hermitian(ctx, pb), BlockOperator.hermitian(ctx, qb))
