"""Operator paths and deterministic adaptive Gauss-Legendre quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .algebra import BlockOperator, kappa


class QuadratureError(RuntimeError):
    """Budget exhausted before the requested tolerance was met."""


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 16
    tolerance: float = 1e-9
    max_subdivisions: int = 40
    crossing_aware: bool = True
    max_panels: int = 20000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.order < 2:
            raise ValueError("order must be at least 2")

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "tolerance": self.tolerance,
            "max_subdivisions": self.max_subdivisions,
            "crossing_aware": self.crossing_aware,
        }

    @classmethod
    def from_json(cls, data: dict | None) -> "QuadratureSpec":
        data = dict(data or {})
        return cls(**{k: data[k] for k in ("order", "tolerance", "max_subdivisions", "crossing_aware") if k in data})


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _panel(fn, a, b, order):
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = [fn(mid + half * t) for t in x]
    acc = sum(wi * np.asarray(v) for wi, v in zip(w, vals))
    return half * acc


def _size(x) -> float:
    return float(np.max(np.abs(x))) if np.ndim(x) else abs(x)


def integrate_scalar(
    fn: Callable[[float], float],
    spec: QuadratureSpec = QuadratureSpec(),
    domain: tuple[float, float] = (0.0, 1.0),
) -> tuple[float, float]:
    """Adaptive Gauss-Legendre quadrature with panel bisection.

    Each panel is compared with its two halves; panels are accepted when the
    difference is below their share of ``tolerance * max(1, |I|)``.  ``fn`` may
    return numpy arrays, in which case the max-abs norm drives refinement.
    Accepted panels are summed in ascending order, so the result does not
    depend on evaluation order.

    Returns ``(value, error_estimate)``.
    """
    r0, r1 = map(float, domain)
    if r0 == r1:
        return 0.0 * np.asarray(fn(r0)), 0.0
    order = spec.order
    whole = _panel(fn, r0, r1, order)
    stack = [(r0, r1, whole, 0)]
    accepted = []
    scale = max(1.0, _size(whole))
    width = r1 - r0
    n_panels = 0
    while stack:
        a, b, coarse, depth = stack.pop()
        m = 0.5 * (a + b)
        left = _panel(fn, a, m, order)
        right = _panel(fn, m, b, order)
        fine = left + right
        err = _size(fine - coarse)
        n_panels += 2
        budget = spec.tolerance * scale * (b - a) / width
        if err <= budget or (err <= 1e-15 * scale):
            accepted.append((a, fine, err))
            continue
        if depth >= spec.max_subdivisions or n_panels > spec.max_panels:
            raise QuadratureError(
                f"quadrature did not converge on [{a:.6g}, {b:.6g}] "
                f"(error {err:.3g} > {budget:.3g})"
            )
        stack.append((m, b, right, depth + 1))
        stack.append((a, m, left, depth + 1))
    accepted.sort(key=lambda t: t[0])
    vals = [v for _, v, _ in accepted]
    if np.ndim(vals[0]):
        total = np.sum(np.stack(vals), axis=0)
    else:
        total = math.fsum(vals)
    err = math.fsum(e for _, _, e in accepted)
    return total, err


def integrate_pieces(fn, breakpoints: Sequence[float], spec: QuadratureSpec = QuadratureSpec()):
    """Integrate over consecutive subintervals given by sorted breakpoints."""
    pts = sorted(set(float(p) for p in breakpoints))
    vals, errs = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-15 * (1 + abs(a)):
            continue
        # each piece carries the full tolerance budget scaled by its width
        v, e = integrate_scalar(fn, spec, (a, b))
        vals.append(v)
        errs.append(e)
    if not vals:
        return 0.0, 0.0
    if np.ndim(vals[0]):
        return np.sum(np.stack(vals), axis=0), math.fsum(errs)
    return math.fsum(vals), math.fsum(errs)


@dataclass(frozen=True)
class PiecewisePath:
    """Broken line through Hermitian vertices, parameterized uniformly by r in [0, 1]."""

    vertices: tuple[BlockOperator, ...]

    def __post_init__(self):
        verts = tuple(self.vertices)
        if len(verts) < 2:
            raise ValueError("a path needs at least two vertices")
        for v in verts[1:]:
            verts[0]._check(v)
        for v in verts:
            if not v.is_hermitian(1e-10):
                raise ValueError("path vertices must be Hermitian")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def straight(cls, h0: BlockOperator, h1: BlockOperator) -> "PiecewisePath":
        return cls((h0, h1))

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    @property
    def start(self) -> BlockOperator:
        return self.vertices[0]

    @property
    def end(self) -> BlockOperator:
        return self.vertices[-1]

    def segment(self, k: int) -> tuple[BlockOperator, BlockOperator]:
        """Base point and direction ``V_k`` of segment ``k``."""
        return self.vertices[k], self.vertices[k + 1] - self.vertices[k]

    def breakpoints(self) -> list[float]:
        return [k / self.n_segments for k in range(self.n_segments + 1)]

    def locate(self, r: float) -> tuple[int, float]:
        k = min(int(r * self.n_segments), self.n_segments - 1)
        return k, r * self.n_segments - k

    def at(self, r: float) -> BlockOperator:
        k, t = self.locate(r)
        base, v = self.segment(k)
        return base + t * v

    def velocity(self, r: float) -> BlockOperator:
        k, _ = self.locate(r)
        return self.n_segments * self.segment(k)[1]

    def kappa(self) -> float:
        return kappa(*self.vertices)


@dataclass(frozen=True)
class Crossing:
    r: float
    direction: int
    weight: float
    block: int = field(default=0, compare=False)


def _block_eigs(path: PiecewisePath, r: float, block: int) -> np.ndarray:
    k, t = path.locate(r)
    base, v = path.segment(k)
    m = base.blocks[block] + t * v.blocks[block]
    return np.linalg.eigvalsh((m + m.conj().T) / 2)


def detect_level_crossings(
    path: PiecewisePath, level: float, samples: int = 64, rtol: float = 1e-12
) -> list[Crossing]:
    """Parameters where a sorted eigenvalue branch of ``H_r`` passes ``level``.

    Branches are sampled on ``samples`` points per segment and sign changes of
    ``lambda_i(r) - level`` are bisected to ``rtol``.  Touchings that do not
    change sign between samples are invisible; a branch that touches and
    returns inside one sample interval shows up as nothing, one that does so
    across samples shows up as a +/- pair.
    """
    ctx = path.start.context
    out: list[Crossing] = []
    n = path.n_segments
    grid = np.linspace(0.0, 1.0, n * samples + 1)
    for bi, w in enumerate(ctx.weights):
        vals = np.array([_block_eigs(path, r, bi) for r in grid]) - level
        for i in range(vals.shape[1]):
            g = vals[:, i]
            for j in range(len(grid) - 1):
                ga, gb = g[j], g[j + 1]
                if (ga < 0) == (gb < 0):
                    continue
                lo, hi = grid[j], grid[j + 1]
                # g(lo) < 0 <= g(hi) or the reverse; keep that invariant
                neg_low = ga < 0
                while hi - lo > rtol:
                    mid = 0.5 * (lo + hi)
                    gm = _block_eigs(path, mid, bi)[i] - level
                    if (gm < 0) == neg_low:
                        lo = mid
                    else:
                        hi = mid
                root = 0.5 * (lo + hi)
                step = 1e-6 / n
                a, b = max(root - step, 0.0), min(root + step, 1.0)
                slope = (_block_eigs(path, b, bi)[i] - _block_eigs(path, a, bi)[i]) / (b - a)
                direction = 0 if abs(slope) < 1e-8 else (1 if neg_low else -1)
                out.append(Crossing(root, direction, w, bi))
    out.sort(key=lambda c: (c.r, c.block))
    return out


def integrate_with_crossings(
    fn: Callable[[float], float],
    path: PiecewisePath,
    levels: Sequence[float],
    spec: QuadratureSpec = QuadratureSpec(),
) -> tuple[float, float]:
    """Integrate over r in [0, 1], splitting at level crossings and path vertices."""
    points = set(path.breakpoints())
    if spec.crossing_aware:
        for level in levels:
            if np.isfinite(level):
                points.update(c.r for c in detect_level_crossings(path, level))
    return integrate_pieces(fn, sorted(points), spec)
