"""Spectral shift function and measure.

In a finite context the spectral shift function of ``(H0, H1)`` is the exact
step function ``xi(lam) = tau(E^{H0}_{(-inf, lam]}) - tau(E^{H1}_{(-inf, lam]})``,
normalized by ``xi(-inf) = 0``.  Jumps are kept as exact rationals of the
(float) block weights so that counting identities hold without rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import BlockOperator, eigendecompose, kappa, phi
from .quad import (
    PiecewisePath,
    QuadratureSpec,
    integrate_scalar,
    integrate_with_crossings,
)
from .weights import WeightFunction, normalization_constant


@dataclass(frozen=True)
class SsfProfile:
    """Right-continuous step function given by jump locations and signed weighted jumps."""

    locations: tuple[float, ...]
    exact_jumps: tuple[Fraction, ...]
    kappa: float
    domain: tuple[float, float] = (-math.inf, math.inf)

    @property
    def jumps(self) -> np.ndarray:
        return np.array([float(j) for j in self.exact_jumps])

    def __len__(self) -> int:
        return len(self.locations)

    def _exact(self, lam: float) -> tuple[Fraction, Fraction]:
        below, at = Fraction(0), Fraction(0)
        for x, j in zip(self.locations, self.exact_jumps):
            if abs(x - lam) <= self.kappa:
                at += j
            elif x < lam:
                below += j
        return below, at

    def exact_value(self, lam: float) -> Fraction:
        below, at = self._exact(lam)
        return below + at / 2

    def left(self, lam: float) -> float:
        return float(self._exact(lam)[0])

    def right(self, lam: float) -> float:
        below, at = self._exact(lam)
        return float(below + at)

    def value(self, lam: float) -> float:
        return float(self.exact_value(lam))

    def steps(self) -> list[tuple[float, float, float]]:
        """``(lo, hi, value)`` for each bounded interval between consecutive jumps."""
        out = []
        acc = Fraction(0)
        for k in range(len(self.locations) - 1):
            acc += self.exact_jumps[k]
            out.append((self.locations[k], self.locations[k + 1], float(acc)))
        return out

    def integral(self, lo: float, hi: float) -> float:
        """``int_lo^hi xi``."""
        total = []
        for a, b, val in self.steps():
            a, b = max(a, lo), min(b, hi)
            if b > a and val != 0:
                total.append(val * (b - a))
        return math.fsum(total)

    def integrate(self, f: WeightFunction) -> float:
        """``int f xi`` with ``f`` integrated exactly (or by quadrature) on each step."""
        return math.fsum(val * f.integral(a, b) for a, b, val in self.steps() if val != 0)

    def integrate_derivative(self, f: WeightFunction) -> float:
        """``int f' xi`` as a sum of differences of ``f`` over the steps."""
        return math.fsum(
            val * (float(f.fn(b)) - float(f.fn(a))) for a, b, val in self.steps() if val != 0
        )

    def to_json(self) -> dict:
        return {
            "domain": [_json_float(self.domain[0]), _json_float(self.domain[1])],
            "kappa": self.kappa,
            "jumps": [{"lambda": x, "jump": float(j)} for x, j in zip(self.locations, self.exact_jumps)],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["lambda", "xi_left", "xi_half", "xi_right"])
        for x in self.locations:
            w.writerow([fmt(x), fmt(self.left(x)), fmt(self.value(x)), fmt(self.right(x))])
        return buf.getvalue()


def _json_float(x: float):
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def fmt(x: float) -> str:
    return f"{x:.17g}"


def _merge(entries, tol) -> tuple[tuple[float, ...], tuple[Fraction, ...]]:
    entries = sorted(entries, key=lambda e: e[0])
    locs, jumps = [], []
    i = 0
    while i < len(entries):
        j = i + 1
        while j < len(entries) and entries[j][0] - entries[j - 1][0] <= tol:
            j += 1
        s = sum((e[1] for e in entries[i:j]), Fraction(0))
        if s != 0:
            locs.append(float(np.mean([e[0] for e in entries[i:j]])))
            jumps.append(s)
        i = j
    return tuple(locs), tuple(jumps)


def ssf_profile(h0: BlockOperator, h1: BlockOperator, domain=(-math.inf, math.inf)) -> SsfProfile:
    """``xi_{H1,H0}``: ``+w`` at each eigenvalue of ``H0``, ``-w`` at each of ``H1``."""
    h0._check(h1)
    tol = kappa(h0, h1)
    lam0, w0 = eigendecompose(h0).flat()
    lam1, w1 = eigendecompose(h1).flat()
    entries = [(float(x), Fraction(float(w))) for x, w in zip(lam0, w0)]
    entries += [(float(x), -Fraction(float(w))) for x, w in zip(lam1, w1)]
    locs, jumps = _merge(entries, tol)
    return SsfProfile(locs, jumps, tol, tuple(domain))


def ssf_eval(profile: SsfProfile, lam: float) -> float:
    """Step value off the jumps, half sum of the one-sided limits on them."""
    return profile.value(lam)


def _tau_v_projection(v: BlockOperator, h: BlockOperator, lo: float, hi: float) -> float:
    es = eigendecompose(h)
    tol = kappa(h)
    total = 0.0
    for lam, u, w, vb in zip(es.eigenvalues, es.eigenvectors, es.weights, v.blocks):
        mask = (lam > lo + tol) & (lam <= hi + tol)
        if np.any(mask):
            uu = u[:, mask]
            total += w * np.real(np.einsum("ij,ji->", uu.conj().T, vb @ uu))
    return float(total)


def ssm_quadrature(
    h0: BlockOperator,
    v: BlockOperator,
    interval: tuple[float, float],
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """``Xi(Delta) = int_0^1 tau(V E^{H_r}_Delta) dr`` for ``Delta = (lo, hi]``."""
    h0._check(v)
    lo, hi = map(float, interval)
    if lo > hi:
        raise ValueError(f"invalid interval ({lo}, {hi}]")
    path = PiecewisePath.straight(h0, h0 + v)
    val, _ = integrate_with_crossings(
        lambda r: _tau_v_projection(v, h0 + r * v, lo, hi), path, [lo, hi], spec
    )
    return float(val)


def _tau_v_f(v: BlockOperator, h: BlockOperator, fn, shift: float = 0.0) -> float:
    es = eigendecompose(h)
    total = 0.0
    for lam, u, w, vb in zip(es.eigenvalues, es.eigenvectors, es.weights, v.blocks):
        diag = np.real(np.einsum("ij,ji->i", u.conj().T, vb @ u))
        total += w * float(np.dot(np.asarray(fn(lam - shift), dtype=float), diag))
    return total


def pairing(
    h0: BlockOperator,
    v: BlockOperator,
    f: WeightFunction,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """``int_0^1 tau(V f(H_r)) dr`` along ``H_r = H0 + r V``."""
    h0._check(v)
    val, _ = integrate_scalar(lambda r: _tau_v_f(v, h0 + r * v, f.fn), spec, (0.0, 1.0))
    return float(val)


def trace_formula_residual(h0: BlockOperator, h1: BlockOperator, f: WeightFunction) -> float:
    """``|tau(f(H1) - f(H0)) - int f' xi|`` with the right side summed exactly over steps."""
    lam0, w0 = eigendecompose(h0).flat()
    lam1, w1 = eigendecompose(h1).flat()
    lhs = math.fsum(np.concatenate([w1 * f.fn(lam1), -w0 * f.fn(lam0)]))
    rhs = ssf_profile(h0, h1).integrate_derivative(f)
    return abs(lhs - rhs)


def invariance_map(profile: SsfProfile) -> SsfProfile:
    """Push an unbounded-picture profile through ``x -> x / sqrt(1 + x^2)``."""
    locs = tuple(float(phi(x)) for x in profile.locations)
    return SsfProfile(locs, profile.exact_jumps, profile.kappa, (-1.0, 1.0))


def additivity_residual(h0: BlockOperator, h1: BlockOperator, h2: BlockOperator, lam: float) -> float:
    """``|xi_{H2,H0} - xi_{H2,H1} - xi_{H1,H0}|`` at ``lam`` using half-sum values."""
    x20 = ssf_profile(h0, h2).exact_value(lam)
    x21 = ssf_profile(h1, h2).exact_value(lam)
    x10 = ssf_profile(h0, h1).exact_value(lam)
    return abs(float(x20 - x21 - x10))


def weighted_average(
    h0: BlockOperator,
    v: BlockOperator,
    f: WeightFunction,
    mu: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> tuple[float, float, float]:
    """``C^{-1} int_0^1 tau(V f(H_r - mu)) dr``; returns ``(value, integral, C)``."""
    c = normalization_constant(f)
    if c == 0:
        raise ValueError("weight function has zero integral")
    integral, _ = integrate_scalar(lambda r: _tau_v_f(v, h0 + r * v, f.fn, mu), spec, (0.0, 1.0))
    return float(integral) / c, float(integral), c
