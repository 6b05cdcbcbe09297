"""Double operator integrals.

Two engines compute ``T^{H1,H0}_{f^{[1]}}(V)``:

* :func:`doi_schur` -- the Loewner (Schur multiplier) form in the eigenbases,
  exact up to eigensolver error;
* :func:`doi_fourier` -- the Birman-Solomyak integral over the region
  ``Pi = {|s1| <= |s0|, sign s0 = sign s1}`` against ``d nu_g``, with
  ``g = sqrt(f_i)`` for a splitting ``f = f1 - f2``.  Slow and coarse; it exists
  to check that the operator integral does not depend on the representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import BlockOperator, eigendecompose, matrix_function
from .quad import PiecewisePath, QuadratureSpec, gauss_legendre, integrate_scalar
from .weights import WeightFunction, split_smooth_squares

COINCIDENCE_DELTA = 1e-7


@dataclass(frozen=True)
class LoewnerMatrix:
    entries: np.ndarray
    coincidence_threshold: float = COINCIDENCE_DELTA


def loewner_matrix(f: WeightFunction, lam, mu, delta: float = COINCIDENCE_DELTA) -> LoewnerMatrix:
    """Divided differences ``f^{[1]}(lam_i, mu_j)`` with the derivative on near-coincidences."""
    x = np.asarray(lam, dtype=float)[:, None]
    y = np.asarray(mu, dtype=float)[None, :]
    diff = x - y
    close = np.abs(diff) <= delta * (1 + np.maximum(np.abs(x), np.abs(y)))
    safe = np.where(close, 1.0, diff)
    quotient = (np.asarray(f.fn(x), dtype=float) - np.asarray(f.fn(y), dtype=float)) / safe
    limit = np.asarray(f.deriv((x + y) / 2 + 0 * diff), dtype=float)
    return LoewnerMatrix(np.where(close, limit, quotient), delta)


def divided_difference(f: WeightFunction, x: float, y: float, delta: float = COINCIDENCE_DELTA) -> float:
    return float(loewner_matrix(f, [x], [y], delta).entries[0, 0])


def doi_schur(h1: BlockOperator, h0: BlockOperator, v: BlockOperator, f: WeightFunction) -> BlockOperator:
    """``U1 (L * (U1^* V U0)) U0^*`` with ``L`` the Loewner matrix over the two spectra."""
    h1._check(h0)
    h1._check(v)
    e1, e0 = eigendecompose(h1), eigendecompose(h0)
    blocks = []
    for lam, u1, mu, u0, vb in zip(e1.eigenvalues, e1.eigenvectors, e0.eigenvalues, e0.eigenvectors, v.blocks):
        lm = loewner_matrix(f, lam, mu).entries
        blocks.append(u1 @ (lm * (u1.conj().T @ vb @ u0)) @ u0.conj().T)
    return BlockOperator(h1.context, blocks)


def derivative_direction(h: BlockOperator, x: BlockOperator, f: WeightFunction) -> BlockOperator:
    """Frechet derivative of ``f`` at ``h`` in direction ``x``."""
    return doi_schur(h, h, x, f)


@dataclass(frozen=True)
class PiRegionQuadrature:
    """Discretization of ``Pi``.

    The outer ``s0`` integral uses composite Gauss-Legendre on ``[-S, 0]`` and
    ``[0, S]``; for each ``s0`` the inner ``s1`` integral runs over ``[0, s0]``
    (or ``[s0, 0]``).  ``S`` is chosen from an FFT of ``g`` so that the
    discarded tail of ``|g^|`` is below ``tail_fraction`` of its total mass,
    unless ``fourier_cutoff`` fixes it.
    """

    outer_panels: int = 16
    inner_panels: int = 8
    order: int = 16
    fft_samples: int = 2 ** 14
    tail_fraction: float = 1e-6
    fourier_cutoff: float | None = None

    def __post_init__(self):
        if self.fourier_cutoff is not None and not self.fourier_cutoff > 0:
            raise ValueError("fourier cutoff must be positive")

    @property
    def node_counts(self) -> tuple[int, int]:
        return 2 * self.outer_panels * self.order, self.inner_panels * self.order

    def refined(self, factor: int = 2) -> "PiRegionQuadrature":
        return PiRegionQuadrature(
            self.outer_panels * factor, self.inner_panels * factor, self.order,
            self.fft_samples, self.tail_fraction, self.fourier_cutoff,
        )

    def nodes(self, cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(s0, s1, weight, outer_index)`` flattened over all nodes in ``Pi``."""
        x, w = gauss_legendre(self.order)
        edges = np.linspace(0.0, cutoff, self.outer_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        pos = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        pos_w = (half[:, None] * w[None, :]).ravel()
        s0 = np.concatenate([-pos[::-1], pos])
        w0 = np.concatenate([pos_w[::-1], pos_w])
        # inner nodes on the reference interval [0, 1]
        ie = np.linspace(0.0, 1.0, self.inner_panels + 1)
        ih = 0.5 * np.diff(ie)
        im = 0.5 * (ie[:-1] + ie[1:])
        t = (im[:, None] + ih[:, None] * x[None, :]).ravel()
        tw = (ih[:, None] * w[None, :]).ravel()
        s1 = s0[:, None] * t[None, :]
        weight = w0[:, None] * np.abs(s0)[:, None] * tw[None, :]
        idx = np.repeat(np.arange(len(s0)), len(t))
        return s0[idx], s1.ravel(), weight.ravel(), idx


class _SampledTransform:
    """Unitary Fourier transform of a compactly supported function from dense samples."""

    def __init__(self, g, lo: float, hi: float, n: int):
        self.x = np.linspace(lo, hi, n)
        self.dx = self.x[1] - self.x[0]
        self.values = np.asarray(g(self.x), dtype=float)

    def __call__(self, s: np.ndarray, chunk: int = 256) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape, dtype=complex)
        for i in range(0, len(s), chunk):
            ph = np.exp(-1j * np.outer(s[i:i + chunk], self.x))
            out[i:i + chunk] = ph @ self.values
        return out * self.dx / math.sqrt(2 * math.pi)

    def cutoff(self, tail_fraction: float, pad: int = 4) -> float:
        n = len(self.values) * pad
        spec = np.abs(np.fft.fft(self.values, n)) * self.dx / math.sqrt(2 * math.pi)
        freq = np.abs(np.fft.fftfreq(n, d=self.dx)) * 2 * math.pi
        order = np.argsort(freq)
        freq, spec = freq[order], spec[order]
        total = spec.sum()
        tail = total - np.cumsum(spec)
        k = int(np.argmax(tail <= tail_fraction * total))
        return float(max(freq[k], freq[1]))


def _bs_kernel(g, transform: _SampledTransform, lam, mu, nodes) -> np.ndarray:
    s0, s1, weight, _ = nodes
    uniq, inv = np.unique(s0, return_inverse=True)
    ghat = transform(uniq)
    dnu = np.sign(s0) * 1j / math.sqrt(2 * math.pi) * ghat[inv] * weight
    a = np.exp(1j * np.outer(s0 - s1, lam))  # e^{i(s0-s1) lambda}
    b = np.exp(1j * np.outer(s1, mu))  # e^{i s1 mu}
    g_lam = np.asarray(g(np.asarray(lam)), dtype=float)
    g_mu = np.asarray(g(np.asarray(mu)), dtype=float)
    # alpha1 beta1 + alpha2 beta2 with alpha1 = a g(lam), beta2 = b g(mu)
    k1 = (dnu[:, None] * a * g_lam[None, :]).T @ b
    k2 = (dnu[:, None] * a).T @ (b * g_mu[None, :])
    return k1 + k2


def doi_fourier(
    h1: BlockOperator,
    h0: BlockOperator,
    v: BlockOperator,
    f: WeightFunction,
    quad: PiRegionQuadrature = PiRegionQuadrature(),
) -> BlockOperator:
    """Operator integral via the Birman-Solomyak representation over ``Pi``."""
    h1._check(h0)
    h1._check(v)
    if not f.compact:
        raise ValueError("doi_fourier needs a compactly supported function")
    if not f.smoothness_at_least(2):
        raise ValueError("doi_fourier needs a C^2 function")
    e1, e0 = eigendecompose(h1), eigendecompose(h0)
    parts = split_smooth_squares(f)
    total = [np.zeros_like(b) for b in v.blocks]
    for sign, part in zip((1.0, -1.0), parts):
        def g(x, part=part):
            return np.sqrt(np.maximum(part.fn(x), 0.0))

        lo, hi = part.support
        transform = _SampledTransform(g, lo, hi, quad.fft_samples)
        cutoff = quad.fourier_cutoff or transform.cutoff(quad.tail_fraction)
        nodes = quad.nodes(cutoff)
        for k, (lam, u1, mu, u0, vb) in enumerate(
            zip(e1.eigenvalues, e1.eigenvectors, e0.eigenvalues, e0.eigenvectors, v.blocks)
        ):
            kern = _bs_kernel(g, transform, lam, mu, nodes)
            total[k] = total[k] + sign * (u1 @ (kern * (u1.conj().T @ vb @ u0)) @ u0.conj().T)
    return BlockOperator(h1.context, total)


def newton_leibnitz(path: PiecewisePath, f: WeightFunction, spec: QuadratureSpec = QuadratureSpec()) -> BlockOperator:
    """``sum_k int_0^1 T^{H_r,H_r}_{f^{[1]}}(V_k) dr`` along a broken path."""
    ctx = path.start.context
    shapes = [(n, n) for n in ctx.dims]
    sizes = [n * n for n in ctx.dims]
    acc = np.zeros(sum(sizes), dtype=complex)
    for k in range(path.n_segments):
        base, vk = path.segment(k)

        def integrand(r, base=base, vk=vk):
            t = derivative_direction(base + r * vk, vk, f)
            return np.concatenate([b.ravel() for b in t.blocks])

        val, _ = integrate_scalar(integrand, spec, (0.0, 1.0))
        acc = acc + val
    blocks, start = [], 0
    for shape, size in zip(shapes, sizes):
        blocks.append(acc[start:start + size].reshape(shape))
        start += size
    return BlockOperator(ctx, blocks)


def daletskii_krein_residual(h0: BlockOperator, v: BlockOperator, f: WeightFunction) -> float:
    """``||f(H0+V) - f(H0) - T^{H0+V,H0}(V)||`` in operator norm."""
    h1 = h0 + v
    lhs = matrix_function(h1, f.fn) - matrix_function(h0, f.fn)
    return (lhs - doi_schur(h1, h0, v, f)).norm()
