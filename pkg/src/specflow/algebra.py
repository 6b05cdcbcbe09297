"""Finite-dimensional model of a semifinite von Neumann algebra.

The algebra is a direct sum of full matrix blocks, ``N = M_{n_1} + ... + M_{n_k}``,
and the trace weights each block: ``tau(A) = sum_k w_k Tr(A_k)``.  Non-integer
weights give non-integer trace dimensions, which is all that is needed to
exercise spectral flow beyond ``B(H)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
KAPPA_REL = 1e-9


class ContextMismatch(ValueError):
    """Operators do not live in the same block structure."""


@dataclass(frozen=True)
class TraceContext:
    """Block dimensions and positive weights defining the trace."""

    blocks: tuple[tuple[int, float], ...]

    def __post_init__(self):
        blocks = tuple((int(n), float(w)) for n, w in self.blocks)
        if not blocks:
            raise ValueError("a trace context needs at least one block")
        for n, w in blocks:
            if n < 1:
                raise ValueError(f"block dimension must be positive, got {n}")
            if not (np.isfinite(w) and w > 0):
                raise ValueError(f"block weight must be positive and finite, got {w}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def single(cls, dim: int, weight: float = 1.0) -> "TraceContext":
        return cls(((dim, weight),))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.blocks)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for _, w in self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def tau_identity(self) -> float:
        return float(sum(n * w for n, w in self.blocks))

    def to_json(self) -> list[dict]:
        return [{"dim": n, "weight": w} for n, w in self.blocks]

    @classmethod
    def from_json(cls, data: Sequence[dict]) -> "TraceContext":
        return cls(tuple((int(b["dim"]), float(b["weight"])) for b in data))


class BlockOperator:
    """Block-diagonal complex matrix over a :class:`TraceContext`.

    Instances are treated as immutable; the block arrays are marked read-only
    and the eigensystem is cached on first use.
    """

    __slots__ = ("context", "blocks", "_eig")

    def __init__(self, context: TraceContext, blocks: Iterable[np.ndarray]):
        blocks = tuple(np.array(b, dtype=complex) for b in blocks)
        if len(blocks) != len(context.blocks):
            raise ContextMismatch(
                f"expected {len(context.blocks)} blocks, got {len(blocks)}"
            )
        for b, n in zip(blocks, context.dims):
            if b.shape != (n, n):
                raise ContextMismatch(f"block of shape {b.shape} does not match dim {n}")
            b.setflags(write=False)
        self.context = context
        self.blocks = blocks
        self._eig = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def hermitian(cls, context: TraceContext, blocks: Iterable) -> "BlockOperator":
        """Self-adjoint constructor: checks near-Hermiticity, then symmetrizes."""
        out = []
        for b in blocks:
            b = np.array(b, dtype=complex)
            scale = 1.0 + (np.abs(b).max() if b.size else 0.0)
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ContextMismatch(f"block must be square, got shape {b.shape}")
            if np.abs(b - b.conj().T).max(initial=0.0) > HERMITIAN_RTOL * scale:
                raise ValueError("block is not Hermitian within tolerance")
            out.append((b + b.conj().T) / 2)
        return cls(context, out)

    @classmethod
    def zeros(cls, context: TraceContext) -> "BlockOperator":
        return cls(context, [np.zeros((n, n)) for n in context.dims])

    @classmethod
    def identity(cls, context: TraceContext) -> "BlockOperator":
        return cls(context, [np.eye(n) for n in context.dims])

    @classmethod
    def diag(cls, context: TraceContext, values: Sequence[float]) -> "BlockOperator":
        """Diagonal operator from a flat list of entries, split across blocks."""
        values = np.asarray(values, dtype=complex)
        if values.size != context.total_dim:
            raise ContextMismatch(
                f"{values.size} diagonal entries for total dimension {context.total_dim}"
            )
        out, start = [], 0
        for n in context.dims:
            out.append(np.diag(values[start:start + n]))
            start += n
        return cls(context, out)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "BlockOperator"):
        if not isinstance(other, BlockOperator):
            raise TypeError(f"expected BlockOperator, got {type(other).__name__}")
        if other.context != self.context:
            raise ContextMismatch("operators live in different trace contexts")

    def __add__(self, other):
        if np.isscalar(other):
            return BlockOperator(self.context, [b + other * np.eye(len(b)) for b in self.blocks])
        self._check(other)
        return BlockOperator(self.context, [a + b for a, b in zip(self.blocks, other.blocks)])

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-other)
        self._check(other)
        return BlockOperator(self.context, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return BlockOperator(self.context, [-b for b in self.blocks])

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return BlockOperator(self.context, [c * b for b in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        self._check(other)
        return BlockOperator(self.context, [a @ b for a, b in zip(self.blocks, other.blocks)])

    def __repr__(self):
        return f"BlockOperator(dims={self.context.dims})"

    @property
    def H(self) -> "BlockOperator":
        return BlockOperator(self.context, [b.conj().T for b in self.blocks])

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(
            np.abs(b - b.conj().T).max(initial=0.0) <= tol * (1 + np.abs(b).max(initial=0.0))
            for b in self.blocks
        )

    def norm(self) -> float:
        """Operator norm (max over blocks of the spectral norm)."""
        return max((np.linalg.norm(b, 2) if b.size else 0.0) for b in self.blocks)

    def dense(self) -> np.ndarray:
        n = self.context.total_dim
        out = np.zeros((n, n), dtype=complex)
        start = 0
        for b in self.blocks:
            k = len(b)
            out[start:start + k, start:start + k] = b
            start += k
        return out

    def allclose(self, other: "BlockOperator", atol: float = 1e-10) -> bool:
        self._check(other)
        return all(np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.blocks, other.blocks))

    # -- JSON -------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "context": self.context.to_json(),
            "blocks": [matrix_to_json(b) for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data: dict, hermitian: bool = True) -> "BlockOperator":
        ctx = TraceContext.from_json(data["context"])
        blocks = [matrix_from_json(b) for b in data["blocks"]]
        return cls.hermitian(ctx, blocks) if hermitian else cls(ctx, blocks)


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(d: dict) -> np.ndarray:
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape:
        raise ValueError("real and imaginary parts differ in shape")
    return re + 1j * im


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: tuple[np.ndarray, ...]
    eigenvectors: tuple[np.ndarray, ...]
    weights: tuple[float, ...]

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All eigenvalues with the trace weight attached to each."""
        lam = np.concatenate(self.eigenvalues)
        w = np.concatenate([np.full(len(e), w) for e, w in zip(self.eigenvalues, self.weights)])
        return lam, w


def weighted_trace(a: BlockOperator) -> complex | float:
    """``tau(A) = sum_k w_k Tr(A_k)``; real when ``A`` is Hermitian."""
    if not isinstance(a, BlockOperator):
        raise TypeError("weighted_trace expects a BlockOperator")
    total = sum(w * np.trace(b) for b, w in zip(a.blocks, a.context.weights))
    total = complex(total)
    if a.is_hermitian(1e-12):
        return total.real
    return total


def eigendecompose(h: BlockOperator) -> EigenSystem:
    if h._eig is not None:
        return h._eig
    if not h.is_hermitian(HERMITIAN_RTOL * 100):
        raise ValueError("eigendecompose needs a Hermitian operator")
    vals, vecs = [], []
    for b in h.blocks:
        lam, u = np.linalg.eigh((b + b.conj().T) / 2)
        lam.setflags(write=False)
        u.setflags(write=False)
        vals.append(lam)
        vecs.append(u)
    es = EigenSystem(tuple(vals), tuple(vecs), h.context.weights)
    h._eig = es
    return es


def kappa(*ops: BlockOperator) -> float:
    """Kernel tolerance shared by a family of operators."""
    return KAPPA_REL * (1.0 + max(op.norm() for op in ops))


def _apply(f: Callable, lam: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(lam), dtype=complex)
    if vals.shape != lam.shape:
        vals = np.array([complex(f(x)) for x in lam])
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite on the spectrum")
    return vals


def matrix_function(h: BlockOperator, f: Callable) -> BlockOperator:
    """``U f(Lambda) U^*`` blockwise.  ``f`` must accept numpy arrays."""
    es = eigendecompose(h)
    blocks = []
    for lam, u in zip(es.eigenvalues, es.eigenvectors):
        fl = _apply(f, lam)
        blocks.append((u * fl) @ u.conj().T)
    return BlockOperator(h.context, blocks)


def _in_interval(lam, lo, hi, closed, tol):
    lo_closed, hi_closed = closed
    # snap eigenvalues within tol of an endpoint onto it
    at_lo = np.abs(lam - lo) <= tol if np.isfinite(lo) else np.zeros(lam.shape, bool)
    at_hi = np.abs(lam - hi) <= tol if np.isfinite(hi) else np.zeros(lam.shape, bool)
    inside = (lam > lo + tol) & (lam < hi - tol)
    if lo_closed:
        inside |= at_lo
    if hi_closed:
        inside |= at_hi
    if lo == hi:
        inside = at_lo & lo_closed & hi_closed
    return inside


def spectral_projection(
    h: BlockOperator,
    lo: float,
    hi: float,
    closed: tuple[bool, bool] = (False, True),
    tol: float | None = None,
) -> BlockOperator:
    """Projection onto the eigenspaces of ``h`` with eigenvalue in the interval.

    ``closed`` gives (left closed, right closed); the default is ``(lo, hi]``.
    """
    if lo > hi:
        raise ValueError(f"invalid interval ({lo}, {hi})")
    tol = kappa(h) if tol is None else tol
    es = eigendecompose(h)
    blocks = []
    for lam, u in zip(es.eigenvalues, es.eigenvectors):
        mask = _in_interval(lam, lo, hi, closed, tol)
        uu = u[:, mask]
        blocks.append(uu @ uu.conj().T)
    return BlockOperator(h.context, blocks)


def trace_against_spectral_measure(v: BlockOperator, h: BlockOperator, alpha: Callable) -> float:
    """``sum_i alpha(lambda_i) tau(V P_i)`` over distinct eigenvalues of ``h``."""
    v._check(h)
    es = eigendecompose(h)
    tol = kappa(h)
    total = 0.0
    for lam, u, w, vb in zip(es.eigenvalues, es.eigenvectors, es.weights, v.blocks):
        i = 0
        while i < len(lam):
            j = i + 1
            while j < len(lam) and lam[j] - lam[j - 1] <= tol:
                j += 1
            uu = u[:, i:j]
            t = np.trace(uu.conj().T @ vb @ uu)
            total += w * complex(alpha(np.array([lam[i:j].mean()]))[0]) * t
            i = j
    total = complex(total)
    return total.real if abs(total.imag) <= 1e-12 * (1 + abs(total.real)) else total


def sign_ab(f: BlockOperator, a: float, b: float) -> BlockOperator:
    """Two-valued step: ``b`` on eigenvalues ``>= 0`` (after kernel snapping), ``a`` below."""
    if not (a < 0 < b):
        raise ValueError("sign_ab needs a < 0 < b")
    tol = kappa(f)
    return matrix_function(f, lambda x: np.where(np.asarray(x).real >= -tol, b, a))


def phi(x):
    """The bounded transform ``x (1 + x^2)^(-1/2)``."""
    x = np.asarray(x, dtype=float)
    return x / np.sqrt(1.0 + x * x)


def f_map(h: BlockOperator) -> BlockOperator:
    return matrix_function(h, lambda x: phi(np.asarray(x).real))


@dataclass(frozen=True)
class ProjectionPair:
    p: BlockOperator
    q: BlockOperator

    def __post_init__(self):
        self.p._check(self.q)
        for name, x in (("p", self.p), ("q", self.q)):
            if not x.is_hermitian(1e-10):
                raise ValueError(f"{name} is not self-adjoint")
            if not (x @ x).allclose(x, atol=1e-10):
                raise ValueError(f"{name} is not idempotent")


def relative_index(pq: ProjectionPair) -> float:
    """``tau(E_{-1}(P-Q)) - tau(E_{+1}(P-Q))``; equals ``tau(Q) - tau(P)`` when they commute."""
    d = pq.p - pq.q
    es = eigendecompose(d)
    tol = kappa(d)
    total = Fraction(0)
    for lam, w in zip(es.eigenvalues, es.weights):
        n_minus = int(np.sum(np.abs(lam + 1) <= tol))
        n_plus = int(np.sum(np.abs(lam - 1) <= tol))
        total += Fraction(w) * (n_minus - n_plus)
    return float(total)


def resolvent_bound_check(h0: BlockOperator, a: BlockOperator) -> tuple[bool, float]:
    """Check ``(1+H^2)^{-1} <= c(|A|) (1+H_0^2)^{-1}`` with ``H = H_0 + A``.

    Returns whether the difference is positive semidefinite (down to -1e-10)
    and its smallest eigenvalue.
    """
    h0._check(a)
    n = a.norm()
    c = 1 + 0.5 * n * n + 0.5 * n * np.sqrt(n * n + 4)
    r0 = matrix_function(h0, lambda x: 1.0 / (1.0 + np.asarray(x).real ** 2))
    r1 = matrix_function(h0 + a, lambda x: 1.0 / (1.0 + np.asarray(x).real ** 2))
    diff = c * r0 - r1
    margin = min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in diff.blocks)
    return margin >= -1e-10, margin
