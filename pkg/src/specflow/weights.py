"""Catalog of scalar weight and test functions.

Each :class:`WeightFunction` carries the metadata that the trace and flow
formulas check before use: derivative, integral over the line, support,
smoothness class and (when known in closed form) the unitary Fourier
transform ``(2 pi)^{-1/2} int f(x) e^{-isx} dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, hyp2f1

from .quad import QuadratureSpec, integrate_pieces, integrate_scalar

Smoothness = int | str  # k for C^k_c, "inf" for C^infinity_c, "schwartz"

_FINE = QuadratureSpec(tolerance=1e-13, max_subdivisions=50)


@dataclass(frozen=True)
class WeightFunction:
    name: str
    fn: Callable
    deriv: Callable
    support: tuple[float, float] = (-math.inf, math.inf)
    smoothness: Smoothness = "schwartz"
    normalization: float | None = None
    normalization_exact: bool = False
    fourier: Callable | None = None
    antideriv: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.fn(x)

    @property
    def compact(self) -> bool:
        return bool(np.isfinite(self.support[0]) and np.isfinite(self.support[1]))

    def smoothness_at_least(self, k: int) -> bool:
        if isinstance(self.smoothness, str):
            return True
        return self.smoothness >= k

    def integral(self, lo: float, hi: float) -> float:
        """``int_lo^hi f``, by antiderivative when available, else quadrature."""
        if hi < lo:
            return -self.integral(hi, lo)
        lo, hi = max(lo, self.support[0]), min(hi, self.support[1])
        if hi <= lo:
            return 0.0
        if self.antideriv is not None:
            return float(self.antideriv(hi) - self.antideriv(lo))
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return _improper(self, lo, hi)
        pts = [lo, hi]
        c = self.params.get("center")
        if c is not None and lo < c < hi:
            pts.insert(1, c)
        return float(integrate_pieces(lambda x: float(self.fn(x)), pts, _FINE)[0])

    def to_json(self) -> dict:
        return {"kind": self.name, **self.params}


def _improper(f: WeightFunction, lo: float, hi: float) -> float:
    t0 = math.atan(lo) if np.isfinite(lo) else -math.pi / 2
    t1 = math.atan(hi) if np.isfinite(hi) else math.pi / 2

    def g(t):
        x = math.tan(t)
        return float(f.fn(x)) * (1 + x * x)

    pts = [t0, t1]
    if t0 < 0 < t1:
        pts.insert(1, 0.0)
    return float(integrate_pieces(g, pts, _FINE)[0])


def _bump_profile(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out if out.ndim else float(out)


def _bump_profile_deriv(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    ui = u[inside]
    d = 1.0 - ui * ui
    out[inside] = np.exp(-1.0 / d) * (-2.0 * ui / (d * d))
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    # int_{-1}^{1} exp(-1/(1-u^2)) du
    v, _ = integrate_pieces(lambda u: float(_bump_profile(u)), [-1.0, 0.0, 1.0], QuadratureSpec(tolerance=1e-14, max_subdivisions=50))
    return float(v)


def gaussian(eps: float) -> WeightFunction:
    """``exp(-eps x^2)``."""
    if not eps > 0:
        raise ValueError("gaussian needs eps > 0")
    eps = float(eps)
    s = math.sqrt(eps)
    return WeightFunction(
        name="gaussian",
        fn=lambda x: np.exp(-eps * np.square(x)),
        deriv=lambda x: -2 * eps * np.asarray(x) * np.exp(-eps * np.square(x)),
        smoothness="schwartz",
        normalization=math.sqrt(math.pi / eps),
        normalization_exact=True,
        fourier=lambda k: np.exp(-np.square(k) / (4 * eps)) / math.sqrt(2 * eps),
        antideriv=lambda x: 0.5 * math.sqrt(math.pi / eps) * erf(s * np.asarray(x)),
        params={"eps": eps},
    )


def resolvent_power(p: float) -> WeightFunction:
    """``(1 + x^2)^{-p/2}``; integrable for ``p > 1``."""
    if not p > 1:
        raise ValueError("resolvent_power needs p > 1 (otherwise not integrable)")
    p = float(p)
    if p == 2:
        c = math.pi
        anti = np.arctan
    else:
        c = math.sqrt(math.pi) * math.exp(math.lgamma((p - 1) / 2) - math.lgamma(p / 2))

        def anti(x):
            x = np.asarray(x, dtype=float)
            finite = np.abs(x) < 1e150
            xf = np.where(finite, x, 0.0)
            return np.where(finite, xf * hyp2f1(0.5, p / 2, 1.5, -xf * xf), np.sign(x) * c / 2)

    return WeightFunction(
        name="resolvent_power",
        fn=lambda x: (1 + np.square(x)) ** (-p / 2),
        deriv=lambda x: -p * np.asarray(x) * (1 + np.square(x)) ** (-p / 2 - 1),
        smoothness="schwartz" if p == int(p) and int(p) % 2 == 0 else 3,
        normalization=c,
        normalization_exact=True,
        antideriv=anti,
        params={"p": p},
    )


def bump(center: float = 0.0, radius: float = 1.0, height: float = 1.0) -> WeightFunction:
    """C-infinity bump with peak ``height`` at ``center``, vanishing outside ``radius``."""
    if not radius > 0:
        raise ValueError("bump needs radius > 0")
    c0, r, h = float(center), float(radius), float(height) * math.e
    return WeightFunction(
        name="bump",
        fn=lambda x: h * _bump_profile((np.asarray(x) - c0) / r),
        deriv=lambda x: h / r * _bump_profile_deriv((np.asarray(x) - c0) / r),
        support=(c0 - r, c0 + r),
        smoothness="inf",
        normalization=h * r * _bump_mass(),
        params={"center": c0, "radius": r, "height": float(height)},
    )


def mollifier(eps: float, center: float = 0.0) -> WeightFunction:
    """Even C-infinity bump of unit mass supported on ``[center - eps, center + eps]``."""
    if not eps > 0:
        raise ValueError("mollifier needs eps > 0")
    eps, c0 = float(eps), float(center)
    c = 1.0 / (eps * _bump_mass())
    return WeightFunction(
        name="mollifier",
        fn=lambda x: c * _bump_profile((np.asarray(x) - c0) / eps),
        deriv=lambda x: c / eps * _bump_profile_deriv((np.asarray(x) - c0) / eps),
        support=(c0 - eps, c0 + eps),
        smoothness="inf",
        normalization=1.0,
        params={"eps": eps, "center": c0},
    )


def polynomial(coeffs: Sequence[float]) -> WeightFunction:
    """``sum_k coeffs[k] x^k``.  Not integrable; useful for exact operator identities."""
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d = poly.deriv()
    return WeightFunction(
        name="polynomial",
        fn=lambda x: poly(np.asarray(x)),
        deriv=lambda x: d(np.asarray(x)),
        smoothness="inf",
        antideriv=poly.integ(),
        params={"coeffs": [float(c) for c in coeffs]},
    )


def combination(terms: Sequence[tuple[float, WeightFunction]]) -> WeightFunction:
    """Linear combination ``sum c_i f_i``."""
    terms = [(float(c), f) for c, f in terms]
    if not terms:
        raise ValueError("empty combination")
    lo = min(f.support[0] for _, f in terms)
    hi = max(f.support[1] for _, f in terms)
    ks = [f.smoothness for _, f in terms if not isinstance(f.smoothness, str)]
    smooth = min(ks) if ks else ("inf" if all(f.smoothness == "inf" for _, f in terms) else "schwartz")
    norms = [f.normalization for _, f in terms]
    return WeightFunction(
        name="combination",
        fn=lambda x: sum(c * f.fn(x) for c, f in terms),
        deriv=lambda x: sum(c * f.deriv(x) for c, f in terms),
        support=(lo, hi),
        smoothness=smooth,
        normalization=None if any(n is None for n in norms) else math.fsum(c * n for (c, _), n in zip(terms, norms)),
        params={"terms": [[c, f.to_json()] for c, f in terms]},
    )


def alpha_eps_profiles(eps: float):
    """The heat-kernel profile ``alpha_eps`` and its two pullbacks.

    Returns ``(alpha, h, f)`` with ``alpha(x) = sqrt(eps/pi) x^{-3/2} exp(eps(1 - 1/x))``
    on ``(0, 1]``, ``h(x) = alpha(1 - x^2)`` on ``(-1, 1)`` and
    ``f(x) = alpha(1 / (1 + x^2))`` on the line.
    """
    if not eps > 0:
        raise ValueError("alpha_eps_profiles needs eps > 0")
    eps = float(eps)
    k = math.sqrt(eps / math.pi)

    def alpha(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("alpha_eps is only defined for positive arguments")
        return k * x ** -1.5 * np.exp(eps * (1.0 - 1.0 / x))

    def alpha_deriv(x):
        x = np.asarray(x, dtype=float)
        return alpha(x) * (-1.5 / x + eps / (x * x))

    def _h(x, with_deriv=False):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < 1
        xi = x[inside]
        s = (1.0 - xi) * (1.0 + xi)
        ok = s > 0
        vals = np.zeros_like(xi)
        if with_deriv:
            vals[ok] = alpha_deriv(s[ok]) * (-2.0 * xi[ok])
        else:
            vals[ok] = alpha(s[ok])
        out[inside] = vals
        return out if out.ndim else float(out)

    def _f(x):
        x = np.asarray(x, dtype=float)
        return alpha(1.0 / (1.0 + x * x))

    def _f_direct(x):
        x = np.asarray(x, dtype=float)
        return k * (1 + x * x) ** 1.5 * np.exp(-eps * x * x)

    grid = np.linspace(-10, 10, 201)
    if not np.allclose(_f(grid), _f_direct(grid), rtol=1e-10, atol=1e-300):
        raise AssertionError("alpha_eps pullback disagrees with its closed form")

    h = WeightFunction(
        name="h_eps",
        fn=_h,
        deriv=lambda x: _h(x, with_deriv=True),
        support=(-1.0, 1.0),
        smoothness="inf",
        normalization=1.0,
        normalization_exact=True,
        params={"eps": eps},
    )
    f = WeightFunction(
        name="f_eps",
        fn=_f,
        deriv=lambda x: _f(x) * (3 * np.asarray(x) / (1 + np.square(x)) - 2 * eps * np.asarray(x)),
        smoothness="schwartz",
        params={"eps": eps},
    )
    return alpha, h, f


def split_smooth_squares(f: WeightFunction, grid_points: int = 4001) -> tuple[WeightFunction, WeightFunction]:
    """Write ``f = f1 - f2`` with ``f1, f2 >= 0`` and smooth square roots.

    ``f1`` is a scaled bump on an interval enclosing ``supp f`` with half again
    its radius, dominating ``|f|`` by a factor 1.1 on the support; ``f2 = f1 - f``.
    """
    if not f.compact:
        raise ValueError("split_smooth_squares needs a compactly supported function")
    if not f.smoothness_at_least(2):
        raise ValueError("split_smooth_squares needs at least C^2 smoothness")
    lo, hi = f.support
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    big_r = 1.5 * r if r > 0 else 1.0
    xs = np.linspace(lo, hi, grid_points)
    base = _bump_profile((xs - c) / big_r)
    ratio = np.abs(f.fn(xs)) / base
    m = 1.1 * float(ratio.max())
    if m == 0.0:
        m = 1.0
    f1 = WeightFunction(
        name="split_dominant",
        fn=lambda x: m * _bump_profile((np.asarray(x) - c) / big_r),
        deriv=lambda x: m / big_r * _bump_profile_deriv((np.asarray(x) - c) / big_r),
        support=(c - big_r, c + big_r),
        smoothness="inf",
        params={"center": c, "radius": big_r, "scale": m},
    )
    f2 = WeightFunction(
        name="split_remainder",
        fn=lambda x: f1.fn(x) - f.fn(x),
        deriv=lambda x: f1.deriv(x) - f.deriv(x),
        support=f1.support,
        smoothness=f.smoothness,
        params={"center": c},
    )
    return f1, f2


def normalization_constant(f: WeightFunction) -> float:
    """``C = int f`` over the line; exact when the catalog knows it."""
    if f.normalization is not None:
        return float(f.normalization)
    if f.compact:
        return f.integral(*f.support)
    for side in (-1, 1):
        tail = [abs(x * float(f.fn(side * x))) for x in (1e4, 1e6, 1e8)]
        if not (tail[2] < 1e-3 and tail[2] <= tail[0]):
            raise ValueError(f"{f.name}: integral over the line diverges")
    return _improper(f, -math.inf, math.inf)


def from_spec(spec: dict) -> WeightFunction:
    """Build a catalog function from ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    builders = {
        "gaussian": gaussian,
        "resolvent_power": resolvent_power,
        "mollifier": mollifier,
        "bump": bump,
        "polynomial": polynomial,
    }
    if kind == "h_eps":
        return alpha_eps_profiles(spec["eps"])[1]
    if kind == "f_eps":
        return alpha_eps_profiles(spec["eps"])[2]
    if kind == "combination":
        return combination([(c, from_spec(t)) for c, t in spec["terms"]])
    if kind not in builders:
        raise ValueError(f"unknown weight function kind {kind!r}")
    try:
        return builders[kind](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from exc
