"""Spectral flow: the counting oracle and the analytic formulas it validates.

Orientation: an eigenvalue moving upward through ``mu`` contributes ``+weight``.
The counting oracle is ``tau(E^{H1}_{[mu, inf)}) - tau(E^{H0}_{[mu, inf)})``
with eigenvalues within the kernel tolerance of ``mu`` snapped onto it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.special import erfc

from .algebra import (
    BlockOperator,
    ProjectionPair,
    eigendecompose,
    kappa,
    f_map,
    relative_index,
    sign_ab,
)
from .quad import (
    PiecewisePath,
    QuadratureSpec,
    integrate_pieces,
    integrate_scalar,
    integrate_with_crossings,
)
from .ssf import _tau_v_f, ssf_profile, weighted_average
from .weights import WeightFunction, alpha_eps_profiles

METHODS = ("crossing", "ssf_kernel", "bounded_formula", "theta", "summable", "projection_pair")


@dataclass(frozen=True)
class SpectralFlowResult:
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return {"value": self.value, "method": self.method, "diagnostics": dict(self.diagnostics)}


def _count_at_or_above(h: BlockOperator, mu: float, tol: float) -> Fraction:
    lam, w = eigendecompose(h).flat()
    return sum((Fraction(float(wi)) for x, wi in zip(lam, w) if x >= mu - tol), Fraction(0))


def _kernel_trace(h: BlockOperator, mu: float, tol: float) -> Fraction:
    lam, w = eigendecompose(h).flat()
    return sum((Fraction(float(wi)) for x, wi in zip(lam, w) if abs(x - mu) <= tol), Fraction(0))


def kernel_trace(h: BlockOperator, mu: float = 0.0, tol: float | None = None) -> float:
    """``tau[ker(H - mu)]`` with the kernel tolerance."""
    return float(_kernel_trace(h, mu, kappa(h) if tol is None else tol))


def sf_crossing(h0: BlockOperator, h1: BlockOperator, mu: float = 0.0) -> SpectralFlowResult:
    h0._check(h1)
    tol = kappa(h0, h1)
    exact = _count_at_or_above(h1, mu, tol) - _count_at_or_above(h0, mu, tol)
    return SpectralFlowResult(float(exact), "crossing", {"mu": mu})


def sf_from_ssf(h0: BlockOperator, h1: BlockOperator, mu: float = 0.0) -> SpectralFlowResult:
    """``xi(mu) + tau[ker(H1 - mu)]/2 - tau[ker(H0 - mu)]/2``."""
    h0._check(h1)
    profile = ssf_profile(h0, h1)
    tol = profile.kappa
    xi = profile.exact_value(mu)
    k0 = _kernel_trace(h0, mu, tol)
    k1 = _kernel_trace(h1, mu, tol)
    exact = xi + k1 / 2 - k0 / 2
    return SpectralFlowResult(
        float(exact), "ssf_kernel", {"mu": mu, "xi": float(xi), "ker_h0": float(k0), "ker_h1": float(k1)}
    )


def _profile_h(af: Callable, a: float, b: float) -> Callable:
    def h(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(af(np.maximum((b - x) * (x - a), 0.0)), dtype=float) * np.ones_like(x)

    return h


def _support_breaks(h: Callable, lam: np.ndarray, target: np.ndarray) -> list[float]:
    """Parameters where the linear eigenvalue paths enter or leave a compact support."""
    sup = getattr(h, "support", None)
    if sup is None or not all(np.isfinite(sup)):
        return []
    out = []
    for x0, x1 in zip(lam, target):
        if x1 == x0:
            continue
        for edge in sup:
            r = (edge - x0) / (x1 - x0)
            if 0 < r < 1:
                out.append(float(r))
    return out


def _gamma(f: BlockOperator, h: Callable, a: float, b: float, spec: QuadratureSpec) -> float:
    """``int_0^1 tau((F~ - F) h(F + r(F~ - F))) dr`` with ``F~ = sign_{a,b}(F)``."""
    ft = sign_ab(f, a, b)
    k = ft - f
    fn = getattr(h, "fn", h)
    lam, _ = eigendecompose(f).flat()
    tol = kappa(f)
    target = np.where(lam >= -tol, b, a)
    breaks = [0.0, 1.0] + _support_breaks(h, lam, target)
    val, _ = integrate_pieces(lambda r: _tau_v_f(k, f + r * k, fn), breaks, spec)
    return float(val)


def gamma_h(f: BlockOperator, af: Callable, a: float, b: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Endpoint correction along the straight line from ``F`` to ``sign_{a,b}(F)``.

    ``h(x) = af((b - x)(x - a))``; ``af`` is not renormalized here.
    """
    if not (a < 0 < b):
        raise ValueError("gamma_h needs a < 0 < b")
    return _gamma(f, _profile_h(af, a, b), a, b, spec)


def _check_window(f: BlockOperator, a: float, b: float):
    lam, _ = eigendecompose(f).flat()
    tol = kappa(f)
    if lam.min() < a - tol or lam.max() > b + tol:
        raise ValueError(f"spectrum escapes [{a}, {b}]")


def sf_bounded_formula(
    f0: BlockOperator,
    f1: BlockOperator,
    af: Callable,
    a: float,
    b: float,
    spec: QuadratureSpec = QuadratureSpec(),
    mu: float = 0.0,
) -> SpectralFlowResult:
    """``int_a^b h xi_{F1,F0} + gamma(F1 - mu) - gamma(F0 - mu)`` with the translated profile.

    ``h(x) = af((b - x)(x - a))`` is divided by its integral over ``(a, b)``;
    the factor is reported as ``h_scale``.
    """
    if not (a < mu < b):
        raise ValueError("mu must lie strictly inside (a, b)")
    f0._check(f1)
    _check_window(f0, a, b)
    _check_window(f1, a, b)
    raw = _profile_h(af, a, b)
    z, _ = integrate_scalar(lambda x: float(raw(x)), spec, (a, b))
    if z == 0:
        raise ValueError("profile h integrates to zero")

    def h(x):
        return raw(x) / z

    profile = ssf_profile(f0, f1, (a, b))
    terms = []
    for lo, hi, val in profile.steps():
        lo, hi = max(lo, a), min(hi, b)
        if hi > lo and val != 0:
            terms.append(val * integrate_scalar(lambda x: float(h(x)), spec, (lo, hi))[0])
    xi_term = math.fsum(terms)

    def h_shift(x):
        return h(np.asarray(x) + mu)

    g1 = _gamma(f1 - mu, h_shift, a - mu, b - mu, spec)
    g0 = _gamma(f0 - mu, h_shift, a - mu, b - mu, spec)
    value = xi_term + g1 - g0
    return SpectralFlowResult(
        value,
        "bounded_formula",
        {"mu": mu, "integral_term": xi_term, "gamma0": g0, "gamma1": g1, "h_scale": 1.0 / z},
    )


def gamma_mollified(f: BlockOperator, mu: float, h: WeightFunction, a: float = -1.0, b: float = 1.0,
                    spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``gamma_h(F - mu)`` on the window ``(a - mu, b - mu)`` for an even bump ``h`` centred at 0."""
    return _gamma(f - mu, h, a - mu, b - mu, spec)


def sf_projection_pair(
    pq: ProjectionPair,
    af: Callable,
    a: float,
    b: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> SpectralFlowResult:
    """``C_{a,b}^{-1} int_0^1 tau(F' af((b - F_r)(F_r - a))) dr`` between ``(b-a)P + a`` and ``(b-a)Q + a``."""
    if not (a < 0 < b):
        raise ValueError("sf_projection_pair needs a < 0 < b")
    c_ab = projection_constant(af, a, b, spec)
    if c_ab == 0:
        raise ValueError("C_{a,b} vanishes for this profile")
    f0 = (b - a) * pq.p + a
    f1 = (b - a) * pq.q + a
    k = f1 - f0
    h = _profile_h(af, a, b)
    integral, _ = integrate_scalar(lambda r: _tau_v_f(k, f0 + r * k, h), spec, (0.0, 1.0))
    return SpectralFlowResult(
        float(integral) / c_ab,
        "projection_pair",
        {"C_ab": c_ab, "integral_term": float(integral), "relative_index": relative_index(pq)},
    )


def projection_constant(af: Callable, a: float, b: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``C_{a,b} = int_0^1 (b - a) af((b - a)^2 (r - r^2)) dr``."""
    d = b - a
    val, _ = integrate_scalar(lambda r: d * float(af(d * d * (r - r * r))), spec, (0.0, 1.0))
    return float(val)


def one_form_integral(path: PiecewisePath, f: WeightFunction, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``sum_k int_0^1 tau(V_k f(H_k + r V_k)) dr``."""
    levels = list(f.support) if f.compact else []
    vals = []
    for k in range(path.n_segments):
        base, vk = path.segment(k)
        seg = PiecewisePath.straight(base, base + vk)
        # compact f: split where eigenvalues enter or leave the support
        v, _ = integrate_with_crossings(lambda r: _tau_v_f(vk, base + r * vk, f.fn), seg, levels, spec)
        vals.append(float(v))
    return math.fsum(vals)


def theta_potential(h0: BlockOperator, h: BlockOperator, f: WeightFunction, spec: QuadratureSpec = QuadratureSpec()) -> float:
    return one_form_integral(PiecewisePath.straight(h0, h), f, spec)


def eta_eps(h: BlockOperator, eps: float) -> float:
    """Truncated eta invariant in closed form: ``sum w sign(l) erfc(sqrt(eps) |l|)``."""
    if not eps > 0:
        raise ValueError("eta_eps needs eps > 0")
    lam, w = eigendecompose(h).flat()
    tol = kappa(h)
    nz = np.abs(lam) > tol
    terms = w[nz] * np.sign(lam[nz]) * erfc(math.sqrt(eps) * np.abs(lam[nz]))
    return math.fsum(terms)


def eta_eps_quadrature(h: BlockOperator, eps: float, spec: QuadratureSpec = QuadratureSpec(tolerance=1e-11)) -> float:
    """``pi^{-1/2} int_eps^T tau(H exp(-t H^2)) t^{-1/2} dt`` by quadrature in ``log t``.

    ``T`` is chosen so that ``exp(-T l^2) <= 1e-14`` for the smallest nonzero
    eigenvalue ``l``.
    """
    if not eps > 0:
        raise ValueError("eta_eps needs eps > 0")
    lam, w = eigendecompose(h).flat()
    tol = kappa(h)
    nz = np.abs(lam) > tol
    if not np.any(nz):
        return 0.0
    lmin = float(np.min(np.abs(lam[nz])))
    t_max = max(14 * math.log(10) / lmin ** 2, 2 * eps)
    lam_nz, w_nz = lam[nz], w[nz]

    def integrand(s):
        t = math.exp(s)
        # dt = t ds, t^{-1/2} dt = t^{1/2} ds
        return math.fsum(w_nz * lam_nz * np.exp(-t * lam_nz ** 2)) * math.sqrt(t) / math.sqrt(math.pi)

    a, b = math.log(eps), math.log(t_max)
    pts = sorted({a, b, *[float(np.clip(-2 * math.log(abs(x)), a, b)) for x in lam_nz]})
    val, _ = integrate_pieces(integrand, pts, spec)
    return float(val)


def sf_theta(h0: BlockOperator, h1: BlockOperator, eps: float, spec: QuadratureSpec = QuadratureSpec()) -> SpectralFlowResult:
    """Theta-summable formula: heat-kernel integral plus eta and kernel corrections."""
    h0._check(h1)
    if not eps > 0:
        raise ValueError("sf_theta needs eps > 0")
    v = h1 - h0
    integral, _ = integrate_scalar(
        lambda r: _tau_v_f(v, h0 + r * v, lambda x: np.exp(-eps * x * x)), spec, (0.0, 1.0)
    )
    integral_term = math.sqrt(eps / math.pi) * float(integral)
    e0, e1 = eta_eps(h0, eps), eta_eps(h1, eps)
    k0, k1 = kernel_trace(h0), kernel_trace(h1)
    value = math.fsum([integral_term, 0.5 * (e1 - e0), 0.5 * (k1 - k0)])
    return SpectralFlowResult(
        value,
        "theta",
        {"eps": eps, "integral_term": integral_term, "eta0": e0, "eta1": e1, "ker_h0": k0, "ker_h1": k1},
    )


def unitarily_equivalent(h0: BlockOperator, h1: BlockOperator) -> bool:
    """Blockwise comparison of sorted spectra within the kernel tolerance."""
    h0._check(h1)
    tol = kappa(h0, h1)
    e0, e1 = eigendecompose(h0), eigendecompose(h1)
    return all(np.all(np.abs(a - b) <= tol) for a, b in zip(e0.eigenvalues, e1.eigenvalues))


def sf_summable(
    h0: BlockOperator,
    h1: BlockOperator,
    f: WeightFunction,
    mu: float = 0.0,
    spec: QuadratureSpec = QuadratureSpec(),
) -> SpectralFlowResult:
    """``C^{-1} int_0^1 tau(V f(H_r - mu)) dr`` for unitarily equivalent endpoints."""
    if not unitarily_equivalent(h0, h1):
        raise ValueError("sf_summable needs unitarily equivalent endpoints")
    value, integral, c = weighted_average(h0, h1 - h0, f, mu, spec)
    return SpectralFlowResult(value, "summable", {"mu": mu, "integral_term": integral, "C": c})


def infinitesimal_pairing(path: PiecewisePath, phi: WeightFunction, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``int_0^1 tau(H'_r phi(H_r)) dr`` along the path."""
    return one_form_integral(path, phi, spec)


def sf_function_pairing(h0: BlockOperator, h1: BlockOperator, phi: WeightFunction) -> float:
    """``int sf(lam; H0, H1) phi(lam) dlam`` with ``sf`` assembled from the counting oracle."""
    lam0, _ = eigendecompose(h0).flat()
    lam1, _ = eigendecompose(h1).flat()
    pts = np.unique(np.concatenate([lam0, lam1]))
    terms = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        val = sf_crossing(h0, h1, 0.5 * (lo + hi)).value
        if val != 0:
            terms.append(val * phi.integral(lo, hi))
    return math.fsum(terms)


def gamma_eta_identity_check(h: BlockOperator, eps: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """``|gamma_{h_eps}(F_H) - (eta_eps(H) + tau[ker H]) / 2|`` on the window ``(-1, 1)``."""
    _, h_eps, _ = alpha_eps_profiles(eps)
    gamma = _gamma(f_map(h), h_eps, -1.0, 1.0, spec)
    return abs(gamma - 0.5 * (eta_eps(h, eps) + kernel_trace(h)))
