"""Verification suite: every analytic formula checked against its oracle.

Each check draws seeded random instances, evaluates the formula and its
independent counterpart, and reports the worst residual against a fixed
tolerance.  The CLI ``verify`` subcommand and the acceptance tests both run
these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc

from . import instances as inst
from .algebra import BlockOperator, TraceContext, eigendecompose, f_map, relative_index
from .doi import PiRegionQuadrature, doi_fourier, doi_schur
from .quad import PiecewisePath, QuadratureSpec
from .sflow import (
    eta_eps,
    eta_eps_quadrature,
    gamma_eta_identity_check,
    gamma_mollified,
    infinitesimal_pairing,
    kernel_trace,
    one_form_integral,
    projection_constant,
    sf_crossing,
    sf_from_ssf,
    sf_function_pairing,
    sf_projection_pair,
    sf_summable,
    sf_theta,
)
from .ssf import invariance_map, ssf_profile, ssm_quadrature, trace_formula_residual
from .weights import gaussian, mollifier, resolvent_power


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    count: int
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} n={self.count}"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "count": self.count,
            "detail": self.detail,
        }


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, salt])


def _pair(rng, total_dim=(2, 12), spread=3.0, share=False):
    ctx = inst.random_context(rng, total_dim)
    s0 = rng.uniform(-spread, spread, ctx.total_dim)
    s1 = rng.uniform(-spread, spread, ctx.total_dim)
    if share:
        # copy some eigenvalues across so that jumps meet
        k = int(rng.integers(1, ctx.total_dim + 1))
        s1[:k] = rng.permutation(s0)[:k]
    return inst.with_spectrum(ctx, s0, rng), inst.with_spectrum(ctx, s1, rng)


def check_oracle_identity(seed: int = 42, n: int = 500) -> CheckResult:
    rng = _rng(seed, 1)
    mismatches = 0
    points = 0
    worst = 0.0
    for i in range(n):
        h0, h1 = _pair(rng, share=bool(i % 2))
        lam0, _ = eigendecompose(h0).flat()
        lam1, _ = eigendecompose(h1).flat()
        grid = list(rng.choice(lam0, 3)) + list(rng.choice(lam1, 3))
        grid += list(rng.uniform(-4, 4, 21 - len(grid)))
        for mu in grid:
            a = sf_from_ssf(h0, h1, float(mu)).value
            b = sf_crossing(h0, h1, float(mu)).value
            points += 1
            if a != b:
                mismatches += 1
                worst = max(worst, abs(a - b))
    return CheckResult("oracle identity sf_from_ssf == sf_crossing", mismatches == 0, worst, 0.0, n,
                       {"points": points, "mismatches": mismatches})


def check_daletskii_krein(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 2)
    funcs = [gaussian(1.0), resolvent_power(2.0), mollifier(2.0, 0.0)]
    worst = 0.0
    ok = True
    for _ in range(n):
        h0, h1 = _pair(rng, spread=2.0)
        v = h1 - h0
        for f in funcs:
            lhs = _mf(h1, f) - _mf(h0, f)
            res = (lhs - doi_schur(h1, h0, v, f)).norm() / (1 + v.norm())
            worst = max(worst, res)
            ok &= res <= 1e-9
    return CheckResult("Daletskii-Krein f(H0+V)-f(H0) = T(V)", ok, worst, 1e-9, n)


def _mf(h, f):
    from .algebra import matrix_function

    return matrix_function(h, f.fn)


def check_trace_formula(seed: int = 42, n: int = 200) -> CheckResult:
    rng = _rng(seed, 3)
    funcs = [gaussian(1.0), gaussian(0.2), resolvent_power(2.0), resolvent_power(3.0), mollifier(1.5, 0.3)]
    worst = 0.0
    for i in range(n):
        h0, h1 = _pair(rng, share=bool(i % 3 == 0))
        for f in funcs:
            worst = max(worst, trace_formula_residual(h0, h1, f))
    return CheckResult("trace formula tau(f(H1)-f(H0)) = int f' xi", worst <= 1e-8, worst, 1e-8, n)


def check_absolute_continuity(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 4)
    spec = QuadratureSpec(tolerance=1e-10)
    worst = 0.0
    for _ in range(n):
        h0, h1 = _pair(rng, total_dim=(2, 8), spread=2.0)
        profile = ssf_profile(h0, h1)
        for _ in range(5):
            lo, hi = np.sort(rng.uniform(-2.5, 2.5, 2))
            q = ssm_quadrature(h0, h1 - h0, (lo, hi), spec)
            worst = max(worst, abs(q - profile.integral(lo, hi)))
    return CheckResult("absolute continuity Xi(D) = int_D xi", worst <= 1e-7, worst, 1e-7, n)


def check_theta_formula(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 5)
    worst = 0.0
    spread = 0.0
    for i in range(n):
        h0, h1 = _pair(rng, total_dim=(2, 10))
        if i % 4 == 0:
            # plant kernels in both endpoints
            h0 = _with_kernel(h0, rng)
            h1 = _with_kernel(h1, rng)
        oracle = sf_crossing(h0, h1, 0.0).value
        vals = [sf_theta(h0, h1, eps).value for eps in (0.05, 0.5, 5.0)]
        worst = max(worst, max(abs(v - oracle) for v in vals))
        spread = max(spread, max(vals) - min(vals))
    return CheckResult("theta formula: heat-kernel integral plus eta and kernel terms", worst <= 1e-6 and spread <= 2e-6, worst, 1e-6, n,
                       {"eps_spread": spread, "spread_tolerance": 2e-6})


def _with_kernel(h: BlockOperator, rng) -> BlockOperator:
    lam, _ = eigendecompose(h).flat()
    lam = lam.copy()
    lam[int(rng.integers(len(lam)))] = 0.0
    return inst.with_spectrum(h.context, lam, rng)


def check_eta(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 6)
    worst = 0.0
    for i in range(n):
        ctx = inst.random_context(rng, (2, 10))
        h = inst.random_hermitian(ctx, rng, (-3, 3))
        if i % 5 == 0:
            h = _with_kernel(h, rng)
        for eps in (0.01, 0.3, 2.0):
            worst = max(worst, abs(eta_eps(h, eps) - eta_eps_quadrature(h, eps)))
    ctx = TraceContext.single(2)
    d = BlockOperator.diag(ctx, [1.0, -2.0])
    exact = float(abs(eta_eps(d, 0.01) - (erfc(0.1) - erfc(0.2))))
    ok = worst <= 1e-8 and exact <= 1e-10
    return CheckResult("eta closed form vs quadrature", ok, worst, 1e-8, n, {"diag_example_error": exact})


def _broken_path(rng, h0, h1, inner=2):
    mids = [inst.random_hermitian(h0.context, rng, (-2, 2)) for _ in range(inner)]
    return PiecewisePath((h0, *mids, h1))


def check_path_independence(seed: int = 42, n: int = 50) -> CheckResult:
    rng = _rng(seed, 7)
    f = gaussian(0.5)
    worst_path, worst_loop = 0.0, 0.0
    for _ in range(n):
        h0, h1 = _pair(rng, total_dim=(2, 8), spread=2.0)
        straight = one_form_integral(PiecewisePath.straight(h0, h1), f)
        broken = one_form_integral(_broken_path(rng, h0, h1), f)
        loop = one_form_integral(_broken_path(rng, h0, h0), f)
        worst_path = max(worst_path, abs(straight - broken))
        worst_loop = max(worst_loop, abs(loop))
    worst = max(worst_path, worst_loop)
    return CheckResult("one-form path independence and exactness", worst <= 1e-8, worst, 1e-8, n,
                       {"path": worst_path, "loop": worst_loop})


def check_invariance(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 8)
    worst_loc, worst_jump = 0.0, 0.0
    ok = True
    for i in range(n):
        h0, h1 = _pair(rng, share=bool(i % 2))
        pushed = invariance_map(ssf_profile(h0, h1))
        direct = ssf_profile(f_map(h0), f_map(h1))
        if len(pushed) != len(direct):
            ok = False
            continue
        if len(pushed):
            worst_loc = max(worst_loc, float(np.max(np.abs(np.subtract(pushed.locations, direct.locations)))))
            worst_jump = max(worst_jump, float(np.max(np.abs(pushed.jumps - direct.jumps))))
    ok &= worst_loc <= 1e-10 and worst_jump <= 1e-12
    return CheckResult("invariance principle under x/sqrt(1+x^2)", ok, worst_loc, 1e-10, n,
                       {"jump_error": worst_jump, "jump_tolerance": 1e-12})


def check_additivity(seed: int = 42, n: int = 100) -> CheckResult:
    from .ssf import additivity_residual

    rng = _rng(seed, 9)
    worst = 0.0
    for _ in range(n):
        ctx = inst.random_context(rng, (3, 10))
        shared = rng.uniform(-2, 2, int(rng.integers(1, 3)))
        specs = []
        for _ in range(3):
            s = rng.uniform(-3, 3, ctx.total_dim)
            s[: len(shared)] = shared
            specs.append(rng.permutation(s))
        hs = [inst.with_spectrum(ctx, s, rng) for s in specs]
        pts = list(shared) + [float(rng.choice(s)) for s in specs] + list(rng.uniform(-3, 3, 10))
        for lam in pts[:10]:
            worst = max(worst, additivity_residual(*hs, float(lam)))
    return CheckResult("xi additivity at every point", worst <= 1e-12, worst, 1e-12, n)


def check_gamma_limit(seed: int = 42, n: int = 20) -> CheckResult:
    rng = _rng(seed, 10)
    eps_list = (1e-1, 1e-2, 1e-3)
    worst_final = 0.0
    monotone = True
    floor = 1e-9
    for _ in range(n):
        ctx = inst.random_context(rng, (2, 8))
        mu = float(rng.uniform(-0.4, 0.4))
        spec = []
        for j in range(ctx.total_dim):
            if j == 0 or rng.random() < 0.2:
                spec.append(mu)
            else:
                # keep a gap of at least 0.2 around mu, inside (-1, 1)
                side = rng.choice([-1, 1])
                lo, hi = (mu + 0.2, 0.99) if side > 0 else (-0.99, mu - 0.2)
                spec.append(float(rng.uniform(lo, hi)))
        f = inst.with_spectrum(ctx, spec, rng)
        target = 0.5 * kernel_trace(f, mu)
        errs = [abs(gamma_mollified(f, mu, mollifier(e, 0.0)) - target) for e in eps_list]
        monotone &= bool(all(b <= a + floor for a, b in zip(errs, errs[1:])))
        worst_final = max(worst_final, errs[-1])
    ok = monotone and worst_final <= 1e-2
    return CheckResult("gamma_eps(F - mu) -> tau[ker(F - mu)]/2", ok, worst_final, 1e-2, n,
                       {"monotone": monotone, "noise_floor": floor})


def check_gamma_eta(seed: int = 42, n: int = 50) -> CheckResult:
    rng = _rng(seed, 11)
    worst = 0.0
    for i in range(n):
        ctx = inst.random_context(rng, (2, 8))
        h = inst.random_hermitian(ctx, rng, (-3, 3))
        if i % 3 == 0:
            h = _with_kernel(h, rng)
        for eps in (0.1, 1.0):
            worst = max(worst, gamma_eta_identity_check(h, eps))
    return CheckResult("gamma_{h_eps}(F_H) = (eta_eps(H) + tau[ker H])/2", worst <= 1e-6, worst, 1e-6, n)


def check_projection_pairs(seed: int = 42, n: int = 100) -> CheckResult:
    rng = _rng(seed, 12)
    profiles = [
        (lambda s: s, -1.0, 1.0),
        (lambda s: s * s, -0.5, 2.0),
        (lambda s: np.sin(s) ** 2, -2.0, 0.7),
    ]
    worst = 0.0
    for i in range(n):
        ctx = inst.random_context(rng, (2, 10))
        pq = inst.random_projection_pair(ctx, rng, commuting=(i % 4 == 0))
        ri = relative_index(pq)
        af, a, b = profiles[i % len(profiles)]
        f0, f1 = (b - a) * pq.p + a, (b - a) * pq.q + a
        oracle = sf_crossing(f0, f1, 0.0).value
        val = sf_projection_pair(pq, af, a, b).value
        worst = max(worst, abs(val - ri), abs(ri - oracle))
    c = projection_constant(lambda s: s, -1.0, 1.0)
    c_err = abs(c - 8.0 / 6.0)
    ok = worst <= 1e-8 and c_err <= 4 * np.spacing(8.0 / 6.0)
    return CheckResult("projection pair: formula = relative index = crossing", ok, worst, 1e-8, n,
                       {"C_ab": c, "C_ab_error": c_err})


def check_doi_engines(seed: int = 42, n: int = 20) -> CheckResult:
    rng = _rng(seed, 13)
    f = mollifier(2.0, 0.0)
    quad = PiRegionQuadrature()
    coarse = PiRegionQuadrature(quad.outer_panels // 2, quad.inner_panels // 2)
    worst = 0.0
    halving = True
    for _ in range(n):
        h0, h1 = _pair(rng, total_dim=(2, 5), spread=1.5)
        v = h1 - h0
        ref = doi_schur(h1, h0, v, f)
        scale = max(ref.norm(), 1e-300)
        err = (doi_fourier(h1, h0, v, f, quad) - ref).norm() / scale
        err_coarse = (doi_fourier(h1, h0, v, f, coarse) - ref).norm() / scale
        worst = max(worst, err)
        halving &= bool(err <= 0.5 * err_coarse)
    ok = worst <= 1e-3 and halving
    return CheckResult("DOI Fourier engine matches Schur engine", ok, worst, 1e-3, n, {"halving": halving})


def check_summable(seed: int = 42, n: int = 20) -> CheckResult:
    rng = _rng(seed, 14)
    funcs = [gaussian(1.0), resolvent_power(2.0), resolvent_power(3.0)]
    worst = 0.0
    for _ in range(n):
        ctx = inst.random_context(rng, (2, 8))
        h0 = inst.random_hermitian(ctx, rng, (-3, 3))
        h1 = inst.gauge(h0, inst.random_unitary(ctx, rng))
        lam, _ = eigendecompose(h0).flat()
        grid = list(np.linspace(-4, 4, 9)) + [float(lam[0])]
        for mu in grid:
            oracle = sf_crossing(h0, h1, mu).value
            for f in funcs:
                worst = max(worst, abs(sf_summable(h0, h1, f, mu).value - oracle))
    return CheckResult("summable formulas for gauge-equivalent endpoints", worst <= 1e-7, worst, 1e-7, n)


def check_infinitesimal_pairing(seed: int = 42, n: int = 50) -> CheckResult:
    rng = _rng(seed, 15)
    worst = 0.0
    for _ in range(n):
        h0, h1 = _pair(rng, total_dim=(2, 6), spread=2.0)
        path = _broken_path(rng, h0, h1, inner=1) if rng.random() < 0.5 else PiecewisePath.straight(h0, h1)
        phi = mollifier(float(rng.uniform(0.3, 1.0)), float(rng.uniform(-1.5, 1.5)))
        lhs = infinitesimal_pairing(path, phi)
        rhs = sf_function_pairing(h0, h1, phi)
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("infinitesimal spectral flow pairing", worst <= 1e-7, worst, 1e-7, n)


def check_lattice_shift(seed: int = 42, n: int = 7) -> CheckResult:
    ok = True
    worst = 0.0
    for m in range(2, 2 + n):
        h0, h1 = inst.lattice_shift(m)
        sf = sf_crossing(h0, h1, 0.5).value
        sf2 = sf_from_ssf(h0, h1, 0.5).value
        profile = ssf_profile(h0, h1)
        grid = np.linspace(-m + 0.5, m + 0.5, 41)[1:-1]
        dev = max(abs(profile.value(x) - 1.0) for x in grid)
        worst = max(worst, abs(sf - 1), abs(sf2 - 1), dev)
        ok &= sf == 1.0 and sf2 == 1.0 and dev == 0.0
    return CheckResult("lattice shift sf(1/2) = 1, xi = 1 in the bulk", ok, worst, 0.0, n)


CHECKS: dict[str, tuple[Callable[..., CheckResult], int]] = {
    "oracle_identity": (check_oracle_identity, 500),
    "daletskii_krein": (check_daletskii_krein, 100),
    "trace_formula": (check_trace_formula, 200),
    "absolute_continuity": (check_absolute_continuity, 100),
    "theta_formula": (check_theta_formula, 100),
    "eta": (check_eta, 100),
    "path_independence": (check_path_independence, 50),
    "invariance": (check_invariance, 100),
    "additivity": (check_additivity, 100),
    "gamma_limit": (check_gamma_limit, 20),
    "gamma_eta": (check_gamma_eta, 50),
    "projection_pairs": (check_projection_pairs, 100),
    "doi_engines": (check_doi_engines, 20),
    "summable": (check_summable, 20),
    "infinitesimal_pairing": (check_infinitesimal_pairing, 50),
    "lattice_shift": (check_lattice_shift, 7),
}


def run_checks(seed: int = 42, names=None, scale: float = 1.0) -> list[CheckResult]:
    out = []
    for name, (fn, count) in CHECKS.items():
        if names and name not in names:
            continue
        n = count if name == "lattice_shift" else max(1, int(math.ceil(count * scale)))
        out.append(fn(seed=seed, n=n))
    return out
