"""Invariant suites run by the ``validate`` experiment.

Each check returns a :class:`Check` with the measured value, the tolerance
and the verdict. All randomness is seeded so repeated runs give identical
values.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .analysis import fit_log_log, lp_norm, maximal_regularity_ratio, resolvent_sweep
from .basis import SpectralCoeffs, StokesBasis, reconstruct
from .fields import Field
from .funcalc import dunford_powers, imaginary_power_norm, power_coeffs
from .geometry import cut_flux
from .helmholtz import project, projection_residuals
from .sampling import random_coeffs
from .semigroup import evolve_homogeneous, resolvent_apply
from .spectral_ops import vector_curl

__all__ = ["CHECK_HEADER", "Check", "cross_product_eigenvalues", "maxreg_one_mode_closed_form", "run_checks"]

LOG = logging.getLogger(__name__)

CHECK_HEADER = ("check", "value", "tolerance", "passed")


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def row(self):
        return (self.name, float(self.value), float(self.tolerance), "PASS" if self.passed else "FAIL")


def _le(name, value, tol):
    value = float(value)
    return Check(name, value, tol, bool(np.isfinite(value) and value <= tol))


def cross_product_eigenvalues(a: float, b: float, m: int, n: int) -> np.ndarray:
    """Lowest ``n`` Stokes eigenvalues of angular mode ``m`` on the annulus.

    For ``m != 0`` the stream function obeys the Dirichlet Laplacian, so the
    roots solve ``J_m(ka) Y_m(kb) - J_m(kb) Y_m(ka) = 0``; the swirl mode
    ``m = 0`` gives the same cross product of order 0.
    """
    order = abs(m) if m else 0

    def f(k):
        return special.jv(order, k * a) * special.yv(order, k * b) - special.jv(order, k * b) * special.yv(order, k * a)

    roots, k, step = [], 1e-3, 0.5 / (b - a)
    fk = f(k)
    while len(roots) < n:
        k2 = k + step
        f2 = f(k2)
        if fk * f2 < 0:
            roots.append(optimize.brentq(f, k, k2, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        k, fk = k2, f2
    return np.array(roots) ** 2


def maxreg_one_mode_closed_form(lam: float, T: float) -> float:
    """Maximal-regularity ratio for ``f = z_1`` constant, ``p = q = 2``."""
    e1, e2 = math.exp(-lam * T), math.exp(-2 * lam * T)
    dt2 = (1 - e2) / (2 * lam)
    lap2 = T - 2 * (1 - e1) / lam + (1 - e2) / (2 * lam)
    return math.sqrt((dt2 + lap2) / T)


def _rel(x, y):
    return float(np.linalg.norm(np.ravel(x - y)) / max(np.linalg.norm(np.ravel(y)), 1e-300))


def _coeff_diff(basis, c1, c2):
    d = SpectralCoeffs(c1.alpha - c2.alpha, c1.beta - c2.beta)
    return _l2(basis, d) / max(_l2(basis, c2), 1e-300)


def _l2(basis, c):
    kern = np.real(np.conj(c.alpha) @ basis.kernel_gram @ c.alpha)
    return math.sqrt(float(np.sum(np.abs(c.beta) ** 2) + max(kern, 0.0)))


def check_kernel(basis):
    """Kernel against ``e_theta / r`` (and ``e_z`` in 3D) with unit cut fluxes."""
    g = basis.grid
    d = g.domain
    out = [Check("kernel_dimension", basis.J, d.J, basis.J == d.J)]
    worst = 0.0
    refs = [(1, 1 / (g.r_nodes * math.log(d.b / d.a) * d.length_z))]
    if g.dim == 3:
        refs.append((2, np.full(g.Nr, 1 / (math.pi * (d.b**2 - d.a**2)))))
    for j, (comp, prof) in enumerate(refs):
        ref = np.zeros(g.modal_shape(), dtype=complex)
        ref[comp, g.m_index(0), g.k_index(0)] = prof
        worst = max(worst, _rel(basis.kernel[j].coeffs, ref))
    out.append(_le("kernel_match_rel_l2", worst, 1e-8))
    return out


def check_spectrum(basis, n_per_mode=5):
    g = basis.grid
    if g.dim != 2:
        return []
    worst = 0.0
    for m in range(min(4, g.Mmax) + 1):
        lams = np.sort(basis.lambdas[basis.modes[:, 0] == m])[:n_per_mode]
        if len(lams) == 0:
            continue
        ref = cross_product_eigenvalues(g.domain.a, g.domain.b, m, len(lams))
        worst = max(worst, float(np.max(np.abs(lams - ref) / ref)))
    return [_le("spectrum_cross_product_rel_err", worst, 1e-8)]


def check_residuals(basis):
    out = []
    for key in ("eig_res", "div_res", "bc_res"):
        out.append(_le(f"max_{key}", max(e.residuals[key] for e in basis.eigs), 1e-8))
    if basis.grid.dim == 3:
        out.append(_le("max_multiplier", max(e.residuals["multiplier"] for e in basis.eigs), 1e-7))
    out.append(_le("orthonormality_defect", basis.gram["max_orthonormality_defect"], 1e-10))
    out.append(_le("kernel_overlap", basis.gram["max_kernel_overlap"], 1e-10))
    return out


def check_resolvent(basis, seed):
    sw = resolvent_sweep(
        basis, np.linspace(-math.pi / 2, math.pi / 2, 7), np.geomspace(1e-2, 1e4, 7), 2.0, n_probes=10, seed=seed
    )
    c = random_coeffs(basis, [seed, 1], kernel=True)
    f = reconstruct(basis, c)
    worst = 0.0
    for lam in (1.0 + 1.0j, 0.3j, 50.0):
        us = resolvent_apply(basis, lam, f, route="spectral")
        ud = resolvent_apply(basis, lam, f, route="direct")
        worst = max(worst, _rel(ud.coeffs, us.coeffs))
    return [
        _le("resolvent_l2_bound_excess", sw.maxima["lambda_u"] - 1.0, 1e-9),
        _le("resolvent_route_agreement", worst, 1e-8),
    ]


def check_energy(basis, seed, n_data=3, t=0.05, dt=1e-5):
    worst = 0.0
    for i in range(n_data):
        c = random_coeffs(basis, [seed, 2, i], kernel=True)
        ev = evolve_homogeneous(basis, c, [t - dt, t, t + dt])
        e = [lp_norm(ev.field(j), 2) ** 2 for j in range(3)]
        lhs = (e[2] - e[0]) / (2 * dt)
        rhs = -2 * lp_norm(vector_curl(ev.field(1)), 2) ** 2
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return [_le("energy_identity_rel_err", worst, 1e-5)]


def check_decay_and_flux(basis, seed):
    lam1 = basis.lambda1
    c = random_coeffs(basis, [seed, 3], kernel=True)
    times = np.linspace(0, 10 / lam1, 11)
    ev = evolve_homogeneous(basis, c, times)
    tilde0 = math.sqrt(float(np.sum(np.abs(c.beta) ** 2)))
    excess = max(
        math.sqrt(float(np.sum(np.abs(b) ** 2))) - math.exp(-lam1 * t) * tilde0 for t, b in zip(times, ev.beta)
    )
    fl0 = [cut_flux(ev.field(0), j) for j in range(1, basis.J + 1)]
    drift = 0.0
    for i in range(1, len(times)):
        u = ev.field(i)
        drift = max(drift, max(abs(cut_flux(u, j) - fl0[j - 1]) for j in range(1, basis.J + 1)))
    z1 = SpectralCoeffs(np.zeros(basis.J, complex), np.eye(basis.n_modes, dtype=complex)[0])
    ev1 = evolve_homogeneous(basis, z1, times)
    eq = max(abs(lp_norm(ev1.field(i), 2) - math.exp(-lam1 * t)) for i, t in enumerate(times))
    ts = np.geomspace(1e-6, 1e2, 400)
    s = np.sqrt(basis.lambdas)
    curl_bound = max(math.sqrt(t) * float(np.max(s * np.exp(-basis.lambdas * t))) for t in ts)
    return [
        _le("exponential_decay_excess", excess, 1e-12),
        _le("exponential_decay_equality_z1", eq, 1e-10),
        _le("flux_drift", drift, 1e-9),
        _le("curl_bound_excess", curl_bound - (2 * math.e) ** -0.5, 1e-15),
    ]


def check_powers(basis, seed):
    c = random_coeffs(basis, [seed, 4], n_active=min(40, basis.n_modes))
    alphas = (0.25, 0.5, 0.75)
    dun = dunford_powers(basis, alphas, c, n_quad=2000)
    worst = max(_rel(d.coeffs, reconstruct(basis, power_coeffs(basis, a, c)).coeffs) for a, d in zip(alphas, dun))
    p25 = power_coeffs(basis, 0.25, c)
    group = _coeff_diff(basis, power_coeffs(basis, 0.5, p25), power_coeffs(basis, 0.75, c))
    inv = _coeff_diff(basis, power_coeffs(basis, -0.5, power_coeffs(basis, 0.5, c)), c)
    half = reconstruct(basis, power_coeffs(basis, 0.5, c))
    curl = vector_curl(reconstruct(basis, c))
    sq = abs(lp_norm(half, 2) - lp_norm(curl, 2)) / lp_norm(curl, 2)
    im = max(abs(imaginary_power_norm(basis, s, 2.0, n_probes=2, seed=[seed, 5, i]) - 1) for i, s in enumerate((1, -4)))
    return [
        _le("dunford_vs_spectral", worst, 1e-8),
        _le("power_group_law", group, 1e-9),
        _le("power_inverse_law", inv, 1e-9),
        _le("half_power_vs_curl", sq, 1e-9),
        _le("imaginary_power_l2_norm_defect", im, 1e-10),
    ]


def check_maxreg(basis):
    lam = basis.lambda1
    T = 5 / lam
    ft = np.linspace(0, T, 65)
    fb = np.zeros((len(ft), basis.n_modes), dtype=complex)
    fb[:, 0] = 1
    fa = np.zeros((len(ft), basis.J), dtype=complex)
    r = maximal_regularity_ratio(basis, fa, fb, ft, 2.0, 2.0)
    ref = maxreg_one_mode_closed_form(lam, T)
    return [_le("maxreg_one_mode_rel_err", abs(r - ref) / ref, 1e-8)]


def check_helmholtz(basis, seed):
    g = basis.grid
    rng = np.random.default_rng([seed, 6])
    coeffs = np.zeros(g.modal_shape(), dtype=complex)
    lo = np.ix_(range(g.ncomp), np.abs(g.m_values) <= 3, np.abs(g.k_values) <= 2, range(g.Nr))
    shape = coeffs[lo].shape
    amp = rng.standard_normal(shape[:3]) + 1j * rng.standard_normal(shape[:3])
    x = (g.r_nodes - g.domain.a) / (g.domain.b - g.domain.a)
    coeffs[lo] = amp[..., None] * (1 + x - 2 * x**2 + x**3)
    f = Field(g, coeffs).real()
    P = project(f)
    res = projection_residuals(P)
    idem = _rel(project(P).coeffs, P.coeffs)
    return [
        _le("helmholtz_divergence", res[0], 1e-8),
        _le("helmholtz_trace", res[1], 1e-8),
        _le("helmholtz_idempotence", idem, 1e-10),
    ]


def check_fit():
    t = np.geomspace(1e-3, 1e-2, 16)
    fit = fit_log_log(t, t**-0.75)
    return [_le("power_law_fit_slope_err", abs(fit.slope + 0.75), 1e-12)]


def run_checks(basis: StokesBasis, seed: int = 0) -> list[Check]:
    """Run every invariant suite on ``basis``."""
    suites = [
        lambda: check_kernel(basis),
        lambda: check_spectrum(basis),
        lambda: check_residuals(basis),
        lambda: check_resolvent(basis, seed),
        lambda: check_energy(basis, seed),
        lambda: check_decay_and_flux(basis, seed),
        lambda: check_powers(basis, seed),
        lambda: check_maxreg(basis),
        lambda: check_helmholtz(basis, seed),
        check_fit,
    ]
    out = []
    for suite in suites:
        t0 = time.perf_counter()
        out += suite()
        LOG.debug("suite finished in %.2fs", time.perf_counter() - t0)
    return out
