"""Fractional and imaginary powers of the Stokes operator.

Two independent routes are offered for ``(shift + A)^alpha``:

* ``spectral``: multiply eigen coefficients by ``(shift + lambda_k)^alpha``;
* ``dunford``: contour integral ``(2 pi i)^{-1} oint z^alpha (z - B)^{-1} dz``
  with ``B = shift + A`` and resolvents taken from the per-mode direct
  solver, so the only shared ingredient with the spectral route is the
  input field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import nodal_lp
from .basis import SpectralCoeffs, StokesBasis, project_coeffs, reconstruct
from .errors import BranchCut, ExponentOutOfRange, KernelComponentPresent
from .fields import Field
from .sampling import as_rng, random_coeffs
from .semigroup import resolvent_apply

__all__ = [
    "GrowthFit",
    "dunford_contour",
    "dunford_powers",
    "embedding_exponent",
    "imaginary_power_growth",
    "imaginary_power_norm",
    "power_apply",
    "power_coeffs",
    "sobolev_embedding_constant",
]


def _kernel_check(basis, c, shift):
    if shift == 0:
        scale = max(np.abs(c.beta).max(initial=0.0), 1e-300)
        if np.abs(c.alpha).max(initial=0.0) > 1e-10 * max(scale, np.abs(c.alpha).max(initial=0.0)):
            raise KernelComponentPresent("shift = 0 requires a kernel-orthogonal field")


def power_coeffs(basis: StokesBasis, alpha: complex, c: SpectralCoeffs, shift: float = 0.0) -> SpectralCoeffs:
    """Spectral route on coefficients (principal branch)."""
    shift = float(shift)
    _kernel_check(basis, c, shift)
    beta = (shift + basis.lambdas).astype(complex) ** alpha * c.beta
    a = c.alpha * (complex(shift) ** alpha) if shift > 0 else np.zeros_like(c.alpha)
    return SpectralCoeffs(a, beta)


def dunford_contour(c1: float, c2: float, n_quad: int = 2000, angle: float = math.pi / 4):
    """Nodes and weights ``(z, dz)`` of a closed contour around ``[c1, c2]``.

    The contour has its vertex at ``c1``, two rays at ``+-angle`` reaching
    ``Re z = c2`` and a circular arc (centred at ``c1``) closing it. Each
    piece uses tanh-sinh quadrature, i.e. the trapezoid rule in the
    transformed variable, which absorbs the corner singularities.
    Orientation is counter-clockwise.
    """
    if not 0 < c1 < c2:
        raise BranchCut(f"contour [{c1}, {c2}] must lie in the open right half-plane")
    n_ray = n_quad // 3
    n_arc = n_quad - 2 * n_ray
    R = (c2 - c1) / math.cos(angle)

    def tanh_sinh(n):
        h = 6.4 / (n - 1)
        k = np.arange(n) - (n - 1) / 2
        s = k * h
        u = np.tanh(0.5 * math.pi * np.sinh(s))
        du = 0.5 * math.pi * np.cosh(s) / np.cosh(0.5 * math.pi * np.sinh(s)) ** 2 * h
        return u, du  # u in (-1, 1)

    zs, ws = [], []
    u, du = tanh_sinh(n_ray)
    t = (u + 1) / 2  # parameter in (0, 1)
    dt = du / 2
    e_up = np.exp(1j * angle)
    # lower ray, from the far end into the vertex
    zs.append(c1 + R * (1 - t) * np.conj(e_up))
    ws.append(-R * np.conj(e_up) * dt)
    # upper ray, from the vertex outwards
    zs.append(c1 + R * t * e_up)
    ws.append(R * e_up * dt)
    u, du = tanh_sinh(n_arc)
    phi = angle - angle * (u + 1)  # from +angle down to -angle: clockwise on the circle
    dphi = -angle * du
    zs.append(c1 + R * np.exp(1j * phi))
    ws.append(1j * R * np.exp(1j * phi) * dphi)
    # the pieces above run clockwise around the interval; flip the weights
    return np.concatenate(zs), -np.concatenate(ws)


def power_apply(
    basis: StokesBasis,
    alpha: complex,
    f,
    route: str = "spectral",
    shift: float = 0.0,
    n_quad: int = 2000,
    contour: tuple | None = None,
    resolvent_route: str = "direct",
):
    """Apply ``(shift + A)^alpha`` to ``f``.

    Parameters
    ----------
    f : Field or SpectralCoeffs
        Kernel-orthogonal when ``shift == 0``.
    route : {"spectral", "dunford"}
    contour : (c1, c2), optional
        Interval enclosed by the Dunford contour. Defaults to
        ``[s_low / 2, 2 s_high]`` around the spectrum of ``shift + A``
        seen by ``f``.
    resolvent_route : {"direct", "spectral"}
        How the Dunford route evaluates resolvents.

    Raises
    ------
    KernelComponentPresent
        ``shift == 0`` and ``f`` has a kernel component.
    BranchCut
        The contour meets the negative axis or leaves spectrum outside.
    """
    c = f if isinstance(f, SpectralCoeffs) else project_coeffs(basis, f)
    shift = float(shift)
    if shift < 0:
        raise ValueError("shift must be non-negative")
    if route == "spectral":
        out = power_coeffs(basis, alpha, c, shift)
        return out if isinstance(f, SpectralCoeffs) else reconstruct(basis, out)
    if route != "dunford":
        raise ValueError(f"unknown route {route!r}")
    out = _dunford(basis, [alpha], c, shift, n_quad, contour, resolvent_route)[0]
    return project_coeffs(basis, out) if isinstance(f, SpectralCoeffs) else out


def dunford_powers(
    basis: StokesBasis,
    alphas,
    f,
    shift: float = 0.0,
    n_quad: int = 2000,
    contour: tuple | None = None,
    resolvent_route: str = "direct",
):
    """Dunford route for several exponents sharing one set of resolvent solves."""
    c = f if isinstance(f, SpectralCoeffs) else project_coeffs(basis, f)
    return _dunford(basis, list(alphas), c, float(shift), n_quad, contour, resolvent_route)


def _dunford(basis, alphas, c, shift, n_quad, contour, resolvent_route):
    _kernel_check(basis, c, shift)
    has_kernel = np.any(c.alpha != 0)
    s_low = shift + (0.0 if has_kernel else basis.lambda1)
    s_high = shift + basis.lambda_max
    c1, c2 = contour if contour is not None else (s_low / 2, 2 * s_high)
    if c1 <= 0:
        raise BranchCut("contour vertex must lie on the positive real axis")
    if not c1 < s_low or not s_high < c2:
        raise BranchCut(f"spectrum [{s_low:.4g}, {s_high:.4g}] not enclosed by contour [{c1:.4g}, {c2:.4g}]")
    z, w = dunford_contour(c1, c2, n_quad)
    field = reconstruct(basis, c)
    acc = [np.zeros_like(field.coeffs) for _ in alphas]
    for zi, wi in zip(z, w):
        # (z - B)^{-1} = -((shift - z) + A)^{-1}
        lam = shift - zi
        if resolvent_route == "direct":
            u = resolvent_apply(basis.grid, lam, field, route="direct", allow_left=True).coeffs
        else:
            u = reconstruct(basis, resolvent_apply(basis, lam, c)).coeffs
        for a, buf in zip(alphas, acc):
            buf -= (wi * zi**a) * u
    return [Field(basis.grid, buf / (2j * math.pi)) for buf in acc]


# imaginary powers -----------------------------------------------------------------


@dataclass(frozen=True)
class GrowthFit:
    """``log ||A^{is}||_p ~ log K + theta |s|`` fitted over ``s_list``."""

    K: float
    theta: float
    residual: float
    s: tuple
    norms: tuple
    p: float
    n_probes: int
    seed: int

    def rows(self):
        return [(s, n, self.residual, self.n_probes, self.seed) for s, n in zip(self.s, self.norms)]


def _dual(values, p):
    mag = np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(mag > 0, mag ** (p - 2), 0.0)
    return values * fac


def _coeffs_of_nodal(basis, values):
    f = Field.from_nodal(basis.grid, values)
    c = project_coeffs(basis, f)
    return SpectralCoeffs(np.zeros_like(c.alpha), c.beta)


def imaginary_power_norm(basis: StokesBasis, s: float, p: float, n_probes: int = 8, seed=0, iters: int = 20):
    """Estimate ``||A'^{is}||_{p -> p}`` on the span of the eigenfields.

    Each random probe is refined by the dual power iteration
    ``x <- J_{p'}(T^* J_p(T x))`` with ``J_r(y) = |y|^{r-2} y`` and the dual
    images re-expanded onto the eigenfields; the best ratio seen is
    returned.
    """
    p = float(p)
    if not 1 < p < math.inf:
        raise ExponentOutOfRange("p must lie in (1, inf)")
    if s == 0:
        return 1.0
    rng = as_rng(seed)
    g = basis.grid
    mult = basis.lambdas.astype(complex) ** (1j * s)
    pd = p / (p - 1)
    best = 0.0
    for _ in range(int(n_probes)):
        c = random_coeffs(basis, rng, decay=0.5)
        x = c.beta
        for it in range(int(iters)):
            xv = reconstruct(basis, SpectralCoeffs(c.alpha * 0, x)).nodal()
            y = mult * x
            yv = reconstruct(basis, SpectralCoeffs(c.alpha * 0, y)).nodal()
            nx, ny = nodal_lp(xv, g, p), nodal_lp(yv, g, p)
            best = max(best, ny / nx)
            if p == 2 or it == iters - 1:
                break
            d = _coeffs_of_nodal(basis, _dual(yv, p)).beta
            back = np.conj(mult) * d
            bv = reconstruct(basis, SpectralCoeffs(c.alpha * 0, back)).nodal()
            x = _coeffs_of_nodal(basis, _dual(bv, pd)).beta
            if not np.any(x):
                break
    return best


def imaginary_power_growth(
    basis: StokesBasis, p: float, s_list, n_probes: int = 8, seed: int = 0, iters: int = 20
) -> GrowthFit:
    """Fit ``log ||A'^{is}||_p <= log K + theta |s|`` over ``s_list``."""
    s_arr = np.asarray(list(s_list), dtype=float)
    norms = np.array([imaginary_power_norm(basis, s, p, n_probes, [int(seed), i], iters) for i, s in enumerate(s_arr)])
    A = np.vstack([np.ones_like(s_arr), np.abs(s_arr)]).T
    y = np.log(norms)
    if len(s_arr) >= 2 and np.ptp(np.abs(s_arr)) > 0:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    else:
        coef = np.array([y.mean(), 0.0])
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return GrowthFit(
        float(math.exp(coef[0])), float(coef[1]), resid, tuple(s_arr.tolist()), tuple(norms.tolist()), float(p),
        int(n_probes), int(seed),
    )


# Sobolev embeddings --------------------------------------------------------------------


def embedding_exponent(alpha: float, p: float, d: int) -> float:
    """``q`` with ``1/q = 1/p - 2 alpha / d``; raises if no such finite ``q`` exists."""
    if not (1 < p < math.inf):
        raise ExponentOutOfRange("p must lie in (1, inf)")
    if not 0 < alpha < d / (2 * p):
        raise ExponentOutOfRange(f"alpha={alpha} outside (0, d/(2p)) = (0, {d / (2 * p):.4g})")
    return 1.0 / (1.0 / p - 2.0 * alpha / d)


def sobolev_embedding_constant(
    basis: StokesBasis,
    alpha: float,
    p: float,
    q: float | None = None,
    n_probes: int = 32,
    seed: int = 0,
    d: int | None = None,
    n_active: int | None = 32,
    probes=None,
):
    """Estimate ``sup ||g||_q / ||A'^alpha g||_p`` over seeded random probes.

    Returns ``(constant, q)``. ``probes`` may supply explicit coefficient
    vectors; otherwise probes are random kernel-orthogonal fields on the
    lowest ``n_active`` eigenfields (stable across basis refinement).
    """
    d = basis.grid.dim if d is None else int(d)
    q_rel = embedding_exponent(alpha, p, d)
    if q is not None and abs(1 / q - 1 / q_rel) > 1e-12:
        raise ExponentOutOfRange(f"q={q} violates 1/q = 1/p - 2 alpha/d (expected q={q_rel:.6g})")
    q = q_rel
    g = basis.grid
    if probes is None:
        rng = as_rng(seed)
        probes = [random_coeffs(basis, rng, decay=0.0, n_active=n_active) for _ in range(int(n_probes))]
    best = 0.0
    for c in probes:
        c = SpectralCoeffs(np.zeros_like(c.alpha), c.beta)
        num = nodal_lp(reconstruct(basis, c).nodal(), g, q)
        den = nodal_lp(reconstruct(basis, power_coeffs(basis, alpha, c)).nodal(), g, p)
        best = max(best, num / den)
    return best, q
