"""Discrete norms, smoothing-rate fits, maximal-regularity and resolvent sweeps."""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
from scipy import stats

from .basis import SpectralCoeffs, StokesBasis, project_coeffs, reconstruct
from .errors import ExponentOutOfRange, WindowTooNarrow
from .fields import Field
from .sampling import as_rng, random_coeffs
from .semigroup import duhamel_linear
from .spectral_ops import (
    gradient,
    scalar_laplacian,
    vector_curl,
    vector_divergence,
    vector_laplacian,
)

__all__ = [
    "FIT_HEADER",
    "MAXREG_HEADER",
    "SWEEP_HEADER",
    "DecayFit",
    "MaxRegReport",
    "SweepReport",
    "coeff_l2",
    "fit_log_log",
    "fit_smoothing_exponent",
    "lp_norm",
    "maximal_regularity_constant",
    "maximal_regularity_ratio",
    "negative_norm",
    "nodal_lp",
    "resolvent_sweep",
    "write_csv",
]

LOG = logging.getLogger(__name__)

SWEEP_HEADER = ("angle", "abs_lambda", "quantity", "value", "probes", "seed")
FIT_HEADER = ("p", "q", "slope", "stderr", "t_min", "t_max")
MAXREG_HEADER = ("trial", "seed", "p", "q", "ratio")


def write_csv(path, header, rows):
    """RFC-4180 CSV with a header row; floats written with ``repr`` for round-tripping."""

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return v

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# norms -------------------------------------------------------------------------


def _check_p(p):
    p = float(p)
    if not p > 1:
        raise ExponentOutOfRange(f"Lebesgue exponent must lie in (1, inf], got {p}")
    return p


def nodal_lp(values, grid, p):
    """p-norm of nodal samples ``(ncomp, Ntheta, Nz, Nr)`` (pointwise Euclidean magnitude)."""
    mag = np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
    if math.isinf(p):
        return float(mag.max())
    return float(np.sum(grid.nodal_weights * mag**p) ** (1 / p))


def lp_norm(field: Field, p=2.0, order: int = 0, basis: StokesBasis | None = None) -> float:
    """Discrete ``L^p``, ``W^{1,p}``, ``W^{2,p}`` or p = 2 negative norm.

    Parameters
    ----------
    p : float
        Exponent in ``(1, inf]``; ``p = 2`` is evaluated on the modal
        coefficients, other values on the nodal mesh. (The smoothing fits
        also use ``p = 1`` through :func:`nodal_lp`.)
    order : {0, 1, 2, -1}
        ``1``: ``||u|| + ||curl u|| + ||div u||`` for vector fields,
        ``||u|| + ||grad u||`` for scalars. ``2``: ``||u|| + ||Delta u||``.
        ``-1``: spectral negative norm (p = 2 only, needs ``basis``).
    """
    p = _check_p(p)
    if order == 0:
        return _lp_raw(field, p)
    if order == 1:
        if field.kind == "vector":
            return _lp_raw(field, p) + _lp_raw(vector_curl(field), p) + _lp_raw(vector_divergence(field), p)
        return _lp_raw(field, p) + _lp_raw(gradient(field), p)
    if order == 2:
        lap = vector_laplacian(field) if field.kind == "vector" else scalar_laplacian(field)
        return _lp_raw(field, p) + _lp_raw(lap, p)
    if order == -1:
        if p != 2 or basis is None:
            raise ExponentOutOfRange("negative norms are only available for p = 2 with a basis")
        return negative_norm(basis, field)
    raise ValueError(f"unsupported order {order}")


def _lp_raw(field, p):
    if p == 2:
        return field.norm()
    return nodal_lp(field.nodal(), field.grid, p)


def coeff_l2(basis: StokesBasis, c: SpectralCoeffs) -> float:
    """L2 norm of a coefficient vector (Parseval in the orthonormal eigenbasis)."""
    a = np.asarray(c.alpha)
    return math.sqrt(float(np.sum(np.abs(c.beta) ** 2) + np.real(np.conj(a) @ basis.kernel_gram @ a)))


def negative_norm(basis: StokesBasis, f) -> float:
    """``(sum |beta_k|^2 / lambda_k)^{1/2}`` plus the L2 norm of the kernel part."""
    c = f if isinstance(f, SpectralCoeffs) else project_coeffs(basis, f)
    kern = math.sqrt(max(float(np.real(np.conj(c.alpha) @ basis.kernel_gram @ c.alpha)), 0.0))
    return math.sqrt(float(np.sum(np.abs(c.beta) ** 2 / basis.lambdas))) + kern


# decay fits ----------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    stderr: float
    t_window: tuple
    mu: float = 0.0
    p: float = float("nan")
    q: float = float("nan")
    samples: tuple = dc_field(default=(), repr=False)

    def row(self):
        return (self.p, self.q, self.slope, self.stderr, self.t_window[0], self.t_window[1])


def fit_log_log(t, values, mu: float = 0.0, p=float("nan"), q=float("nan")) -> DecayFit:
    """Least-squares fit of ``log(values * exp(mu t))`` against ``log t``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 3:
        raise WindowTooNarrow("need at least three samples")
    if t.max() / t.min() < 10 * (1 - 1e-9):
        raise WindowTooNarrow(f"window [{t.min():.3g}, {t.max():.3g}] spans less than one decade")
    x = np.log(t)
    y = np.log(v) + mu * t
    res = stats.linregress(x, y)
    return DecayFit(
        float(res.slope),
        float(res.intercept),
        float(res.stderr),
        (float(t.min()), float(t.max())),
        mu,
        p,
        q,
        tuple(zip(t.tolist(), v.tolist())),
    )


def fit_smoothing_exponent(
    basis: StokesBasis,
    u0,
    p: float,
    q: float,
    t_window: tuple,
    n_samples: int = 16,
    mu: float | None = None,
) -> DecayFit:
    """Fit the algebraic rate of ``||T(t) u0_tilde||_q / ||u0_tilde||_p``.

    The kernel part of ``u0`` is removed first (it does not decay) and the
    exponential factor is compensated with ``mu = lambda_1 / 2``.
    ``p`` may be 1 here; ``q`` may be ``inf``.
    """
    p, q = float(p), float(q)
    if p < 1 or q < p:
        raise ExponentOutOfRange(f"need 1 <= p <= q, got p={p}, q={q}")
    t0, t1 = map(float, t_window)
    if not 0 < t0 < t1 or t1 / t0 < 10 * (1 - 1e-9):
        raise WindowTooNarrow(f"window [{t0:.3g}, {t1:.3g}] spans less than one decade")
    if isinstance(u0, SpectralCoeffs):
        c0 = SpectralCoeffs(np.zeros_like(u0.alpha), u0.beta)
    else:
        from .helmholtz import split_flux

        _, tilde = split_flux(basis, u0)
        c0 = project_coeffs(basis, tilde)
        c0 = SpectralCoeffs(np.zeros_like(c0.alpha), c0.beta)
    mu = basis.lambda1 / 2 if mu is None else float(mu)
    g = basis.grid
    base = nodal_lp(reconstruct(basis, c0).nodal(), g, p)
    ts = np.geomspace(t0, t1, int(n_samples))
    vals = []
    for t in ts:
        ct = SpectralCoeffs(c0.alpha, c0.beta * np.exp(-basis.lambdas * t))
        vals.append(nodal_lp(reconstruct(basis, ct).nodal(), g, q) / base)
    return fit_log_log(ts, vals, mu, p, q)


# maximal regularity -----------------------------------------------------------------


@dataclass
class MaxRegReport:
    ratios: np.ndarray
    seeds: list
    p: float
    q: float
    T: float
    rows: list = dc_field(default_factory=list)

    @property
    def max(self):
        return float(np.max(self.ratios)) if len(self.ratios) else float("nan")

    @property
    def mean(self):
        return float(np.mean(self.ratios)) if len(self.ratios) else float("nan")

    def quantiles(self, qs=(0.05, 0.5, 0.95)):
        return {float(x): float(np.quantile(self.ratios, x)) for x in qs}


def _space_norm(basis, alpha, beta, p):
    """p-norms of the fields given by rows of ``(alpha, beta)``."""
    if p == 2:
        kern = np.real(np.einsum("ti,ij,tj->t", np.conj(alpha), basis.kernel_gram, alpha))
        return np.sqrt(np.sum(np.abs(beta) ** 2, axis=1) + np.maximum(kern, 0))
    return np.array(
        [nodal_lp(reconstruct(basis, SpectralCoeffs(a, b)).nodal(), basis.grid, p) for a, b in zip(alpha, beta)]
    )


def maximal_regularity_ratio(basis, forcing_alpha, forcing_beta, ftimes, p=2.0, q=2.0, n_gauss=4):
    """``(||u'||^q + ||Delta u||^q)^{1/q} / ||f||`` in ``L^q(0, T; L^p)``.

    The forcing is linear between the samples ``ftimes`` and ``u(0) = 0``;
    time integrals use Gauss-Legendre points inside each interval. Returns
    ``None`` for a vanishing forcing.
    """
    p, q = _check_p(p), _check_p(q)
    lam = basis.lambdas
    ft = np.asarray(ftimes, dtype=float)
    fa, fb = np.asarray(forcing_alpha), np.asarray(forcing_beta)
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    acc = np.zeros(3)
    beta0 = np.zeros(len(lam), dtype=complex)
    for i in range(1, len(ft)):
        h = ft[i] - ft[i - 1]
        slope = (fb[i] - fb[i - 1]) / h
        aslope = (fa[i] - fa[i - 1]) / h
        tau = (xg + 1) * h / 2
        b = np.exp(-np.outer(tau, lam)) * beta0 + duhamel_linear(
            lam[None, :], tau[:, None], fb[i - 1][None, :], slope[None, :]
        )
        f_b = fb[i - 1][None, :] + tau[:, None] * slope[None, :]
        f_a = fa[i - 1][None, :] + tau[:, None] * aslope[None, :]
        zero_a = np.zeros_like(f_a)
        n_dt = _space_norm(basis, f_a, f_b - lam * b, p)
        n_lap = _space_norm(basis, zero_a, -lam * b, p)
        n_f = _space_norm(basis, f_a, f_b, p)
        wq = wg * h / 2
        acc += [np.sum(wq * n_dt**q), np.sum(wq * n_lap**q), np.sum(wq * n_f**q)]
        beta0 = np.exp(-lam * h) * beta0 + duhamel_linear(lam, h, fb[i - 1], slope)
    if acc[2] <= 0:
        LOG.info("maximal regularity trial skipped: zero forcing")
        return None
    return float((acc[0] + acc[1]) ** (1 / q) / acc[2] ** (1 / q))


def _random_forcing(basis, rng, T, n_steps, decay=1.0, n_active=None):
    ft = np.linspace(0.0, T, n_steps + 1)
    comps = [random_coeffs(basis, rng, decay=decay, n_active=n_active) for _ in range(3)]
    phases = rng.uniform(0, 2 * math.pi, 3)
    fb = np.zeros((len(ft), basis.n_modes), dtype=complex)
    for j, (c, ph) in enumerate(zip(comps, phases)):
        fb += np.cos(math.pi * j * ft / T + ph)[:, None] * c.beta[None, :]
    fa = np.zeros((len(ft), basis.J), dtype=complex)
    return ft, fa, fb


def maximal_regularity_constant(
    basis: StokesBasis,
    p: float = 2.0,
    q: float = 2.0,
    T_horizon: float | None = None,
    n_trials: int = 100,
    seed: int = 0,
    n_steps: int = 64,
    decay: float = 1.0,
    n_active: int | None = None,
) -> MaxRegReport:
    """Empirical maximal-regularity ratio over seeded random forcings.

    Forcings are smooth in time (three cosine profiles) with modal spectra
    decaying like ``lambda_k**-decay`` and no kernel component. Trial ``i``
    uses the generator seeded with ``(seed, i)``, so doubling ``n_trials``
    extends rather than reshuffles the ensemble.
    """
    T = 5.0 / basis.lambda1 if T_horizon is None else float(T_horizon)
    ratios, seeds, rows = [], [], []
    for i in range(int(n_trials)):
        rng = np.random.default_rng([int(seed), i])
        ft, fa, fb = _random_forcing(basis, rng, T, n_steps, decay, n_active)
        r = maximal_regularity_ratio(basis, fa, fb, ft, p, q)
        if r is None:
            continue
        ratios.append(r)
        seeds.append(i)
        rows.append((i, int(seed), float(p), float(q), r))
    return MaxRegReport(np.array(ratios), seeds, float(p), float(q), T, rows)


# resolvent sweep ---------------------------------------------------------------------


@dataclass
class SweepReport:
    rows: list
    maxima: dict

    def max_of(self, quantity):
        return self.maxima[quantity]


QUANTITIES = ("lambda_u", "sqrt_lambda_curl", "w2")


def resolvent_sweep(
    basis: StokesBasis,
    ray_angles: Sequence[float],
    magnitudes: Sequence[float],
    p: float = 2.0,
    n_probes: int = 50,
    seed: int = 0,
    kernel: bool = True,
    decay: float = 0.0,
    n_active: int | None = None,
) -> SweepReport:
    """Maximise the resolvent estimate quantities over seeded random probes.

    For each ``lambda = |lambda| exp(i angle)`` reports, maximised over the
    probes, ``|lambda| ||u||_p / ||f||_p``, ``sqrt|lambda| ||curl u||_p /
    ||f||_p`` and ``||u||_{W^{2,p}} |lambda| / ((1 + |lambda|) ||f||_p)``
    with ``u = (lambda + A)^{-1} f``.
    """
    p = _check_p(p)
    for m in magnitudes:
        if not 1e-2 * (1 - 1e-12) <= m <= 1e4 * (1 + 1e-12):
            raise ValueError(f"|lambda| = {m} outside [1e-2, 1e4]")
    rng = as_rng(seed)
    probes = [random_coeffs(basis, rng, decay=decay, kernel=kernel, n_active=n_active) for _ in range(n_probes)]
    lam_k = basis.lambdas
    G = basis.kernel_gram
    fnorms = [_probe_norm(basis, c, p) for c in probes]
    rows, maxima = [], {q: -np.inf for q in QUANTITIES}
    for ang in ray_angles:
        for mag in magnitudes:
            lam = mag * complex(math.cos(ang), math.sin(ang))
            best = dict.fromkeys(QUANTITIES, 0.0)
            for c, fn in zip(probes, fnorms):
                ub = c.beta / (lam + lam_k)
                ua = c.alpha / lam
                if p == 2:
                    un = math.sqrt(float(np.sum(np.abs(ub) ** 2) + np.real(np.conj(ua) @ G @ ua)))
                    cn = math.sqrt(float(np.sum(lam_k * np.abs(ub) ** 2)))
                    ln = math.sqrt(float(np.sum((lam_k * np.abs(ub)) ** 2)))
                else:
                    uf = reconstruct(basis, SpectralCoeffs(ua, ub))
                    un = nodal_lp(uf.nodal(), basis.grid, p)
                    cn = nodal_lp(vector_curl(uf).nodal(), basis.grid, p)
                    lf = reconstruct(basis, SpectralCoeffs(np.zeros_like(ua), -lam_k * ub))
                    ln = nodal_lp(lf.nodal(), basis.grid, p)
                vals = {
                    "lambda_u": mag * un / fn,
                    "sqrt_lambda_curl": math.sqrt(mag) * cn / fn,
                    "w2": (un + ln) * mag / ((1 + mag) * fn),
                }
                for k, v in vals.items():
                    best[k] = max(best[k], v)
            for k in QUANTITIES:
                rows.append((float(ang), float(mag), k, best[k], int(n_probes), int(seed)))
                maxima[k] = max(maxima[k], best[k])
    return SweepReport(rows, maxima)


def _probe_norm(basis, c, p):
    if p == 2:
        return coeff_l2(basis, c)
    return nodal_lp(reconstruct(basis, c).nodal(), basis.grid, p)
