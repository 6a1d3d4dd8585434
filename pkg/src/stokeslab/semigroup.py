"""Exact spectral evolution, Duhamel forcing and resolvent solves.

The homogeneous flow is diagonal in the eigenbasis,
``beta_k(t) = exp(-lambda_k t) beta_k(0)`` with the kernel coefficients
frozen. Forcing is interpolated linearly between samples and integrated in
closed form, so no time-stepping error enters.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
import scipy.linalg as sla

from .basis import SpectralCoeffs, StokesBasis, expand, reconstruct
from .errors import IllPosed, NonUniformSamples, SingularResolvent
from .fields import Field
from .geometry import SpectralGrid
from .spectral_ops import mode_vector_laplacian, navier_bc_rows

__all__ = [
    "NORM_CSV_HEADER",
    "DirectSolver",
    "EvolutionResult",
    "duhamel_linear",
    "evolve_homogeneous",
    "evolve_inhomogeneous",
    "phi1",
    "phi2",
    "resolvent_apply",
]

NORM_CSV_HEADER = ("t", "norm_name", "p", "value")


def phi1(x):
    """``(1 - exp(-x)) / x`` with the removable singularity at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    out = -np.expm1(-xs) / xs
    series = 1 - x / 2 + x**2 / 6 - x**3 / 24
    return np.where(small, series, out)


def phi2(x):
    """``(x - 1 + exp(-x)) / x**2``, equal to 1/2 at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    out = (xs + np.expm1(-xs)) / xs**2
    series = 0.5 - x / 6 + x**2 / 24 - x**3 / 120 + x**4 / 720
    return np.where(small, series, out)


def duhamel_linear(lam, tau, f0, slope):
    """``int_0^tau exp(-lam (tau - s)) (f0 + slope s) ds`` for each mode."""
    x = lam * tau
    return f0 * tau * phi1(x) + slope * tau**2 * phi2(x)


@dataclass(eq=False)
class EvolutionResult:
    """Coefficient trajectories of an evolution.

    ``alpha`` has shape ``(nt, J)`` and ``beta`` shape ``(nt, n_modes)``;
    ``dalpha``/``dbeta`` are the exact time derivatives.
    """

    basis: StokesBasis
    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    dalpha: np.ndarray
    dbeta: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    @property
    def states(self):
        return [SpectralCoeffs(a, b) for a, b in zip(self.alpha, self.beta)]

    def coeffs(self, i) -> SpectralCoeffs:
        return SpectralCoeffs(self.alpha[i], self.beta[i])

    def field(self, i) -> Field:
        return reconstruct(self.basis, self.coeffs(i))

    def derivative_field(self, i) -> Field:
        return reconstruct(self.basis, SpectralCoeffs(self.dalpha[i], self.dbeta[i]))

    def laplacian_field(self, i) -> Field:
        """``Delta u`` through the spectral identity ``Delta z_k = -lambda_k z_k``."""
        return reconstruct(
            self.basis, SpectralCoeffs(np.zeros_like(self.alpha[i]), -self.basis.lambdas * self.beta[i])
        )

    def norm_series(self, name="u", p=2.0):
        """Norm time series; ``name`` in ``{"u", "curl", "laplacian", "dt"}``."""
        from .analysis import lp_norm
        from .spectral_ops import vector_curl

        getters = {
            "u": self.field,
            "curl": lambda i: vector_curl(self.field(i)),
            "laplacian": self.laplacian_field,
            "dt": self.derivative_field,
        }
        if name not in getters:
            raise ValueError(f"unknown norm name {name!r}")
        return np.array([lp_norm(getters[name](i), p) for i in range(len(self.times))])

    def norm_rows(self, names=("u",), ps=(2.0,)):
        rows = []
        for name in names:
            for p in ps:
                for t, v in zip(self.times, self.norm_series(name, p)):
                    rows.append((float(t), name, float(p), float(v)))
        rows.sort(key=lambda r: (r[1], r[2], r[0]))
        return rows

    def write_csv(self, path, names=("u",), ps=(2.0,)):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(NORM_CSV_HEADER)
            for t, name, p, v in self.norm_rows(names, ps):
                w.writerow((repr(t), name, repr(p), repr(v)))


def _check_times(times):
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("times must be non-empty")
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("times must be non-negative and sorted ascending")
    return t


def _as_coeffs(basis, u):
    if isinstance(u, SpectralCoeffs):
        return u
    return expand(basis, u)


def evolve_homogeneous(basis: StokesBasis, u0, times: Sequence[float]) -> EvolutionResult:
    """Exact solution ``u(t) = sum alpha_j K_j + sum beta_k exp(-lambda_k t) z_k``."""
    t = _check_times(times)
    c0 = _as_coeffs(basis, u0)
    decay = np.exp(-np.outer(t, basis.lambdas))
    beta = decay * c0.beta[None, :]
    alpha = np.repeat(np.asarray(c0.alpha, dtype=complex)[None, :], len(t), axis=0)
    return EvolutionResult(
        basis, t, alpha, beta, np.zeros_like(alpha), -basis.lambdas[None, :] * beta, {"kind": "homogeneous"}
    )


def _forcing_coeffs(basis, forcing, ftimes, project_forcing):
    from .helmholtz import project

    if callable(forcing):
        samples = [forcing(float(s)) for s in ftimes]
    else:
        samples = list(forcing)
    if len(samples) != len(ftimes):
        raise NonUniformSamples(f"{len(samples)} forcing samples for {len(ftimes)} forcing times")
    out = []
    for s in samples:
        if isinstance(s, SpectralCoeffs):
            out.append(s)
        else:
            out.append(expand(basis, project(s) if project_forcing else s))
    return np.array([c.alpha for c in out]), np.array([c.beta for c in out])


def evolve_inhomogeneous(
    basis: StokesBasis,
    forcing,
    times: Sequence[float],
    forcing_times: Sequence[float] | None = None,
    project_forcing: bool = False,
) -> EvolutionResult:
    """Solve ``u' + A u = f``, ``u(0) = 0`` with ``f`` linear between samples.

    Parameters
    ----------
    forcing : sequence of Field or SpectralCoeffs, or callable ``t -> Field``
        Samples of ``f`` at ``forcing_times`` (default ``times``).
    times : sequence of float
        Output times; each must be one of the forcing sample times.
    forcing_times : sequence of float, optional
        Sample times, starting at 0; must contain every output time.
    project_forcing : bool
        Apply the Helmholtz projection to field samples first.
    """
    t = _check_times(times)
    ft = t if forcing_times is None else _check_times(forcing_times)
    if ft[0] != 0.0:
        raise NonUniformSamples("forcing samples must start at t = 0")
    if np.any(np.diff(ft) <= 0):
        raise NonUniformSamples("forcing sample times must be strictly increasing")
    pos = np.searchsorted(ft, t)
    if np.any(pos >= len(ft)) or np.any(np.abs(ft[np.minimum(pos, len(ft) - 1)] - t) > 1e-12 * max(1.0, ft[-1])):
        raise NonUniformSamples("every output time must coincide with a forcing sample (forcing grid too coarse)")
    fa, fb = _forcing_coeffs(basis, forcing, ft, project_forcing)
    lam = basis.lambdas
    nb = np.zeros((len(ft), len(lam)), dtype=complex)
    na = np.zeros((len(ft), basis.J), dtype=complex)
    for i in range(1, len(ft)):
        h = ft[i] - ft[i - 1]
        nb[i] = np.exp(-lam * h) * nb[i - 1] + duhamel_linear(lam, h, fb[i - 1], (fb[i] - fb[i - 1]) / h)
        na[i] = na[i - 1] + h * (fa[i - 1] + fa[i]) / 2
    beta, alpha = nb[pos], na[pos]
    dbeta = fb[pos] - lam[None, :] * beta
    dalpha = fa[pos]
    res = EvolutionResult(basis, t, alpha, beta, dalpha, dbeta, {"kind": "inhomogeneous"})
    res.meta.update(forcing_times=ft, forcing_alpha=fa, forcing_beta=fb)
    return res


# resolvent ---------------------------------------------------------------------


def _kernel_profiles(grid):
    r = grid.r_nodes
    N = grid.Nr
    k1 = np.zeros((grid.ncomp, N))
    k1[1] = 1 / r
    out = [k1]
    if grid.dim == 3:
        k2 = np.zeros((3, N))
        k2[2] = 1
        out.append(k2)
    return out


class DirectSolver:
    """Per-mode dense solver for ``(lam - Delta) u = f`` with Navier rows.

    The boundary-row operators are assembled once per grid. Each block is
    reduced once to generalized Schur form ``(Q S Z^H, Q T Z^H)`` so that a
    solve at any spectral parameter is one triangular solve.
    """

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        self._blocks = {}

    def _block(self, m, k):
        key = (m, k)
        if key not in self._blocks:
            g = self.grid
            A = -mode_vector_laplacian(g, m, k).astype(complex)
            rows, B = navier_bc_rows(g, m, k)
            A[rows] = B
            mask = np.ones(A.shape[0])
            mask[rows] = 0
            S, T, Q, Z = sla.qz(A, np.diag(mask).astype(complex), output="complex")
            self._blocks[key] = (A, mask, rows, (S, T, Q, Z))
        return self._blocks[key]

    def solve_block(self, lam, m, k, rhs):
        g = self.grid
        A0, mask, rows, (S, T, Q, Z) = self._block(m, k)
        b = rhs.reshape(-1).astype(complex)
        b[rows] = 0
        n = A0.shape[0]
        if lam == 0 and m == 0 and k == 0:
            A = A0 + np.diag(lam * mask)
            w = np.tile(g.w_quad, g.ncomp)
            K = np.array([kp.reshape(-1) for kp in _kernel_profiles(g)]).T
            J = K.shape[1]
            M = np.zeros((n + J, n + J), dtype=complex)
            M[:n, :n] = A
            M[:n, n:] = K
            M[n:, :n] = (K * w[:, None]).T
            sol = np.linalg.solve(M, np.concatenate([b, np.zeros(J)]))[:n]
        else:
            R = S + lam * T
            d = np.abs(np.diag(R))
            if d.min() <= 1e-14 * d.max():
                raise IllPosed(f"resolvent singular at lambda={lam} on mode (m={m}, k={k})")
            y = sla.solve_triangular(R, Q.conj().T @ b, check_finite=False)
            sol = Z @ y
        return sol.reshape(g.ncomp, g.Nr)

    def apply(self, lam, f: Field) -> Field:
        g = self.grid
        out = np.zeros_like(f.coeffs)
        for im, m in enumerate(g.m_values):
            for ik, k in enumerate(g.k_values):
                rhs = f.coeffs[:, im, ik, :]
                if not np.any(rhs):
                    continue
                out[:, im, ik, :] = self.solve_block(lam, int(m), int(k), rhs)
        return Field(g, out)


_SOLVERS = {}


def _direct_solver(grid):
    key = id(grid)
    solver = _SOLVERS.get(key)
    if solver is None or solver.grid is not grid:
        solver = _SOLVERS[key] = DirectSolver(grid)
    return solver


def resolvent_apply(basis_or_grid, lam: complex, f, route: str = "spectral", allow_left: bool = False):
    """Apply ``(lam + A)^{-1}`` to ``f``.

    Parameters
    ----------
    basis_or_grid : StokesBasis or SpectralGrid
        The direct route needs only the grid.
    lam : complex
        Spectral parameter; ``Re lam >= 0`` is the intended range.
    f : Field or SpectralCoeffs
        Right-hand side in discrete ``L2_sigma_tau`` (coefficients only for
        the spectral route).
    route : {"spectral", "direct"}
        Eigen-expansion or per-mode dense solve with boundary rows.
    allow_left : bool
        Let the direct route accept ``Re lam < 0`` (contour quadrature).

    Raises
    ------
    SingularResolvent
        ``lam == 0`` while ``f`` has a kernel component.
    IllPosed
        ``Re lam < 0`` and ``lam`` within 1e-12 of some ``-lambda_k``.
    """
    lam = complex(lam)
    if route == "spectral":
        basis = basis_or_grid
        if not isinstance(basis, StokesBasis):
            raise TypeError("the spectral route needs a StokesBasis")
        c = _as_coeffs(basis, f)
        den = lam + basis.lambdas
        if lam.real < 0 and np.any(np.abs(den) <= 1e-12 * max(1.0, abs(lam))):
            raise IllPosed(f"lambda={lam} coincides with -lambda_k")
        scale = max(np.abs(c.beta).max(initial=0.0), np.abs(c.alpha).max(initial=0.0), 1e-300)
        if lam == 0:
            if np.abs(c.alpha).max(initial=0.0) > 1e-12 * scale:
                raise SingularResolvent("lambda = 0 with a nonzero kernel component")
            alpha = np.zeros_like(c.alpha)
        else:
            alpha = c.alpha / lam
        out = SpectralCoeffs(alpha, c.beta / den)
        return out if isinstance(f, SpectralCoeffs) else reconstruct(basis, out)
    if route != "direct":
        raise ValueError(f"unknown route {route!r}")
    grid = basis_or_grid.grid if isinstance(basis_or_grid, StokesBasis) else basis_or_grid
    if not isinstance(grid, SpectralGrid):
        raise TypeError("expected a StokesBasis or SpectralGrid")
    if isinstance(f, SpectralCoeffs):
        f = reconstruct(basis_or_grid, f)
    if lam.real < 0 and not allow_left:
        raise IllPosed("the direct route is restricted to Re lambda >= 0")
    if lam == 0:
        blk = f.coeffs[:, grid.Mmax, grid.Kmax, :]
        w = grid.w_quad
        fl = max(f.norm(), 1e-300)
        for kp in _kernel_profiles(grid):
            ov = abs(np.sum(kp * blk * w)) / math.sqrt(np.sum(kp**2 * w))
            if ov > 1e-10 * fl:
                raise SingularResolvent("lambda = 0 with a nonzero kernel component")
    return _direct_solver(grid).apply(lam, f)
