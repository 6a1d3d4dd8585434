"""Discrete Stokes eigensystem with Navier slip conditions.

The Stokes operator with Navier-type conditions acts as ``-Delta`` on
divergence-free fields tangent to the boundary, with a constant pressure.
Because the model domains separate in ``theta`` (and ``z``), the spectrum is
assembled mode by mode:

* 2D, ``m != 0``: eigenfields are ``perp_grad(psi)`` with ``psi`` a Dirichlet
  eigenfunction of the scalar mode Laplacian.
* 2D, ``m = 0``: the swirl problem for ``u_theta(r)`` with vanishing
  vorticity on both walls. Its zero eigenvalue is the harmonic field
  ``e_theta / r``.
* 3D: primitive variables ``(u, p)`` with the pressure collocated on the
  interior nodes (staggered, no spurious pressure modes). The pressure
  multiplier of every retained pair must vanish.

Every eigenpair is polished by Newton iteration with residuals accumulated
in extended precision, then orthonormalised inside its block in the discrete
L2 inner product. Pairs whose residuals exceed the tolerances reject the
whole basis.
"""
from __future__ import annotations

import json
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
import scipy.linalg as sla

from .errors import CapacityExceeded, EigensolveFailure, NotInSpan, ResidualTooLarge
from .fields import Field
from .geometry import DomainSpec, SpectralGrid, cut_flux, make_grid
from .spectral_ops import ModeIndex

__all__ = [
    "BASIS_FORMAT_VERSION",
    "EigenPair",
    "PreconditionWarning",
    "SpectralCoeffs",
    "StokesBasis",
    "build_basis",
    "capacity",
    "expand",
    "load_basis",
    "project_coeffs",
    "reconstruct",
    "save_basis",
]

LOG = logging.getLogger(__name__)

BASIS_FORMAT_VERSION = 1
ZERO_TOL = 1e-10
EIG_TOL = 1e-8
MULTIPLIER_TOL = 1e-7
_LD = np.longdouble
_CLD = np.clongdouble


class PreconditionWarning(UserWarning):
    """Input field violates a soft precondition (divergence or boundary trace)."""


@dataclass(frozen=True, eq=False)
class EigenPair:
    """One Stokes eigenpair supported on a single Fourier mode.

    ``coeffs`` holds the radial profiles ``(ncomp, Nr)`` of the
    L2-normalised eigenfield; ``residuals`` carries ``eig_res``, ``div_res``,
    ``bc_res`` and, in 3D, ``multiplier``.
    """

    lam: float
    mode: ModeIndex
    coeffs: np.ndarray = dc_field(repr=False)
    residuals: dict = dc_field(default_factory=dict)

    @property
    def eigenvalue(self):
        return self.lam

    def field(self, grid) -> Field:
        return Field.single_mode(grid, self.mode.m, self.mode.k, self.coeffs)


@dataclass(frozen=True)
class SpectralCoeffs:
    """Kernel coefficients ``alpha`` and eigen coefficients ``beta`` of a field."""

    alpha: np.ndarray
    beta: np.ndarray
    recon_error: float = 0.0

    def copy_with(self, alpha=None, beta=None):
        return SpectralCoeffs(
            self.alpha if alpha is None else alpha,
            self.beta if beta is None else beta,
            self.recon_error,
        )


@dataclass(eq=False)
class StokesBasis:
    """Validated eigenpairs plus flux-normalised kernel fields.

    Attributes
    ----------
    kernel : list of Field
        ``J`` harmonic fields with ``cut_flux(kernel[j], i) == delta_ij``.
    eigs : list of EigenPair
        Sorted by ``(lambda, |m|, m, k)``; all eigenvalues positive.
    lambdas, modes, profiles : ndarray
        Packed copies of ``eigs`` used by the vectorised transforms.
    gram : dict
        Orthonormality certificate.
    """

    grid: SpectralGrid
    kernel: list
    eigs: list
    gram: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.lambdas = np.array([e.lam for e in self.eigs], dtype=float)
        self.modes = np.array([(e.mode.m, e.mode.k) for e in self.eigs], dtype=int).reshape(-1, 2)
        ncomp = self.grid.ncomp
        self.profiles = (
            np.array([e.coeffs for e in self.eigs], dtype=complex)
            if self.eigs
            else np.zeros((0, ncomp, self.grid.Nr), dtype=complex)
        )
        self._mi = self.modes[:, 0] + self.grid.Mmax
        self._ki = self.modes[:, 1] + self.grid.Kmax
        # index of the complex-conjugate partner of each eigenfield
        pos = {}
        for i, (m, k) in enumerate(self.modes):
            pos.setdefault((m, k), []).append(i)
        self.partner = np.arange(len(self.eigs))
        for (m, k), idx in pos.items():
            other = pos.get((-m, -k), [])
            for j, i in enumerate(idx):
                if j < len(other):
                    self.partner[i] = other[j]
        kc = np.array([K.coeffs for K in self.kernel])
        w = self.grid.w_quad
        self.kernel_gram = np.einsum("icmkr,jcmkr,r->ij", np.conj(kc), kc, w).real

    @property
    def J(self):
        return len(self.kernel)

    @property
    def n_modes(self):
        return len(self.eigs)

    @property
    def lambda1(self):
        return float(self.lambdas[0])

    @property
    def lambda_max(self):
        return float(self.lambdas[-1])

    def eigenfield(self, i) -> Field:
        return self.eigs[i].field(self.grid)

    def transform(self, field):
        return expand(self, field)

    def inverse_transform(self, coeffs):
        return reconstruct(self, coeffs)

    def zero_coeffs(self):
        return SpectralCoeffs(np.zeros(self.J, dtype=complex), np.zeros(self.n_modes, dtype=complex))


def capacity(grid: SpectralGrid) -> int:
    """Largest ``n_modes`` accepted for ``grid``."""
    return grid.Nr * grid.nm * grid.nk // 4


def block_count(grid: SpectralGrid) -> int:
    """Candidates kept per Fourier block.

    Each velocity family (one in 2D, toroidal and poloidal in 3D) resolves
    roughly ``Nr / 4 - 2`` radial indices to an eigen residual below 1e-8.
    """
    families = 1 if grid.dim == 2 else 2
    return families * max(1, grid.Nr // 4 - 2)


# operator assembly ----------------------------------------------------------


_LD_CACHE = {}


def _ld_parts(grid):
    """Extended-precision copies of ``(r, D1, D2)``, cached per grid."""
    key = id(grid)
    hit = _LD_CACHE.get(key)
    if hit is None or hit[0] is not grid:
        hit = (grid, grid.r_nodes.astype(_LD), grid.D1.astype(_LD), grid.D2.astype(_LD))
        _LD_CACHE[key] = hit
    return hit[1:]


class _Ops:
    """Radial building blocks for one mode in a given floating type."""

    def __init__(self, grid, m, k, dtype=float):
        self.N = grid.Nr
        self.m = m
        self.kappa = grid.kappa(k)
        if dtype is _LD:
            self.r, self.D1, self.D2 = _ld_parts(grid)
        else:
            self.r, self.D1, self.D2 = grid.r_nodes, grid.D1, grid.D2
        self.dtype = dtype
        self.inv_r = np.diag(1 / self.r)
        self.inv_r2 = np.diag(1 / self.r**2)
        self.I = np.eye(self.N, dtype=dtype)
        self.L = self.D2 + self.D1 / self.r[:, None] - np.diag((m * m) / self.r**2 + self.kappa**2)


def _swirl_operator(ops):
    """m = 0 swirl problem: -(L - 1/r^2) v with omega = v' + v/r = 0 rows."""
    N = ops.N
    A = -(ops.L - ops.inv_r2)
    bc = ops.D1 + ops.inv_r
    A = A.astype(np.result_type(A, 1j))
    A[0], A[N - 1] = bc[0], bc[N - 1]
    mask = np.ones(N)
    mask[[0, N - 1]] = 0
    return A, mask


def _saddle_operator(ops, pin_pressure):
    """Staggered primitive-variable pencil ``(A, diag(mask))`` for a 3D mode."""
    N, m, kap = ops.N, ops.m, ops.kappa
    dt = np.result_type(ops.dtype, 1j)
    Z = np.zeros((N, N), dtype=ops.dtype)
    I, iR, iR2, L, D1 = ops.I, ops.inv_r, ops.inv_r2, ops.L, ops.D1
    c = 2j * m * iR2
    Vl = np.block([[L - iR2, -c, Z], [c, L - iR2, Z], [Z, Z, L]])
    n = N - 2
    E = np.zeros((N, n), dtype=ops.dtype)
    E[1:-1] = np.eye(n, dtype=ops.dtype)
    Dp = _interior_diff(ops)
    G = np.vstack([E @ Dp, 1j * m * (iR @ E), 1j * kap * E])
    Dv = np.hstack([D1 + iR, 1j * m * iR, 1j * kap * I])
    M = 3 * N + n
    A = np.zeros((M, M), dtype=dt)
    A[: 3 * N, : 3 * N] = -Vl
    A[: 3 * N, 3 * N :] = G
    A[3 * N :, : 3 * N] = Dv[1:-1]
    mask = np.zeros(M)
    mask[: 3 * N] = 1
    bcs = (
        np.hstack([I, Z, Z]),
        np.hstack([-1j * m * iR, D1 + iR, Z]),
        np.hstack([1j * kap * I, Z, -D1]),
    )
    for blk, row in enumerate(bcs):
        for j in (0, N - 1):
            A[blk * N + j] = 0
            A[blk * N + j, : 3 * N] = row[j]
            mask[blk * N + j] = 0
    if pin_pressure:
        keep = np.r_[0 : 3 * N, 3 * N + 1 : M]
        A = A[np.ix_(keep, keep)]
        mask = mask[keep]
    return A, mask


def _interior_diff(ops):
    """Differentiation matrix for the interpolant through the interior nodes."""
    x = ops.r[1:-1]
    X = x[:, None] - x[None, :]
    np.fill_diagonal(X, 1)
    # barycentric weights, rescaled to keep the products in range
    logw = -np.sum(np.log(np.abs(X)), axis=1)
    sgn = np.prod(np.sign(X), axis=1)
    wb = sgn * np.exp(logw - logw.max())
    D = (wb[None, :] / wb[:, None]) / X
    np.fill_diagonal(D, 0)
    D -= np.diag(D.sum(axis=1))
    return D


def _refine(A64, Ald, mask, lam, x, iters=3):
    """Newton polish of a simple eigenpair of the pencil ``(A, diag(mask))``.

    Residuals are formed with ``Ald`` in extended precision; corrections are
    solved in double precision.
    """
    n = len(x)
    c = np.conj(x) / np.vdot(x, x)
    bx_mask = mask.astype(complex)
    best = (np.inf, lam, x)
    for _ in range(iters):
        r = (Ald @ x.astype(_CLD) - _CLD(lam) * (mask * x).astype(_CLD)).astype(complex)
        rn = np.linalg.norm(r)
        if rn < best[0]:
            best = (rn, lam, x)
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = A64 - lam * np.diag(bx_mask)
        J[:n, n] = -bx_mask * x
        J[n, :n] = c
        rhs = np.concatenate([-r, [1.0 - c @ x]])
        try:
            d = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            break
        x = x + d[:n]
        lam = lam + d[n]
    r = (Ald @ x.astype(_CLD) - _CLD(lam) * (mask * x).astype(_CLD)).astype(complex)
    if np.linalg.norm(r) < best[0]:
        best = (np.linalg.norm(r), lam, x)
    return best[1], best[2]


def _reduced_eig(A, bnodes):
    """Eigenpairs of a pencil whose constraint rows sit on the unknowns ``bnodes``."""
    n = A.shape[0]
    inner = np.setdiff1d(np.arange(n), bnodes)
    Abb = A[np.ix_(bnodes, bnodes)]
    Abi = A[np.ix_(bnodes, inner)]
    X = -np.linalg.solve(Abb, Abi)
    M = A[np.ix_(inner, inner)] + A[np.ix_(inner, bnodes)] @ X
    w, V = np.linalg.eig(M)
    full = np.zeros((n, len(w)), dtype=complex)
    full[inner] = V
    full[bnodes] = X @ V
    return w, full


# per-block solvers ------------------------------------------------------------


@dataclass
class _Candidate:
    lam: float
    mode: ModeIndex
    profile: np.ndarray  # (ncomp, Nr)
    multiplier: float | None = None


def _phase_fix(v):
    i = np.argmax(np.abs(v))
    ph = v[i] / abs(v[i])
    return v / ph


def _nullspace_saddle_eig(A, mask, nu):
    """Eigenpairs of the saddle pencil after eliminating its constraints.

    Velocities are restricted to the null space of the boundary and
    continuity rows; the pressure is removed by projecting the momentum rows
    onto the orthogonal complement of the range of the gradient block. This
    is the same finite spectrum as the full pencil without the infinite
    eigenvalues. The pressure is recovered by least squares.
    """
    cons = np.where(mask == 0)[0]
    dyn = np.where(mask != 0)[0]
    Cu = A[np.ix_(cons, np.arange(nu))]
    Q = np.linalg.qr(Cu.conj().T, mode="complete")[0][:, Cu.shape[0] :]
    G = A[np.ix_(dyn, np.arange(nu, A.shape[0]))]
    W = np.linalg.qr(G, mode="complete")[0][:, G.shape[1] :]
    Ad = A[np.ix_(dyn, np.arange(nu))] @ Q
    Ah = W.conj().T @ Ad
    Bh = W.conj().T @ Q[dyn]
    w, Y = np.linalg.eig(np.linalg.solve(Bh, Ah))
    U = Q @ Y
    P = np.linalg.lstsq(G, w[None, :] * U[dyn] - Ad @ Y, rcond=None)[0]
    return w, np.vstack([U, P])


class _BlockProblem:
    """Discrete eigenproblem of one Fourier block as a pencil ``(A, diag(mask))``."""

    def __init__(self, grid, m, k):
        self.grid, self.m, self.k = grid, m, k
        self.pin = grid.dim == 3 and m == 0 and k == 0
        ops = _Ops(grid, m, k)
        N = grid.Nr
        if grid.dim == 2 and m == 0:
            self.A, self.mask = _swirl_operator(ops)
            self.nzero = 1
        elif grid.dim == 2:
            self.A = (-ops.L[1:-1, 1:-1]).astype(complex)
            self.mask = np.ones(N - 2)
            self.nzero = 0
        else:
            self.A, self.mask = _saddle_operator(ops, self.pin)
            self.nzero = 2 if self.pin else 0

    def extended(self):
        ops = _Ops(self.grid, self.m, self.k, _LD)
        if self.grid.dim == 2 and self.m == 0:
            return _swirl_operator(ops)[0]
        if self.grid.dim == 2:
            return (-ops.L[1:-1, 1:-1]).astype(_CLD)
        return _saddle_operator(ops, self.pin)[0]

    def raw(self, count):
        """Lowest ``count`` (plus zero modes) eigenpairs, unrefined."""
        g, N = self.grid, self.grid.Nr
        try:
            if g.dim == 2 and self.m == 0:
                w, V = _reduced_eig(self.A, np.array([0, N - 1]))
            elif g.dim == 2:
                w, V = np.linalg.eig(self.A.real)
                V = V.astype(complex)
            else:
                try:
                    w, V = _nullspace_saddle_eig(self.A, self.mask, 3 * N)
                except np.linalg.LinAlgError:
                    w, V = sla.eig(self.A, np.diag(self.mask), check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolveFailure(f"eigensolve failed for mode (m={self.m}, k={self.k}): {exc}") from exc
        scale = np.abs(self.A).max()
        ok = np.isfinite(w) & (np.abs(w) < 1e3 * scale)
        ok &= np.abs(w.imag) <= 1e-6 * (1 + np.abs(w.real))
        w, V = w[ok].real, V[:, ok]
        order = np.argsort(w)[: count + self.nzero]
        return w[order], V[:, order]

    def finalize(self, w, V):
        """Refine, convert to velocity profiles and orthonormalise."""
        g, N, m = self.grid, self.grid.Nr, self.m
        Ald = self.extended()
        r_ld, D1_ld, _ = _ld_parts(g)
        cands = []
        for i in range(len(w)):
            lam, x = complex(w[i]), V[:, i].astype(complex)
            near = [j for j in (i - 1, i + 1) if 0 <= j < len(w)]
            degenerate = any(abs(w[j] - w[i]) < 1e-8 * (1 + abs(w[i])) for j in near)
            if not degenerate:
                lam, x = _refine(self.A, Ald, self.mask, lam, x)
            lam = float(lam.real)
            mult = None
            if g.dim == 2 and m == 0:
                prof = np.stack([np.zeros(N, dtype=_CLD), x.astype(_CLD)])
            elif g.dim == 2:
                psi = np.zeros(N, dtype=_CLD)
                psi[1:-1] = x
                prof = np.stack([1j * m * psi / r_ld, -(D1_ld @ psi)])
            else:
                u, p = x[: 3 * N], x[3 * N :]
                w_int = g.w_quad[2:-1] if self.pin else g.w_quad[1:-1]
                un = math.sqrt(np.sum(np.tile(g.w_quad, 3) * np.abs(u) ** 2))
                mult = math.sqrt(np.sum(w_int * np.abs(p) ** 2)) / un
                prof = u.reshape(3, N).astype(_CLD)
            cands.append(_Candidate(lam, ModeIndex(m, self.k), prof, mult))
        if self.nzero:
            cands.sort(key=lambda c: (abs(c.lam) > ZERO_TOL, c.lam))
        return _orthonormalise(g, cands)


def _orthonormalise(grid, cands):
    """Modified Gram-Schmidt inside one block in the discrete L2 product.

    Zero modes are expected first so that the eigenfields end up orthogonal
    to the kernel.
    """
    w = np.tile(grid.w_quad, grid.ncomp).astype(_LD)
    basis = []
    for c in cands:
        v = c.profile.reshape(-1).astype(_CLD)
        for q in basis:
            v = v - np.sum(w * np.conj(q) * v) * q
        nrm = np.sqrt(np.sum(w * np.abs(v) ** 2))
        v = _phase_fix(v / nrm)
        basis.append(v)
        c.profile = v.reshape(grid.ncomp, grid.Nr)
    return cands


def _residuals(grid, lam, mode, prof):
    """Relative eigen/divergence/boundary residuals of one single-mode field."""
    r, D1, D2 = _ld_parts(grid)
    m, kap = mode.m, grid.kappa(mode.k)
    u = [prof[c].astype(_CLD) for c in range(grid.ncomp)]
    w = grid.w_quad.astype(_LD)
    d1 = [D1 @ c for c in u]
    lap = [D2 @ c + d / r - (m * m / r**2 + kap**2) * c for c, d in zip(u, d1)]
    lr = lap[0] - u[0] / r**2 - 2j * m * u[1] / r**2
    lt = lap[1] - u[1] / r**2 + 2j * m * u[0] / r**2
    res = [-lr - lam * u[0], -lt - lam * u[1]]
    div = d1[0] + u[0] / r + 1j * m * u[1] / r
    curl_z = d1[1] + u[1] / r - 1j * m * u[0] / r
    curl_t = None
    if grid.dim == 3:
        res.append(-lap[2] - lam * u[2])
        div = div + 1j * kap * u[2]
        curl_t = 1j * kap * u[0] - d1[2]
    unorm = np.sqrt(sum(np.sum(w * np.abs(c) ** 2) for c in u))
    eig_res = np.sqrt(sum(np.sum(w * np.abs(c) ** 2) for c in res)) / unorm
    div_res = np.sqrt(np.sum(w * np.abs(div) ** 2)) / unorm
    urms = unorm / math.sqrt(grid.domain.measure)
    traces = [np.abs(u[0][[0, -1]]), np.abs(curl_z[[0, -1]]) / math.sqrt(1 + abs(lam))]
    if curl_t is not None:
        traces.append(np.abs(curl_t[[0, -1]]) / math.sqrt(1 + abs(lam)))
    bc_res = max(float(np.max(t)) for t in traces) / urms
    return {"eig_res": float(eig_res), "div_res": float(div_res), "bc_res": float(bc_res)}


def _half_blocks(grid):
    """Representatives of the mode pairs ``(m, k) ~ (-m, -k)``."""
    out = [(0, 0)]
    out += [(0, k) for k in range(1, grid.Kmax + 1)]
    out += [(m, k) for m in range(1, grid.Mmax + 1) for k in range(-grid.Kmax, grid.Kmax + 1)]
    return out


def _solve_half_block(grid, m, k, count):
    """Both passes for one block (all ``count`` candidates refined)."""
    prob = _BlockProblem(grid, m, k)
    return prob.finalize(*prob.raw(count))


def _pmap(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def build_basis(
    grid: SpectralGrid,
    n_modes: int,
    *,
    workers: int | None = None,
    eig_tol: float = EIG_TOL,
    multiplier_tol: float = MULTIPLIER_TOL,
) -> StokesBasis:
    """Compute the ``n_modes`` lowest positive Stokes eigenpairs on ``grid``.

    Every Fourier block is solved once without refinement to locate the
    selection threshold; only blocks owning retained pairs are then
    refined, orthonormalised and validated. Each block keeps at most
    ``block_count(grid)`` candidates, the radially resolved part of its
    spectrum.

    Raises
    ------
    CapacityExceeded
        ``n_modes`` above ``capacity(grid)``, or a block whose resolvable
        eigenvalues are exhausted below the selection threshold.
    EigensolveFailure
        Dense solver failure or a kernel of the wrong dimension.
    ResidualTooLarge
        A retained pair violates a residual tolerance.
    """
    n_modes = int(n_modes)
    cap = capacity(grid)
    if n_modes < 1:
        raise CapacityExceeded("n_modes must be positive")
    if n_modes > cap:
        raise CapacityExceeded(
            f"n_modes={n_modes} exceeds the capacity Nr*(2Mmax+1)*(2Kmax+1)/4 = {cap} of this grid"
        )
    count = block_count(grid)
    blocks = _half_blocks(grid)
    workers = workers or os.cpu_count() or 1

    def first_pass(mk):
        prob = _BlockProblem(grid, *mk)
        return prob.raw(count)

    raw = dict(zip(blocks, _pmap(first_pass, blocks, workers)))

    J = grid.domain.J
    pool = []
    for (m, k), (w, _) in raw.items():
        if np.any(w < -ZERO_TOL):
            raise EigensolveFailure(f"negative eigenvalue {w.min():.3e} in mode (m={m}, k={k})")
        nz = int(np.sum(np.abs(w) <= ZERO_TOL))
        if (m, k) == (0, 0):
            if nz != J:
                raise EigensolveFailure(f"found {nz} zero modes, expected kernel dimension {J}")
        elif nz:
            raise EigensolveFailure(f"unexpected zero eigenvalue in mode (m={m}, k={k})")
        mult = 1 if (m, k) == (0, 0) else 2
        pool.extend([lam] * mult for lam in w[np.abs(w) > ZERO_TOL])
    flat = np.sort(np.concatenate([np.asarray(x) for x in pool])) if pool else np.zeros(0)
    if len(flat) < n_modes:
        raise CapacityExceeded(f"only {len(flat)} resolvable eigenpairs on this grid")
    threshold = flat[n_modes - 1]
    for (m, k), (w, _) in raw.items():
        pos = w[np.abs(w) > ZERO_TOL]
        if len(pos) >= count and pos.max() < threshold:
            raise CapacityExceeded(
                f"mode (m={m}, k={k}) ran out of resolvable eigenvalues below {threshold:.4g}; increase Nr"
            )

    cut = threshold * (1 + 1e-6) + 1e-9
    todo = [mk for mk in blocks if mk == (0, 0) or np.any(raw[mk][0] <= cut)]

    def second_pass(mk):
        w, V = raw[mk]
        sel = w <= cut
        return _BlockProblem(grid, *mk).finalize(w[sel], V[:, sel])

    finals = dict(zip(todo, _pmap(second_pass, todo, workers)))
    kernel_cands, cands = [], []
    for (m, k), lst in finals.items():
        for c in lst:
            if abs(c.lam) <= ZERO_TOL:
                kernel_cands.append(c)
                continue
            cands.append(c)
            if (m, k) != (0, 0):
                cands.append(_Candidate(c.lam, ModeIndex(-m, -k), np.conj(c.profile), c.multiplier))
    cands.sort(key=lambda c: (c.lam, abs(c.mode.m), c.mode.m, c.mode.k))
    chosen = cands[:n_modes]

    eigs, worst = [], []
    for c in chosen:
        res = _residuals(grid, c.lam, c.mode, c.profile)
        if c.multiplier is not None:
            res["multiplier"] = float(c.multiplier)
        bad = [key for key in ("eig_res", "div_res", "bc_res") if res[key] > eig_tol]
        if res.get("multiplier", 0.0) > multiplier_tol:
            bad.append("multiplier")
        if bad:
            worst.append((c.lam, c.mode, bad, res))
        eigs.append(EigenPair(c.lam, c.mode, c.profile.astype(complex), res))
    if worst:
        lam, mode, bad, res = worst[0]
        raise ResidualTooLarge(
            f"{len(worst)} retained eigenpairs violate tolerances; first: lambda={lam:.6g} "
            f"mode=({mode.m},{mode.k}) failing {bad} residuals={res}"
        )

    kernel = _normalise_kernel(grid, kernel_cands)
    basis = StokesBasis(grid, kernel, eigs)
    basis.gram.update(_certify(basis))
    LOG.info(
        "basis: %d modes, lambda1=%.6g, lambda_max=%.6g, kernel dim %d",
        basis.n_modes,
        basis.lambda1,
        basis.lambda_max,
        J,
    )
    return basis


def _normalise_kernel(grid, cands):
    fields = [Field.single_mode(grid, 0, 0, c.profile.astype(complex)) for c in cands]
    J = len(fields)
    F = np.array([[cut_flux(f, i + 1) for f in fields] for i in range(J)])
    Finv = np.linalg.inv(F)
    out = []
    for j in range(J):
        coeffs = sum(Finv[l, j] * fields[l].coeffs for l in range(J))
        K = Field(grid, coeffs)
        # harmonic fields are real; drop rounding-level imaginary parts
        out.append(Field(grid, K.coeffs.real.astype(complex)))
    return out


def _certify(basis):
    g = basis.grid
    w = g.w_quad
    P = basis.profiles
    worst_ortho = 0.0
    for key in {tuple(mk) for mk in basis.modes}:
        idx = np.where((basis.modes[:, 0] == key[0]) & (basis.modes[:, 1] == key[1]))[0]
        G = np.einsum("icr,jcr,r->ij", np.conj(P[idx]), P[idx], w)
        worst_ortho = max(worst_ortho, float(np.abs(G - np.eye(len(idx))).max()))
    kern = 0.0
    idx0 = np.where((basis.modes[:, 0] == 0) & (basis.modes[:, 1] == 0))[0]
    for K in basis.kernel:
        kp = K.coeffs[:, g.Mmax, g.Kmax, :]
        kn = K.norm()
        for i in idx0:
            kern = max(kern, abs(np.sum(np.conj(P[i]) * kp * w)) / kn)
    flux = np.array([[cut_flux(K, i + 1) for K in basis.kernel] for i in range(basis.J)])
    return {
        "max_orthonormality_defect": worst_ortho,
        "max_kernel_overlap": float(kern),
        "kernel_flux_defect": float(np.abs(flux - np.eye(basis.J)).max()),
    }


# transforms -------------------------------------------------------------------


def _field_residuals(field):
    from .spectral_ops import vector_divergence

    n = field.norm()
    if n == 0:
        return 0.0, 0.0
    div = vector_divergence(field).norm() / n
    urms = n / math.sqrt(field.grid.domain.measure)
    trace = np.abs(field.coeffs[0][..., [0, -1]]).max() / urms
    return div, trace


def project_coeffs(basis: StokesBasis, field: Field) -> SpectralCoeffs:
    """L2-orthogonal projection coefficients, without span or precondition checks."""
    g = basis.grid
    U = field.coeffs[:, basis._mi, basis._ki, :]
    beta = np.einsum("ncr,cnr,r->n", np.conj(basis.profiles), U, g.w_quad)
    rhs = np.array([K.inner(field) for K in basis.kernel])
    return SpectralCoeffs(np.linalg.solve(basis.kernel_gram, rhs), beta)


def expand(basis: StokesBasis, field: Field, check: bool = True, tol: float = 0.1) -> SpectralCoeffs:
    """Coefficients of ``field`` in the kernel + eigenfield basis.

    ``alpha`` is the L2-orthogonal projection onto the kernel, expressed in
    the flux-normalised kernel fields (so ``alpha_j`` equals the cut flux of
    the field through ``Sigma_j`` when the field is in the span). ``beta_k``
    is ``<z_k, field>``.
    """
    if field.kind != "vector":
        raise NotInSpan("only vector fields can be expanded")
    if check:
        div, trace = _field_residuals(field)
        if div > 1e-6 or trace > 1e-6:
            warnings.warn(
                f"field is not in discrete L2_sigma_tau (div residual {div:.2e}, trace residual {trace:.2e})",
                PreconditionWarning,
                stacklevel=2,
            )
    coeffs = project_coeffs(basis, field)
    alpha, beta = coeffs.alpha, coeffs.beta
    fn = field.norm()
    err = 0.0
    if fn > 0:
        err = (field - reconstruct(basis, coeffs)).norm() / fn
    if err > tol:
        raise NotInSpan(f"reconstruction error {err:.3g} exceeds {tol}; field too rough for the truncated basis")
    return SpectralCoeffs(alpha, beta, err)


def reconstruct(basis: StokesBasis, coeffs: SpectralCoeffs) -> Field:
    g = basis.grid
    out = np.zeros(g.modal_shape(), dtype=complex)
    for j, K in enumerate(basis.kernel):
        out += coeffs.alpha[j] * K.coeffs
    contrib = coeffs.beta[:, None, None] * basis.profiles
    for c in range(g.ncomp):
        np.add.at(out[c], (basis._mi, basis._ki), contrib[:, c, :])
    return Field(g, out)


# persistence --------------------------------------------------------------------


def save_basis(basis: StokesBasis, path) -> None:
    """Write ``basis`` to an ``.npz`` bundle with a JSON header.

    Eigenvalues are also recorded in the header as decimal strings so that
    the bundle can be inspected without numpy.
    """
    g = basis.grid
    meta = {
        "format": "stokeslab-basis",
        "version": BASIS_FORMAT_VERSION,
        "grid": g.key(),
        "eigenvalues": [repr(float(l)) for l in basis.lambdas],
        "modes": basis.modes.tolist(),
        "residuals": [e.residuals for e in basis.eigs],
        "gram": basis.gram,
    }
    kern = np.array([K.coeffs for K in basis.kernel])
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            lambdas=basis.lambdas,
            profiles=basis.profiles,
            kernel=kern,
        )


def load_basis(path) -> StokesBasis:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "stokeslab-basis":
            raise ValueError(f"{path} is not a stokeslab basis bundle")
        if meta.get("version") != BASIS_FORMAT_VERSION:
            raise ValueError(f"unsupported basis format version {meta.get('version')}")
        lambdas = data["lambdas"]
        profiles = data["profiles"]
        kern = data["kernel"]
    gk = meta["grid"]
    d = gk["domain"]
    domain = DomainSpec(d["kind"], d["a"], d["b"], d.get("Lz"))
    oversample = gk["Ntheta"] // (2 * gk["Mmax"] + 1)
    grid = make_grid(domain, gk["Nr"], gk["Mmax"], gk["Kmax"], oversample=oversample)
    eigs = [
        EigenPair(float(l), ModeIndex(int(m), int(k)), p, dict(res))
        for l, (m, k), p, res in zip(lambdas, meta["modes"], profiles, meta["residuals"])
    ]
    kernel = [Field(grid, c) for c in kern]
    return StokesBasis(grid, kernel, eigs, dict(meta.get("gram", {})))
