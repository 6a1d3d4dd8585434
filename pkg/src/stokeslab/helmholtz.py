"""Weak Neumann problem, Helmholtz projection and flux splitting."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import PreconditionWarning, StokesBasis, _field_residuals
from .errors import SolveFailure
from .fields import Field
from .geometry import cut_flux
from .spectral_ops import gradient, vector_divergence

__all__ = ["NeumannSolution", "project", "projection_residuals", "split_flux", "weak_neumann"]


@dataclass(frozen=True)
class NeumannSolution:
    """Potential ``pi`` plus diagnostics of the discrete Neumann solve.

    ``residual`` is the relative residual of ``div(grad pi - f)`` on interior
    nodes together with the normal trace of ``grad pi - f``;
    ``stability`` is ``||grad pi|| / ||f||``.
    """

    potential: Field
    residual: float
    stability: float


def _neumann_lu(grid, m2, kap2):
    r = grid.r_nodes
    A = grid.D2 + grid.D1 / r[:, None] - np.diag(m2 / r**2 + kap2)
    A[0] = grid.D1[0]
    A[-1] = grid.D1[-1]
    return A


def weak_neumann(f: Field, full_output: bool = False):
    """Solve ``div(grad pi - f) = 0``, ``(grad pi - f).n = 0`` with mean-zero ``pi``.

    Each Fourier mode is a dense collocation problem; the constant nullspace
    of the ``(0, 0)`` mode is removed by bordering with the mean-zero
    constraint.

    Returns
    -------
    Field or NeumannSolution
        The scalar potential, or the full solution record when
        ``full_output`` is true.
    """
    g = f.grid
    N = g.Nr
    div = vector_divergence(f).coeffs[0]
    rhs = div.copy()
    rhs[..., 0] = f.coeffs[0][..., 0]
    rhs[..., -1] = f.coeffs[0][..., -1]
    out = np.zeros_like(rhs)
    k2 = g.kappa_values**2
    w_r = g.cc_weights * g.r_nodes
    groups = {}
    for im, m in enumerate(g.m_values):
        for ik, k in enumerate(g.k_values):
            groups.setdefault((abs(m), abs(k)), []).append((im, ik))
    for (am, ak), idx in groups.items():
        A = _neumann_lu(g, float(am * am), float(k2[g.k_index(ak)]))
        cols = np.array([rhs[im, ik] for im, ik in idx]).T
        if am == 0 and ak == 0:
            B = np.zeros((N + 1, N + 1))
            B[:N, :N] = A
            B[:N, N] = 1.0
            B[N, :N] = w_r
            b = np.vstack([cols, np.zeros((1, cols.shape[1]))])
            sol = np.linalg.solve(B, b)[:N]
        else:
            try:
                lu = sla.lu_factor(A, check_finite=False)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SolveFailure(f"Neumann system singular for mode (|m|={am}, |k|={ak})") from exc
            if np.min(np.abs(np.diag(lu[0]))) < 1e-13 * np.abs(A).max():
                raise SolveFailure(f"Neumann system singular for mode (|m|={am}, |k|={ak})")
            sol = sla.lu_solve(lu, cols, check_finite=False)
        for j, (im, ik) in enumerate(idx):
            out[im, ik] = sol[:, j]
    pi = Field(g, out[None], "scalar")
    if not full_output:
        return pi
    gp = gradient(pi)
    diff = gp - f
    fn = f.norm()
    res_int = vector_divergence(diff).coeffs[0][..., 1:-1]
    w_int = g.w_quad[1:-1]
    num = math.sqrt(float(np.sum(np.abs(res_int) ** 2 * w_int)))
    trace = float(np.abs(diff.coeffs[0][..., [0, -1]]).max())
    scale = fn / math.sqrt(g.domain.measure) if fn > 0 else 1.0
    residual = max(num / fn if fn > 0 else num, trace / scale)
    return NeumannSolution(pi, residual, gp.norm() / fn if fn > 0 else 0.0)


def project(f: Field) -> Field:
    """Helmholtz projection ``P f = f - grad pi`` onto divergence-free tangent fields."""
    return f - gradient(weak_neumann(f))


def projection_residuals(u: Field):
    """``(div_res, trace_res)`` of a projected field, both relative."""
    return _field_residuals(u)


def split_flux(basis: StokesBasis, u0: Field, check: bool = True):
    """Split ``u0`` into its kernel part ``w0`` and zero-flux remainder.

    ``w0 = sum_j cut_flux(u0, j) * kernel[j]``; the remainder has vanishing
    flux through every cut.
    """
    if check:
        div, trace = _field_residuals(u0)
        if div > 1e-6 or trace > 1e-6:
            warnings.warn(
                f"u0 is not in discrete L2_sigma_tau (div residual {div:.2e}, trace residual {trace:.2e})",
                PreconditionWarning,
                stacklevel=2,
            )
    w0 = Field.zeros(u0.grid)
    for j, K in enumerate(basis.kernel):
        w0 = w0 + cut_flux(u0, j + 1) * K
    return w0, u0 - w0
