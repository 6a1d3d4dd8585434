"""Per-Fourier-mode differential operators in cylindrical coordinates.

For a mode ``exp(i m theta + i kappa z)`` every operator reduces to a dense
matrix acting on radial Chebyshev nodal values. Boundary conditions are
imposed by overwriting the rows that belong to the two boundary nodes (tau
method).

Navier-type slip conditions on ``r = a, b`` read

* 2D: ``u_r = 0`` and ``omega = 0``;
* 3D: ``u_r = 0``, ``(curl u)_z = 0`` and ``(curl u)_theta = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .fields import Field
from .geometry import SpectralGrid

__all__ = [
    "ModeIndex",
    "ModeOperators",
    "gradient",
    "mode_divergence",
    "mode_gradient",
    "mode_vector_laplacian",
    "navier_bc_rows",
    "perp_gradient",
    "replace_rows",
    "scalar_laplacian",
    "scalar_mode_laplacian",
    "vector_curl",
    "vector_divergence",
    "vector_laplacian",
]


@dataclass(frozen=True)
class ModeIndex:
    m: int
    k: int = 0

    def check(self, grid: SpectralGrid) -> ModeIndex:
        if abs(self.m) > grid.Mmax or abs(self.k) > grid.Kmax:
            raise IndexOutOfRange(f"mode {self} outside grid bounds (Mmax={grid.Mmax}, Kmax={grid.Kmax})")
        return self

    def sort_key(self):
        return (abs(self.m), self.m, self.k)


@dataclass(frozen=True, eq=False)
class ModeOperators:
    """Dense radial operators for one Fourier mode.

    ``Lm`` is the positive scalar mode Laplacian
    ``-(d^2/dr^2 + (1/r) d/dr - m^2/r^2 - kappa^2)``; ``vector_laplacian`` is
    the (signed) vector Laplacian acting on stacked components; ``bc_rows``
    lists the rows of ``vector_laplacian`` that boundary conditions replace.
    """

    mode: ModeIndex
    kappa: float
    D1: np.ndarray
    D2: np.ndarray
    Lm: np.ndarray
    vector_laplacian: np.ndarray
    bc_rows: np.ndarray
    bc_matrix: np.ndarray


def _radial_parts(grid, m, kappa):
    r = grid.r_nodes
    inv_r = np.diag(1.0 / r)
    inv_r2 = np.diag(1.0 / r**2)
    L = grid.D2 + inv_r @ grid.D1 - (m * m) * inv_r2 - kappa**2 * np.eye(grid.Nr)
    return L, inv_r, inv_r2


def scalar_mode_laplacian(grid: SpectralGrid, mode: ModeIndex) -> ModeOperators:
    mode.check(grid)
    kappa = grid.kappa(mode.k)
    L, _, _ = _radial_parts(grid, mode.m, kappa)
    rows, bc = navier_bc_rows(grid, mode.m, mode.k)
    return ModeOperators(
        mode=mode,
        kappa=kappa,
        D1=grid.D1,
        D2=grid.D2,
        Lm=-L,
        vector_laplacian=mode_vector_laplacian(grid, mode.m, mode.k),
        bc_rows=rows,
        bc_matrix=bc,
    )


def mode_vector_laplacian(grid, m, k=0):
    """Vector Laplacian for mode ``(m, k)`` on stacked ``(u_r, u_theta[, u_z])``."""
    kappa = grid.kappa(k)
    N = grid.Nr
    L, _, inv_r2 = _radial_parts(grid, m, kappa)
    Z = np.zeros((N, N))
    c = 2j * m * inv_r2
    rr = L - inv_r2
    if grid.dim == 2:
        return np.block([[rr, -c], [c, rr]])
    return np.block([[rr, -c, Z], [c, rr, Z], [Z, Z, L]])


def mode_divergence(grid, m, k=0):
    """Divergence as an ``Nr x (ncomp*Nr)`` matrix."""
    kappa = grid.kappa(k)
    _, inv_r, _ = _radial_parts(grid, m, kappa)
    blocks = [grid.D1 + inv_r, 1j * m * inv_r]
    if grid.dim == 3:
        blocks.append(1j * kappa * np.eye(grid.Nr))
    return np.hstack(blocks).astype(complex)


def mode_gradient(grid, m, k=0):
    """Gradient of a scalar mode as an ``(ncomp*Nr) x Nr`` matrix."""
    kappa = grid.kappa(k)
    _, inv_r, _ = _radial_parts(grid, m, kappa)
    blocks = [grid.D1, 1j * m * inv_r]
    if grid.dim == 3:
        blocks.append(1j * kappa * np.eye(grid.Nr))
    return np.vstack(blocks).astype(complex)


def navier_bc_rows(grid, m, k=0):
    """Row indices and replacement rows for the Navier slip conditions.

    Returns ``(rows, B)`` where ``B[i]`` replaces row ``rows[i]`` of a
    stacked-component operator. Conditions are ordered per component block:
    ``u_r = 0``, ``(curl u)_z = 0`` and, in 3D, ``(curl u)_theta = 0``.
    """
    N = grid.Nr
    kappa = grid.kappa(k)
    _, inv_r, _ = _radial_parts(grid, m, kappa)
    I = np.eye(N)
    Z = np.zeros((N, N))
    if grid.dim == 2:
        cond = [np.hstack([I, Z]), np.hstack([-1j * m * inv_r, grid.D1 + inv_r])]
    else:
        cond = [
            np.hstack([I, Z, Z]),
            np.hstack([-1j * m * inv_r, grid.D1 + inv_r, Z]),
            np.hstack([1j * kappa * I, Z, -grid.D1]),
        ]
    rows, out = [], []
    for c, block in enumerate(cond):
        for j in (0, N - 1):
            rows.append(c * N + j)
            out.append(block[j])
    return np.array(rows), np.array(out, dtype=complex)


def replace_rows(A, rows, new_rows):
    """Copy of ``A`` with ``A[rows] = new_rows``; all other rows untouched."""
    out = np.array(A, dtype=np.result_type(A, new_rows), copy=True)
    out[rows] = new_rows
    return out


# field-level operators ------------------------------------------------------


def _mk(grid):
    m = grid.m_values.astype(float)[:, None, None]
    kap = grid.kappa_values.astype(float)[None, :, None]
    r = grid.r_nodes[None, None, :]
    return m, kap, r


def _dr(grid, c):
    return c @ grid.D1.T


def _require(field, kind):
    if field.kind != kind:
        raise DimensionMismatch(f"expected a {kind} field, got {field.kind}")


def vector_divergence(field: Field) -> Field:
    _require(field, "vector")
    g = field.grid
    m, kap, r = _mk(g)
    c = field.coeffs
    div = _dr(g, c[0]) + c[0] / r + 1j * m * c[1] / r
    if g.dim == 3:
        div = div + 1j * kap * c[2]
    return Field(g, div[None], "scalar")


def vector_curl(field: Field) -> Field:
    """Curl; a scalar (vorticity) field in 2D, a vector field in 3D."""
    _require(field, "vector")
    g = field.grid
    m, kap, r = _mk(g)
    c = field.coeffs
    cz = _dr(g, c[1]) + c[1] / r - 1j * m * c[0] / r
    if g.dim == 2:
        return Field(g, cz[None], "scalar")
    cr = 1j * m * c[2] / r - 1j * kap * c[1]
    ct = 1j * kap * c[0] - _dr(g, c[2])
    return Field(g, np.stack([cr, ct, cz]), "vector")


def gradient(field: Field) -> Field:
    _require(field, "scalar")
    g = field.grid
    m, kap, r = _mk(g)
    p = field.coeffs[0]
    comps = [_dr(g, p), 1j * m * p / r]
    if g.dim == 3:
        comps.append(1j * kap * p)
    return Field(g, np.stack(comps), "vector")


def perp_gradient(field: Field) -> Field:
    """2D rotated gradient ``(u_r, u_theta) = ((1/r) d_theta psi, -d_r psi)``."""
    _require(field, "scalar")
    g = field.grid
    if g.dim != 2:
        raise DimensionMismatch("perp_gradient is defined on 2D grids only")
    m, _, r = _mk(g)
    psi = field.coeffs[0]
    return Field(g, np.stack([1j * m * psi / r, -_dr(g, psi)]), "vector")


def scalar_laplacian(field: Field) -> Field:
    _require(field, "scalar")
    g = field.grid
    m, kap, r = _mk(g)
    p = field.coeffs[0]
    lap = p @ g.D2.T + _dr(g, p) / r - (m**2 / r**2 + kap**2) * p
    return Field(g, lap[None], "scalar")


def vector_laplacian(field: Field) -> Field:
    _require(field, "vector")
    g = field.grid
    m, kap, r = _mk(g)
    c = field.coeffs

    def lap(u):
        return u @ g.D2.T + _dr(g, u) / r - (m**2 / r**2 + kap**2) * u

    lr = lap(c[0]) - c[0] / r**2 - 2j * m * c[1] / r**2
    lt = lap(c[1]) - c[1] / r**2 + 2j * m * c[0] / r**2
    comps = [lr, lt]
    if g.dim == 3:
        comps.append(lap(c[2]))
    return Field(g, np.stack(comps), "vector")
