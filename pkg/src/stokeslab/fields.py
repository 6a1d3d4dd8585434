"""Modal representation of scalar and vector fields on a :class:`SpectralGrid`."""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch
from .geometry import SpectralGrid

__all__ = ["Field"]


class Field:
    """A scalar or vector field stored as Fourier-Chebyshev coefficients.

    ``coeffs[c, im, ik, i]`` is the amplitude of ``exp(i m theta + i kappa z)``
    in component ``c`` at radial node ``r_i``. Vector components are
    cylindrical, ``(u_r, u_theta)`` in 2D and ``(u_r, u_theta, u_z)`` in 3D.
    Arithmetic returns new fields; instances are never mutated in place by
    library code.
    """

    __slots__ = ("coeffs", "grid", "kind")

    def __init__(self, grid: SpectralGrid, coeffs, kind="vector"):
        coeffs = np.asarray(coeffs, dtype=complex)
        if kind not in ("vector", "scalar"):
            raise ValueError(f"unknown field kind {kind!r}")
        ncomp = grid.ncomp if kind == "vector" else 1
        if coeffs.shape != grid.modal_shape(ncomp):
            raise DimensionMismatch(
                f"coefficient shape {coeffs.shape} does not match grid {grid.modal_shape(ncomp)}"
            )
        self.grid = grid
        self.coeffs = coeffs
        self.kind = kind

    # construction -----------------------------------------------------

    @classmethod
    def zeros(cls, grid, kind="vector"):
        ncomp = grid.ncomp if kind == "vector" else 1
        return cls(grid, np.zeros(grid.modal_shape(ncomp), dtype=complex), kind)

    @classmethod
    def from_nodal(cls, grid, values, kind="vector"):
        """Project nodal samples ``(ncomp, Ntheta, Nz, Nr)`` onto the retained modes."""
        values = np.asarray(values)
        ncomp = grid.ncomp if kind == "vector" else 1
        if values.ndim == 3:
            values = values[None]
        if values.shape != (ncomp, grid.Ntheta, grid.Nz, grid.Nr):
            raise DimensionMismatch(f"nodal shape {values.shape} does not match grid")
        spec = np.fft.fft2(values, axes=(1, 2)) / (grid.Ntheta * grid.Nz)
        mi = grid.m_values % grid.Ntheta
        ki = grid.k_values % grid.Nz
        coeffs = spec[:, mi][:, :, ki]
        return cls(grid, coeffs, kind)

    @classmethod
    def from_function(cls, grid, func, kind="vector"):
        """Sample ``func(r, theta, z)`` (cylindrical components) on the nodal mesh."""
        R, TH, Z = grid.mesh()
        out = func(R, TH, Z)
        if kind == "scalar":
            vals = np.broadcast_to(np.asarray(out, dtype=complex), R.shape)[None]
        else:
            if len(out) != grid.ncomp:
                raise DimensionMismatch(f"expected {grid.ncomp} components, got {len(out)}")
            vals = np.stack([np.broadcast_to(np.asarray(o, dtype=complex), R.shape) for o in out])
        return cls.from_nodal(grid, vals, kind)

    @classmethod
    def from_cartesian(cls, grid, func):
        """Sample a vector field given by Cartesian components ``func(x, y, z)``."""

        def cyl(R, TH, Z):
            X, Y = R * np.cos(TH), R * np.sin(TH)
            comps = func(X, Y, Z)
            ux, uy = comps[0], comps[1]
            ur = np.cos(TH) * ux + np.sin(TH) * uy
            ut = -np.sin(TH) * ux + np.cos(TH) * uy
            if grid.dim == 2:
                return ur, ut
            return ur, ut, comps[2]

        return cls.from_function(grid, cyl)

    @classmethod
    def single_mode(cls, grid, m, k, profiles, kind="vector"):
        """Field supported on one Fourier mode with radial ``profiles`` ``(ncomp, Nr)``."""
        f = cls.zeros(grid, kind)
        f.coeffs[:, grid.m_index(m), grid.k_index(k), :] = profiles
        return f

    # evaluation -------------------------------------------------------

    @property
    def ncomp(self):
        return self.coeffs.shape[0]

    def nodal(self):
        """Complex nodal values, shape ``(ncomp, Ntheta, Nz, Nr)``."""
        g = self.grid
        spec = np.zeros((self.ncomp, g.Ntheta, g.Nz, g.Nr), dtype=complex)
        mi = g.m_values % g.Ntheta
        ki = g.k_values % g.Nz
        spec[np.ix_(range(self.ncomp), mi, ki)] = self.coeffs
        return np.fft.ifft2(spec, axes=(1, 2)) * (g.Ntheta * g.Nz)

    def magnitude(self):
        """Pointwise Euclidean magnitude on the nodal mesh, shape ``(Ntheta, Nz, Nr)``."""
        return np.sqrt(np.sum(np.abs(self.nodal()) ** 2, axis=0))

    def inner(self, other: Field) -> complex:
        """Discrete L2 inner product ``int conj(self) . other``."""
        self._check(other)
        w = self.grid.w_quad
        return complex(np.sum(np.conj(self.coeffs) * other.coeffs * w))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def real(self) -> Field:
        """Real part of the field (Hermitian symmetrisation of the modes)."""
        c = self.coeffs
        flipped = np.conj(c[:, ::-1, ::-1, :])
        return Field(self.grid, 0.5 * (c + flipped), self.kind)

    def copy(self):
        return Field(self.grid, self.coeffs.copy(), self.kind)

    # arithmetic -------------------------------------------------------

    def _check(self, other):
        if not isinstance(other, Field):
            raise TypeError("expected a Field")
        if other.grid is not self.grid and other.grid.key() != self.grid.key():
            raise DimensionMismatch("fields live on different grids")
        if other.kind != self.kind:
            raise DimensionMismatch("cannot combine scalar and vector fields")

    def __add__(self, other):
        self._check(other)
        return Field(self.grid, self.coeffs + other.coeffs, self.kind)

    def __sub__(self, other):
        self._check(other)
        return Field(self.grid, self.coeffs - other.coeffs, self.kind)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Field(self.grid, self.coeffs * scalar, self.kind)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Field(self.grid, self.coeffs / scalar, self.kind)

    def __neg__(self):
        return Field(self.grid, -self.coeffs, self.kind)

    def __repr__(self):
        return f"Field(kind={self.kind!r}, shape={self.coeffs.shape})"
