import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BarycentricInterpolator

from stokeslab.errors import DimensionMismatch, IndexOutOfRange, InvalidGeometry
from stokeslab.fields import Field
from stokeslab.geometry import (
    DomainKind,
    DomainSpec,
    chebyshev_diff,
    clenshaw_curtis,
    cut_flux,
    make_grid,
)


def test_domain_validation():
    with pytest.raises(InvalidGeometry):
        DomainSpec.annulus(2.0, 1.0)
    with pytest.raises(InvalidGeometry):
        DomainSpec.annulus(0.0, 1.0)
    with pytest.raises(InvalidGeometry):
        DomainSpec.cylinder(1.0, 2.0, -1.0)
    with pytest.raises(InvalidGeometry):
        DomainSpec("torus", 1.0, 2.0)
    d = DomainSpec.cylinder(1.0, 2.0, 3.0)
    assert d.kind is DomainKind.ANNULAR_CYLINDER_3D
    assert (d.dim, d.J) == (3, 2)
    assert DomainSpec.annulus().J == 1


def test_measure_and_weights(grid2d):
    assert grid2d.domain.measure == pytest.approx(3 * math.pi, rel=1e-15)
    assert grid2d.w_quad.sum() == pytest.approx(3 * math.pi, rel=1e-13)
    g3 = make_grid(DomainSpec.cylinder(1, 2, 3.0), 16, 2, 1)
    assert g3.w_quad.sum() == pytest.approx(9 * math.pi, rel=1e-13)


@pytest.mark.parametrize("N", [9, 16, 33])
def test_clenshaw_curtis_exact_on_polynomials(N):
    x, _ = chebyshev_diff(N, 1)
    w = clenshaw_curtis(N)
    for k in range(N):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(w @ x**k - exact) < 1e-13


def test_differentiation_matrices(grid2d):
    r = grid2d.r_nodes
    assert np.max(np.abs(grid2d.D1 @ r - 1)) < 1e-11
    assert np.max(np.abs(grid2d.D1 @ np.ones_like(r))) < 1e-11
    f = np.sin(3 * r) * np.exp(r)
    d1 = 3 * np.cos(3 * r) * np.exp(r) + f
    d2 = -9 * f + 6 * np.cos(3 * r) * np.exp(r) + f
    assert np.max(np.abs(grid2d.D1 @ f - d1)) < 1e-9
    assert np.max(np.abs(grid2d.D2 @ f - d2)) < 1e-7


def test_quadrature_converges_spectrally():
    exact = math.e**2  # int_1^2 r e^r dr = [(r - 1) e^r]_1^2
    errs = []
    for N in (8, 16, 24):
        g = make_grid(DomainSpec.annulus(1, 2), N, 1)
        errs.append(abs(g.cc_weights @ (g.r_nodes * np.exp(g.r_nodes)) - exact))
    assert errs[1] <= errs[0] / 10 or errs[1] < 1e-14
    assert errs[2] < 1e-13


def test_grid_validation(annulus):
    with pytest.raises(InvalidGeometry):
        make_grid(annulus, 4, 2)
    with pytest.raises(InvalidGeometry):
        make_grid(annulus, 16, 0)
    with pytest.raises(DimensionMismatch):
        make_grid(annulus, 16, 2, 1)
    g = make_grid(annulus, 16, 3)
    with pytest.raises(IndexOutOfRange):
        g.m_index(4)
    assert g.m_index(-3) == 0 and g.m_index(3) == 6


def test_grid_shapes():
    g = make_grid(DomainSpec.cylinder(1, 2, 3.0), 12, 3, 2)
    assert g.modal_shape() == (3, 7, 5, 12)
    R, _, _ = g.mesh()
    assert R.shape == (g.Ntheta, g.Nz, 12)
    assert g.Ntheta == 14 and g.Nz == 10
    assert np.allclose(g.kappa_values, 2 * math.pi * np.arange(-2, 3) / 3.0)


def test_cut_flux_of_harmonic_field(grid2d):
    f = Field.from_function(grid2d, lambda R, T, Z: (0 * R, 1 / R))
    assert cut_flux(f, 1) == pytest.approx(math.log(2), abs=1e-13)
    assert cut_flux(Field.zeros(grid2d), 1) == 0
    with pytest.raises(IndexOutOfRange):
        cut_flux(f, 2)


def test_cut_flux_3d():
    L = 3.0
    g = make_grid(DomainSpec.cylinder(1, 2, L), 16, 2, 1)
    ft = Field.from_function(g, lambda R, T, Z: (0 * R, 1 / R, 0 * R))
    fz = Field.from_function(g, lambda R, T, Z: (0 * R, 0 * R, 1 + 0 * R))
    assert cut_flux(ft, 1) == pytest.approx(L * math.log(2), abs=1e-12)
    assert abs(cut_flux(ft, 2)) < 1e-13
    assert cut_flux(fz, 2) == pytest.approx(3 * math.pi, abs=1e-12)
    assert abs(cut_flux(fz, 1)) < 1e-13


def _brute_force_flux(field, fine=401):
    """Trapezoid-in-theta nodal value at theta = 0, interpolated in r and integrated by Simpson."""
    g = field.grid
    ut = field.nodal()[1, 0, 0, :].real
    r = np.linspace(g.domain.a, g.domain.b, fine)
    vals = BarycentricInterpolator(g.r_nodes, ut)(r)
    h = r[1] - r[0]
    return h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-1:2].sum())


def test_eigenfields_have_zero_flux(basis2d):
    for i in range(0, 40, 3):
        z = basis2d.eigenfield(i)
        assert abs(cut_flux(z, 1)) < 1e-10
        assert abs(_brute_force_flux(z.real())) < 1e-8


def test_kernel_flux_matches_brute_force(basis2d):
    assert _brute_force_flux(basis2d.kernel[0]) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("position", [0.0, 0.7, 2.1])
def test_cut_flux_independent_of_position(basis2d, position):
    u = basis2d.kernel[0] * 0.3 + basis2d.eigenfield(0) + basis2d.eigenfield(5) * 2.0
    assert abs(cut_flux(u, 1, position) - cut_flux(u, 1, 0.0)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_cut_flux_linear(seed, a, b):
    g = make_grid(DomainSpec.annulus(1, 2), 12, 3)
    rng = np.random.default_rng(seed)
    shape = g.modal_shape()
    f1 = Field(g, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    f2 = Field(g, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    lhs = cut_flux(f1 * a + f2 * b, 1)
    rhs = a * cut_flux(f1, 1) + b * cut_flux(f2, 1)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
