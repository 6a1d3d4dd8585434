import math
import warnings

import numpy as np
import pytest
from conftest import bessel_cross, bisect_roots

from stokeslab.basis import (
    PreconditionWarning,
    block_count,
    build_basis,
    capacity,
    expand,
    load_basis,
    save_basis,
)
from stokeslab.errors import CapacityExceeded, NotInSpan
from stokeslab.fields import Field
from stokeslab.geometry import cut_flux, make_grid
from stokeslab.spectral_ops import perp_gradient, vector_curl, vector_divergence


def _block(b, m, k=0):
    return np.sort(b.lambdas[(b.modes[:, 0] == m) & (b.modes[:, 1] == k)])


def _contains(lams, ref, tol):
    return max(float(np.min(np.abs(lams - x)) / x) for x in ref) <= tol


def test_2d_swirl_block_matches_order_zero_cross_product(basis2d):
    ref = bisect_roots(bessel_cross(0, 1.0, 2.0), 4) ** 2
    lams = _block(basis2d, 0)[:4]
    assert np.allclose(lams, ref, rtol=1e-9)


@pytest.mark.parametrize("m", [1, -2, 5])
def test_2d_blocks_match_dirichlet_cross_product(basis2d, m):
    lams = _block(basis2d, m)
    n = min(3, len(lams))
    ref = bisect_roots(bessel_cross(abs(m), 1.0, 2.0), n) ** 2
    assert np.allclose(lams[:n], ref, rtol=1e-9)


@pytest.mark.parametrize("k", [1, -2])
def test_3d_swirl_family_in_axial_blocks(basis3d, k):
    kappa = 2 * math.pi * k / basis3d.grid.domain.length_z
    ref = bisect_roots(bessel_cross(0, 1.0, 2.0), 2) ** 2 + kappa**2
    lams = _block(basis3d, 0, k)
    ref = ref[ref <= basis3d.lambda_max]
    assert len(ref) and _contains(lams, ref, 1e-8)


def test_3d_axial_neumann_family(basis3d):
    ref = bisect_roots(bessel_cross(1, 1.0, 2.0), 2) ** 2
    swirl = bisect_roots(bessel_cross(0, 1.0, 2.0), 2) ** 2
    lams = _block(basis3d, 0, 0)
    ref, swirl = ref[ref <= basis3d.lambda_max], swirl[swirl <= basis3d.lambda_max]
    assert len(ref) and len(swirl)
    assert _contains(lams, ref, 1e-8) and _contains(lams, swirl, 1e-8)


def test_sorted_positive_no_extra_zero_modes(basis):
    assert np.all(np.diff(basis.lambdas) >= 0)
    assert basis.lambda1 > 1e-3
    assert basis.J == basis.grid.dim - 1


def test_orthonormality(basis):
    n = 40
    F = [basis.eigenfield(i) for i in range(n)]
    G = np.array([[F[i].inner(F[j]) for j in range(n)] for i in range(n)])
    assert np.max(np.abs(G - np.eye(n))) < 1e-10
    for K in basis.kernel:
        assert max(abs(K.inner(f)) for f in F) < 1e-10


def test_dirichlet_energy_equals_eigenvalue(basis):
    for i in (0, 3, 17, 60):
        z = basis.eigenfield(i)
        w = vector_curl(z)
        assert w.norm() ** 2 == pytest.approx(basis.lambdas[i], rel=1e-8)
        assert vector_divergence(z).norm() < 1e-8


def test_kernel_flux_is_identity(basis):
    J = basis.J
    F = np.array([[cut_flux(K, i + 1) for K in basis.kernel] for i in range(J)])
    assert np.max(np.abs(F - np.eye(J))) < 1e-10
    for K in basis.kernel:
        assert vector_curl(K).norm() < 1e-9


def test_weyl_slope(annulus):
    # N(lambda) ~ |Omega| lambda / (4 pi) + O(sqrt(lambda)) for solenoidal fields in 2D;
    # Mmax=40 resolves every angular index below lambda ~ 400
    b = build_basis(make_grid(annulus, 64, 40), 300)
    lam = b.lambdas[50:250]
    A = np.stack([lam, np.sqrt(lam), np.ones_like(lam)], axis=1)
    slope = np.linalg.lstsq(A, np.arange(51, 251), rcond=None)[0][0]
    assert slope == pytest.approx(3 * math.pi / (4 * math.pi), rel=0.1)


def test_expand_single_eigenfield(basis2d):
    z3 = basis2d.eigenfield(3)
    c = expand(basis2d, z3)
    e = np.zeros(basis2d.n_modes)
    e[3] = 1
    assert np.max(np.abs(c.beta - e)) < 1e-10 and np.max(np.abs(c.alpha)) < 1e-10


def test_expand_kernel(basis):
    for j, K in enumerate(basis.kernel):
        c = expand(basis, K)
        assert np.allclose(c.alpha, np.eye(basis.J)[j], atol=1e-10)
        assert np.max(np.abs(c.beta)) < 1e-10


def test_round_trip_in_span(basis):
    rng = np.random.default_rng(3)
    beta = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    alpha = rng.standard_normal(basis.J)
    u = basis.kernel[0] * alpha[0]
    for j in range(1, basis.J):
        u = u + basis.kernel[j] * alpha[j]
    for i in range(30):
        u = u + basis.eigenfield(i) * beta[i]
    c = expand(basis, u)
    assert c.recon_error <= 1e-6
    assert np.allclose(c.alpha, alpha, atol=1e-10)
    assert np.allclose(c.beta[:30], beta, atol=1e-10) and np.max(np.abs(c.beta[30:])) < 1e-10


def test_smooth_field_error_decreases_with_modes(annulus):
    g = make_grid(annulus, 48, 8)
    psi = Field.from_function(g, lambda R, T, Z: (R - 1) ** 3 * (2 - R) ** 3 * np.cos(2 * T), kind="scalar")
    u = perp_gradient(psi) + Field.zeros(g)
    errs = [expand(build_basis(g, n), u, tol=1.0).recon_error for n in (40, 120)]
    assert errs[1] < errs[0] / 4


def test_rough_field_not_in_span(basis2d):
    g = basis2d.grid
    rng = np.random.default_rng(0)
    u = Field(g, rng.standard_normal(g.modal_shape()))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PreconditionWarning)
        with pytest.raises(NotInSpan):
            expand(basis2d, u)
    with pytest.raises(NotInSpan):
        expand(basis2d, Field.zeros(g, "scalar"))


def test_precondition_warning(basis2d):
    g = basis2d.grid
    u = Field.from_function(g, lambda R, T, Z: (R - 1, 0 * R))
    with pytest.warns(PreconditionWarning):
        expand(basis2d, u, tol=10.0)


def test_capacity_errors(annulus):
    g = make_grid(annulus, 16, 2)
    assert capacity(g) == 16 * 5 // 4
    assert block_count(g) == 2
    with pytest.raises(CapacityExceeded, match="capacity"):
        build_basis(g, capacity(g) + 1)
    with pytest.raises(CapacityExceeded):
        build_basis(g, 0)


def test_save_load_round_trip(basis3d, tmp_path):
    p = tmp_path / "b.npz"
    save_basis(basis3d, p)
    b = load_basis(p)
    assert np.array_equal(b.lambdas, basis3d.lambdas)
    assert np.array_equal(b.modes, basis3d.modes)
    assert np.array_equal(b.profiles, basis3d.profiles)
    assert b.grid.key() == basis3d.grid.key()
    assert b.J == 2 and np.array_equal(b.kernel[1].coeffs, basis3d.kernel[1].coeffs)
    bad = tmp_path / "bad.npz"
    np.savez(bad, meta=np.array('{"format": "other"}'))
    with pytest.raises(ValueError):
        load_basis(bad)


def test_build_is_deterministic(annulus):
    g = make_grid(annulus, 24, 4)
    b1, b2 = build_basis(g, 20), build_basis(g, 20, workers=1)
    assert np.array_equal(b1.lambdas, b2.lambdas)
