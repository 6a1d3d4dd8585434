import csv

import mpmath
import numpy as np
import pytest

from stokeslab.basis import SpectralCoeffs, expand, reconstruct
from stokeslab.errors import IllPosed, NonUniformSamples, SingularResolvent
from stokeslab.fields import Field
from stokeslab.sampling import random_coeffs
from stokeslab.semigroup import (
    NORM_CSV_HEADER,
    evolve_homogeneous,
    evolve_inhomogeneous,
    phi1,
    phi2,
    resolvent_apply,
)


def rel(x, y):
    return float(np.linalg.norm(np.ravel(x - y)) / np.linalg.norm(np.ravel(y)))


def crank_nicolson(lam, alpha0, beta0, f_alpha, f_beta, dt, nsteps):
    """Trapezoidal rule on beta' = -lam beta + f_beta(t), alpha' = f_alpha(t)."""
    a, b = np.array(alpha0, dtype=complex), np.array(beta0, dtype=complex)
    amp = (1 - lam * dt / 2) / (1 + lam * dt / 2)
    for n in range(nsteps):
        t0, t1 = n * dt, (n + 1) * dt
        b = amp * b + dt / 2 * (f_beta(t0) + f_beta(t1)) / (1 + lam * dt / 2)
        a = a + dt / 2 * (f_alpha(t0) + f_alpha(t1))
    return a, b


def test_homogeneous_matches_crank_nicolson(basis):
    c0 = random_coeffs(basis, 4, kernel=True)
    zero_a = lambda t: np.zeros(basis.J)
    zero_b = lambda t: np.zeros(basis.n_modes)
    a, b = crank_nicolson(basis.lambdas, c0.alpha, c0.beta, zero_a, zero_b, 1e-4, 1000)
    ev = evolve_homogeneous(basis, c0, [0.0, 0.1])
    ref = reconstruct(basis, SpectralCoeffs(a, b))
    assert rel(ev.field(1).coeffs, ref.coeffs) <= 1e-6
    assert np.allclose(ev.alpha[1], c0.alpha)


def test_inhomogeneous_matches_crank_nicolson(basis2d):
    b = basis2d
    n = b.n_modes
    w = np.zeros(n, dtype=complex)
    w[[0, 2, 5]] = [1.0, 0.5j, -0.3]

    def f_beta(t):
        return w * np.sin(5 * t) + np.cos(t) * (np.arange(n) == 7)

    def f_alpha(t):
        return np.array([t], dtype=complex)

    dt, steps = 1e-4, 1000
    ft = np.linspace(0, 0.1, steps + 1)
    samples = [SpectralCoeffs(f_alpha(t), f_beta(t)) for t in ft]
    ev = evolve_inhomogeneous(b, samples, [0.05, 0.1], forcing_times=ft)
    a_ref, b_ref = crank_nicolson(b.lambdas, [0], np.zeros(n), f_alpha, f_beta, dt, steps)
    ref = reconstruct(b, SpectralCoeffs(a_ref, b_ref))
    assert rel(ev.field(1).coeffs, ref.coeffs) <= 1e-6


def test_constant_eigen_forcing_closed_form(basis):
    z1 = basis.eigenfield(0)
    t = np.linspace(0, 1, 11)
    ev = evolve_inhomogeneous(basis, [z1] * len(t), t)
    lam1 = basis.lambda1
    expect = (1 - np.exp(-lam1 * t)) / lam1
    assert np.allclose(ev.beta[:, 0], expect, rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(ev.beta[:, 1:])) < 1e-12
    assert np.allclose(ev.dbeta[:, 0], np.exp(-lam1 * t), rtol=1e-10)


def test_zero_forcing_gives_zero(basis2d):
    t = [0.0, 0.5, 1.0]
    ev = evolve_inhomogeneous(basis2d, [Field.zeros(basis2d.grid)] * 3, t)
    assert np.all(ev.beta == 0) and np.all(ev.alpha == 0)


def test_forcing_sample_errors(basis2d):
    z = basis2d.eigenfield(0)
    with pytest.raises(NonUniformSamples):
        evolve_inhomogeneous(basis2d, [z, z], [0.0, 0.5], forcing_times=[0.0, 0.4])
    with pytest.raises(NonUniformSamples):
        evolve_inhomogeneous(basis2d, [z, z, z], [0.0, 0.5])
    with pytest.raises(NonUniformSamples):
        evolve_inhomogeneous(basis2d, [z, z], [0.1, 0.5])
    with pytest.raises(ValueError):
        evolve_homogeneous(basis2d, z, [0.5, 0.1])


def test_callable_forcing_with_projection(basis2d):
    z = basis2d.eigenfield(3)
    ev = evolve_inhomogeneous(basis2d, lambda t: z * (1 + t), [0.0, 0.2, 0.4], project_forcing=True)
    lam = basis2d.lambdas[3]
    t = 0.4
    expect = (1 - np.exp(-lam * t)) / lam + (t / lam - (1 - np.exp(-lam * t)) / lam**2)
    assert ev.beta[2, 3] == pytest.approx(expect, rel=1e-10)


def test_semigroup_property(basis):
    c0 = random_coeffs(basis, 9, kernel=True)
    s, t = 0.03, 0.07
    direct = evolve_homogeneous(basis, c0, [s + t]).coeffs(0)
    mid = evolve_homogeneous(basis, c0, [s]).coeffs(0)
    two = evolve_homogeneous(basis, mid, [t]).coeffs(0)
    assert np.allclose(direct.beta, two.beta, rtol=1e-13, atol=1e-15)
    assert np.allclose(direct.alpha, two.alpha)


def test_resolvent_on_eigenfield(basis):
    for k in (0, 4, 11):
        z = basis.eigenfield(k)
        u = resolvent_apply(basis, 1.0, z)
        assert (u - z * (1 / (1 + basis.lambdas[k]))).norm() < 1e-12
        ud = resolvent_apply(basis, 1.0, z, route="direct")
        assert (ud - u).norm() < 1e-9


def test_resolvent_large_imaginary(basis2d):
    lam = 1e3j
    for seed in range(3):
        f = reconstruct(basis2d, random_coeffs(basis2d, seed, kernel=True))
        u = resolvent_apply(basis2d, lam, f)
        assert abs(lam) * u.norm() <= f.norm() * (1 + 1e-12)
        ud = resolvent_apply(basis2d, lam, f, route="direct")
        assert rel(ud.coeffs, u.coeffs) < 1e-8


def test_resolvent_at_zero(basis):
    f = reconstruct(basis, random_coeffs(basis, 2, kernel=False))
    us = resolvent_apply(basis, 0.0, f)
    ud = resolvent_apply(basis, 0.0, f, route="direct")
    assert rel(ud.coeffs, us.coeffs) < 1e-8
    g = f + basis.kernel[0]
    with pytest.raises(SingularResolvent):
        resolvent_apply(basis, 0.0, g)
    with pytest.raises(SingularResolvent):
        resolvent_apply(basis, 0.0, g, route="direct")


def test_resolvent_ill_posed(basis2d):
    z = basis2d.eigenfield(0)
    with pytest.raises(IllPosed):
        resolvent_apply(basis2d, -basis2d.lambda1, z)
    with pytest.raises(IllPosed):
        resolvent_apply(basis2d, -1.0, z, route="direct")
    with pytest.raises(ValueError):
        resolvent_apply(basis2d, 1.0, z, route="other")
    c = expand(basis2d, z)
    assert isinstance(resolvent_apply(basis2d, 2.0, c), SpectralCoeffs)


@pytest.mark.parametrize("x", [0.0, 1e-9, 1e-5, 9.9e-5, 1.01e-4, 9.9e-4, 1.01e-3, 0.3, 5.0, 60.0])
def test_phi_functions_against_mpmath(x):
    mpmath.mp.dps = 40
    X = mpmath.mpf(x)
    if x == 0:
        p1, p2 = mpmath.mpf(1), mpmath.mpf(1) / 2
    else:
        p1 = (1 - mpmath.exp(-X)) / X
        p2 = (X - 1 + mpmath.exp(-X)) / X**2
    assert float(phi1(x)) == pytest.approx(float(p1), rel=1e-13)
    assert float(phi2(x)) == pytest.approx(float(p2), rel=1e-12)


def test_norm_csv(basis2d, tmp_path):
    c0 = random_coeffs(basis2d, 1, kernel=True)
    ev = evolve_homogeneous(basis2d, c0, [0.0, 0.1])
    p = tmp_path / "n.csv"
    ev.write_csv(p, names=("u", "curl"), ps=(2.0, 4.0))
    raw = p.read_bytes()
    assert raw.count(b"\r\n") == 1 + 2 * 2 * 2
    rows = list(csv.reader(p.open(newline="")))
    assert tuple(rows[0]) == NORM_CSV_HEADER
    body = [(r[1], float(r[2]), float(r[0])) for r in rows[1:]]
    assert body == sorted(body)
    u2 = [float(r[3]) for r in rows[1:] if r[1] == "u" and r[2] == "2.0"]
    assert u2[1] < u2[0]
    with pytest.raises(ValueError):
        ev.norm_series("bogus")
