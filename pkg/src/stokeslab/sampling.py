"""Seeded random fields in the span of a basis (probes, initial data, forcings)."""
from __future__ import annotations

import numpy as np

from .basis import SpectralCoeffs, StokesBasis

__all__ = ["as_rng", "random_coeffs", "realify"]


def as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def realify(basis: StokesBasis, c: SpectralCoeffs) -> SpectralCoeffs:
    """Coefficients of the real part of the field described by ``c``."""
    beta = 0.5 * (c.beta + np.conj(c.beta[basis.partner]))
    return SpectralCoeffs(np.real(c.alpha).astype(complex), beta)


def random_coeffs(
    basis: StokesBasis,
    seed=None,
    decay: float = 1.0,
    kernel: bool = False,
    n_active: int | None = None,
    normalise: bool = True,
) -> SpectralCoeffs:
    """Random real field with ``|beta_k|`` scaled like ``lambda_k**-decay``.

    Parameters
    ----------
    decay : float
        Spectral decay exponent of the coefficients.
    kernel : bool
        Include a random kernel component.
    n_active : int, optional
        Only the lowest ``n_active`` eigenfields are populated, which keeps a
        probe identical across bases of different size.
    """
    rng = as_rng(seed)
    n = basis.n_modes
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    beta = z * basis.lambdas ** (-decay)
    if n_active is not None:
        beta[n_active:] = 0
    alpha = rng.standard_normal(basis.J).astype(complex) if kernel else np.zeros(basis.J, dtype=complex)
    c = realify(basis, SpectralCoeffs(alpha, beta))
    if normalise:
        nrm = np.sqrt(np.sum(np.abs(c.beta) ** 2) + np.real(np.conj(c.alpha) @ basis.kernel_gram @ c.alpha))
        if nrm > 0:
            c = SpectralCoeffs(c.alpha / nrm, c.beta / nrm)
    return c
