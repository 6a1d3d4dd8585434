"""Spectral laboratory for the Stokes operator with Navier-type slip conditions.

Model domains are the annulus and the axially periodic annular cylinder,
discretised with Chebyshev collocation in ``r`` and Fourier modes in
``theta`` and ``z``.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("stokeslab")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

from .basis import (
    EigenPair,
    SpectralCoeffs,
    StokesBasis,
    build_basis,
    capacity,
    expand,
    load_basis,
    project_coeffs,
    reconstruct,
    save_basis,
)
from .errors import *
from .fields import Field
from .geometry import DomainKind, DomainSpec, SpectralGrid, cut_flux, make_grid
from .helmholtz import project, split_flux, weak_neumann
from .semigroup import (
    EvolutionResult,
    evolve_homogeneous,
    evolve_inhomogeneous,
    resolvent_apply,
)

__all__ = [
    "DomainKind",
    "DomainSpec",
    "EigenPair",
    "EvolutionResult",
    "Field",
    "SpectralCoeffs",
    "SpectralGrid",
    "StokesBasis",
    "__version__",
    "build_basis",
    "capacity",
    "cut_flux",
    "evolve_homogeneous",
    "evolve_inhomogeneous",
    "expand",
    "load_basis",
    "make_grid",
    "project",
    "project_coeffs",
    "reconstruct",
    "resolvent_apply",
    "save_basis",
    "split_flux",
    "weak_neumann",
]
