"""Model domains, spectral grids and cut-surface fluxes.

Two separable multiply-connected domains are supported:

``Annulus2D``
    ``a < r < b`` in the plane. One cut, ``Sigma_1 = {theta = 0}``.
``AnnularCylinder3D``
    ``a < r < b`` times a periodic axial interval of length ``Lz``. Two cuts,
    ``Sigma_1 = {theta = 0}`` (extruded in z) and ``Sigma_2 = {z = 0}``.

Fields on these domains are stored as Fourier modes in ``theta`` (and ``z``)
with Chebyshev-Gauss-Lobatto collocation in ``r``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
from scipy.linalg import toeplitz

from .errors import DimensionMismatch, IndexOutOfRange, InvalidGeometry

__all__ = [
    "DomainKind",
    "DomainSpec",
    "SpectralGrid",
    "chebyshev_diff",
    "chebyshev_points",
    "clenshaw_curtis",
    "cut_flux",
    "make_grid",
]


class DomainKind(str, enum.Enum):
    ANNULUS_2D = "Annulus2D"
    ANNULAR_CYLINDER_3D = "AnnularCylinder3D"


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of a model domain.

    Parameters
    ----------
    kind : DomainKind or str
        ``"Annulus2D"`` or ``"AnnularCylinder3D"``.
    a, b : float
        Inner and outer radius, ``0 < a < b``.
    Lz : float, optional
        Axial period; required (and only allowed) for the 3D kind.
    """

    kind: DomainKind
    a: float
    b: float
    Lz: float | None = None

    def __post_init__(self):
        try:
            kind = DomainKind(self.kind)
        except ValueError as exc:
            raise InvalidGeometry(f"unknown domain kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind)
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise InvalidGeometry("radii must be finite")
        if a <= 0:
            raise InvalidGeometry(f"inner radius a={a} must be positive")
        if b <= a:
            raise InvalidGeometry(f"outer radius b={b} must exceed inner radius a={a}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if kind is DomainKind.ANNULAR_CYLINDER_3D:
            if self.Lz is None or not float(self.Lz) > 0 or not math.isfinite(float(self.Lz)):
                raise InvalidGeometry(f"axial period Lz={self.Lz} must be positive")
            object.__setattr__(self, "Lz", float(self.Lz))
        elif self.Lz is not None:
            raise InvalidGeometry("Lz is only meaningful for AnnularCylinder3D")

    @classmethod
    def annulus(cls, a=1.0, b=2.0):
        return cls(DomainKind.ANNULUS_2D, a, b)

    @classmethod
    def cylinder(cls, a=1.0, b=2.0, Lz=2 * math.pi):
        return cls(DomainKind.ANNULAR_CYLINDER_3D, a, b, Lz)

    @property
    def dim(self) -> int:
        return 2 if self.kind is DomainKind.ANNULUS_2D else 3

    @property
    def J(self) -> int:
        """Number of cuts needed to make the domain simply connected."""
        return 1 if self.kind is DomainKind.ANNULUS_2D else 2

    @property
    def length_z(self) -> float:
        """Axial measure factor: ``Lz`` in 3D, 1 in 2D."""
        return self.Lz if self.dim == 3 else 1.0

    @property
    def measure(self) -> float:
        return math.pi * (self.b**2 - self.a**2) * self.length_z

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "a": self.a, "b": self.b}
        if self.dim == 3:
            out["Lz"] = self.Lz
        return out


def chebyshev_points(N):
    """Chebyshev-Gauss-Lobatto points on [-1, 1], increasing."""
    n = N - 1
    # sin form keeps the points exactly symmetric
    return np.sin(math.pi * np.arange(-n, n + 1, 2) / (2.0 * n))


def chebyshev_diff(N, M=2):
    """Differentiation matrices on increasing Chebyshev-Gauss-Lobatto points.

    Weideman-Reddy construction (trigonometric differences plus the flipping
    trick), reordered so that the nodes increase.

    Returns
    -------
    x : ndarray, shape (N,)
    DM : list of ndarray
        ``DM[l]`` is the ``(l+1)``-th derivative matrix.
    """
    n1 = N // 2
    n2 = (N + 1) // 2
    k = np.arange(N).reshape(N, 1)
    th = k * math.pi / (N - 1)
    x = np.sin(math.pi * np.arange(N - 1, -N, -2) / (2.0 * (N - 1)))

    T = np.tile(th / 2.0, N)
    DX = 2 * np.sin(T.T + T) * np.sin(T.T - T)
    DX[n1:, :] = -np.flipud(np.fliplr(DX[:n2, :]))
    np.fill_diagonal(DX, 1.0)
    Z = 1.0 / DX
    np.fill_diagonal(Z, 0.0)

    C = toeplitz((-1.0) ** k.ravel())
    C[0, :] *= 2
    C[-1, :] *= 2
    C[:, 0] /= 2
    C[:, -1] /= 2

    DM = []
    D = np.eye(N)
    for ell in range(M):
        D = (ell + 1) * Z * (C * np.tile(np.diag(D).reshape(N, 1), N) - D)
        np.fill_diagonal(D, -np.sum(D.T, axis=0))
        DM.append(D[::-1, ::-1].copy())
    return x[::-1].copy(), DM


def clenshaw_curtis(N):
    """Clenshaw-Curtis weights for the N Chebyshev-Gauss-Lobatto points on [-1, 1]."""
    n = N - 1
    theta = math.pi * np.arange(N) / n
    w = np.zeros(N)
    v = np.ones(N - 2)
    inner = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(n * inner) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    # weights are symmetric; the node order flip is immaterial
    return w


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Collocation/Fourier grid on a :class:`DomainSpec`.

    Modal arrays are laid out as ``(ncomp, 2*Mmax+1, 2*Kmax+1, Nr)`` with the
    angular wavenumber ``m = index - Mmax`` and the axial index
    ``k = index - Kmax`` (physical wavenumber ``2*pi*k/Lz``).
    """

    domain: DomainSpec
    Nr: int
    Mmax: int
    Kmax: int
    Ntheta: int
    Nz: int
    r_nodes: np.ndarray = dc_field(repr=False)
    cc_weights: np.ndarray = dc_field(repr=False)
    w_quad: np.ndarray = dc_field(repr=False)
    D1: np.ndarray = dc_field(repr=False)
    D2: np.ndarray = dc_field(repr=False)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def ncomp(self):
        return self.domain.dim

    @property
    def nm(self):
        return 2 * self.Mmax + 1

    @property
    def nk(self):
        return 2 * self.Kmax + 1

    @property
    def m_values(self):
        return np.arange(-self.Mmax, self.Mmax + 1)

    @property
    def k_values(self):
        return np.arange(-self.Kmax, self.Kmax + 1)

    @property
    def kappa_values(self):
        """Physical axial wavenumbers ``2*pi*k/Lz`` (zeros in 2D)."""
        if self.dim == 2:
            return np.zeros(1)
        return 2 * math.pi * self.k_values / self.domain.Lz

    def m_index(self, m):
        if abs(m) > self.Mmax:
            raise IndexOutOfRange(f"angular wavenumber {m} outside |m| <= {self.Mmax}")
        return int(m) + self.Mmax

    def k_index(self, k):
        if abs(k) > self.Kmax:
            raise IndexOutOfRange(f"axial wavenumber {k} outside |k| <= {self.Kmax}")
        return int(k) + self.Kmax

    def kappa(self, k):
        return 0.0 if self.dim == 2 else 2 * math.pi * k / self.domain.Lz

    def modal_shape(self, ncomp=None):
        return (self.ncomp if ncomp is None else ncomp, self.nm, self.nk, self.Nr)

    @property
    def theta_nodes(self):
        return 2 * math.pi * np.arange(self.Ntheta) / self.Ntheta

    @property
    def z_nodes(self):
        if self.dim == 2:
            return np.zeros(1)
        return self.domain.Lz * np.arange(self.Nz) / self.Nz

    def mesh(self):
        """Nodal coordinate arrays ``(R, TH, Z)``, each shaped ``(Ntheta, Nz, Nr)``."""
        TH, Z, R = np.meshgrid(self.theta_nodes, self.z_nodes, self.r_nodes, indexing="ij")
        return R, TH, Z

    @property
    def nodal_weights(self):
        """Quadrature weights on the nodal mesh, shape ``(1, 1, Nr)`` broadcastable."""
        return (self.w_quad / (self.Ntheta * self.Nz))[None, None, :]

    def key(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "Nr": self.Nr,
            "Mmax": self.Mmax,
            "Kmax": self.Kmax,
            "Ntheta": self.Ntheta,
            "Nz": self.Nz,
        }


def make_grid(domain: DomainSpec, Nr: int, Mmax: int, Kmax: int = 0, oversample: int = 2) -> SpectralGrid:
    """Build the spectral grid for ``domain``.

    Parameters
    ----------
    Nr : int
        Radial collocation points (>= 8).
    Mmax, Kmax : int
        Largest angular and axial wavenumbers kept. ``Kmax`` must be 0 in 2D.
    oversample : int
        Nodal points per retained Fourier mode in theta and z. The default of
        2 makes nodal quadrature of products of two fields alias-free.
    """
    if not isinstance(domain, DomainSpec):
        raise InvalidGeometry("domain must be a DomainSpec")
    Nr, Mmax, Kmax = int(Nr), int(Mmax), int(Kmax)
    if Nr < 8:
        raise InvalidGeometry(f"Nr={Nr} must be at least 8")
    if Mmax < 1:
        raise InvalidGeometry(f"Mmax={Mmax} must be at least 1")
    if Kmax < 0:
        raise InvalidGeometry(f"Kmax={Kmax} must be non-negative")
    if domain.dim == 2 and Kmax != 0:
        raise DimensionMismatch(f"Kmax={Kmax} given for a 2D domain")
    if oversample < 1:
        raise InvalidGeometry("oversample must be >= 1")

    x, (D1, D2) = chebyshev_diff(Nr, 2)
    a, b = domain.a, domain.b
    half = 0.5 * (b - a)
    r = a + half * (x + 1.0)
    r[0], r[-1] = a, b
    cc = clenshaw_curtis(Nr) * half
    w_quad = cc * r * 2 * math.pi * domain.length_z
    Ntheta = oversample * (2 * Mmax + 1)
    Nz = 1 if domain.dim == 2 else oversample * (2 * Kmax + 1)
    return SpectralGrid(
        domain=domain,
        Nr=Nr,
        Mmax=Mmax,
        Kmax=Kmax,
        Ntheta=Ntheta,
        Nz=Nz,
        r_nodes=_frozen(r),
        cc_weights=_frozen(cc),
        w_quad=_frozen(w_quad),
        D1=_frozen(D1 / half),
        D2=_frozen(D2 / half**2),
    )


def cut_flux(field, j: int, position: float = 0.0) -> complex:
    """Flux ``<u.n, 1>`` of a vector field through cut ``Sigma_j``.

    ``Sigma_1`` is the half-plane ``theta = position``; the flux is the
    integral of ``u_theta`` over ``a < r < b`` (and over one axial period in
    3D). ``Sigma_2`` (3D only) is the cross-section ``z = position``; the flux
    is the integral of ``u_z r dr dtheta``.

    The trapezoid rule in theta and z is exact on the retained Fourier modes,
    so it is evaluated directly on the modal coefficients.
    """
    grid = field.grid
    J = grid.domain.J
    if not 1 <= j <= J:
        raise IndexOutOfRange(f"cut index {j} outside 1..{J}")
    c = field.coeffs
    if c.shape[0] != grid.ncomp:
        raise DimensionMismatch("cut_flux expects a vector field")
    if j == 1:
        k0 = grid.Kmax
        phase = np.exp(1j * grid.m_values * position)
        line = c[1, :, k0, :] @ grid.cc_weights
        total = np.sum(phase * line) * grid.domain.length_z
    else:
        m0 = grid.Mmax
        phase = np.exp(1j * grid.kappa_values * position)
        disc = c[2, m0, :, :] @ (grid.cc_weights * grid.r_nodes)
        total = 2 * math.pi * np.sum(phase * disc)
    return complex(total)
