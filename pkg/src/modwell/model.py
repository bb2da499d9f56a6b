"""Core model: units, lattice parameters, spin operators, effective potentials.

Dimensionless convention used everywhere: lengths in 1/k (zeta = k z),
momenta in hbar*k, energies in the recoil energy E_R = hbar^2 k^2 / 2m,
time in hbar/E_R.  Kinetic energy is then p**2 and Hamilton's equations
read  dzeta/dtau = 2 p,  dp/dtau = -dV/dzeta  (effective mass 1/2).

The lattice is lin-angle-lin: a scalar potential plus a position dependent
effective magnetic field,

    U_J(zeta)   = 2 u0 cos(theta_l) cos(2 zeta)
    b_fict(zeta) = -u0 sin(theta_l) sin(2 zeta)        (mu_B B in E_R)
    b(zeta)     = (bx, 0, b_fict(zeta))

and the spin-F atom feels  V(zeta) = U_J * 1 + (1/F) b(zeta) . f,
whose eigenvalues are the 2F+1 adiabatic potentials
U_J + (m/F) |b(zeta)|, m = -F..F.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (CalibrationError, ConfigurationError, DomainError,
                     NumericalError, ResolutionError)

# Physical time scale: the recoil frequency is E_R/h = 2 kHz, so one
# dimensionless time unit is hbar/E_R = 1/(2 pi * 2000 Hz) ~ 79.58 us.
RECOIL_FREQUENCY_HZ = 2000.0
ENERGY_UNIT_PER_SECOND = 2.0 * math.pi * RECOIL_FREQUENCY_HZ   # E_R/hbar in 1/s
TIME_UNIT_SECONDS = 1.0 / ENERGY_UNIT_PER_SECOND


@dataclass(frozen=True)
class LatticeParams:
    """Physical configuration of the lattice, in recoil units.

    u0       : lattice depth U_0 (signed; the shipped default is negative,
               which puts the low barrier of the double well at zeta = 0)
    theta_l  : relative polarization angle, radians, strictly inside (0, pi)
    bx       : transverse field strength mu_B B_x in E_R (non-negative)
    f_spin   : total angular momentum F
    n_periods: number of lattice periods (length pi each) in the domain
    """

    u0: float
    theta_l: float
    bx: float
    f_spin: int = 4
    n_periods: int = 1

    def __post_init__(self):
        if self.u0 == 0.0:
            raise ConfigurationError("u0 must be nonzero")
        if not 0.0 < self.theta_l < math.pi:
            raise ConfigurationError("theta_l must lie strictly inside (0, pi)")
        if self.bx < 0.0:
            raise ConfigurationError("bx must be non-negative")
        if int(self.f_spin) != self.f_spin or self.f_spin < 1:
            raise ConfigurationError("f_spin must be a positive integer")
        if int(self.n_periods) != self.n_periods or self.n_periods < 1:
            raise ConfigurationError("n_periods must be a positive integer")

    @property
    def domain_length(self) -> float:
        return self.n_periods * math.pi

    def replace(self, **kw) -> "LatticeParams":
        d = dict(u0=self.u0, theta_l=self.theta_l, bx=self.bx,
                 f_spin=self.f_spin, n_periods=self.n_periods)
        d.update(kw)
        return LatticeParams(**d)


# Calibrated default triple.  Chosen by the calibration scan (see
# modwell.calibrate): lowest-band double well with its inner barrier at
# -188.0 E_R, initial-state mean energy just above the barrier, exact
# ground-doublet splitting 1.88 E_R vs 3.42 E_R for BO+gauge, and a mixed
# phase space at E = -186.8 E_R.
DEFAULT_U0 = -146.0
DEFAULT_THETA_L_DEG = 74.0
DEFAULT_BX = 107.514


def default_params(f_spin: int = 4, n_periods: int = 1) -> LatticeParams:
    """The calibrated default parameter triple."""
    return LatticeParams(u0=DEFAULT_U0, theta_l=math.radians(DEFAULT_THETA_L_DEG),
                         bx=DEFAULT_BX, f_spin=f_spin, n_periods=n_periods)


@dataclass(frozen=True)
class SpinMatrices:
    """Angular momentum operator triple for spin F, dimensionless (hbar = 1)."""

    f_spin: int
    fx: np.ndarray = field(repr=False)
    fy: np.ndarray = field(repr=False)
    fz: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.f_spin + 1

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(-self.f_spin, self.f_spin + 1, dtype=float)


@lru_cache(maxsize=8)
def _spin_cache(f_spin: int):
    f = float(f_spin)
    m = np.arange(-f, f + 1)
    dim = len(m)
    fz = np.diag(m).astype(complex)
    raising = np.zeros((dim, dim), dtype=complex)
    c = np.sqrt(f * (f + 1) - m[:-1] * (m[:-1] + 1))      # <m+1| f+ |m>
    raising[np.arange(1, dim), np.arange(dim - 1)] = c
    fx = (raising + raising.conj().T) / 2.0
    fy = (raising - raising.conj().T) / 2j
    for a in (fx, fy, fz):
        a.setflags(write=False)
    return fx, fy, fz


def build_spin_matrices(f_spin: int) -> SpinMatrices:
    """Ladder construction of (fx, fy, fz) with fz = diag(-F..F)."""
    if int(f_spin) != f_spin or f_spin < 1:
        raise ConfigurationError("f_spin must be a positive integer >= 1")
    fx, fy, fz = _spin_cache(int(f_spin))
    return SpinMatrices(int(f_spin), fx, fy, fz)


# ---------------------------------------------------------------- potentials

def scalar_potential(params: LatticeParams, zeta):
    """Moment-independent scalar potential U_J, period pi."""
    return 2.0 * params.u0 * math.cos(params.theta_l) * np.cos(2.0 * np.asarray(zeta))


def fictitious_field(params: LatticeParams, zeta):
    """z-component of the lattice-induced field, mu_B B_fict in E_R."""
    return -params.u0 * math.sin(params.theta_l) * np.sin(2.0 * np.asarray(zeta))


def effective_field(params: LatticeParams, zeta):
    """Effective field (bx, 0, b_fict(zeta)); shape (..., 3)."""
    zeta = np.asarray(zeta, dtype=float)
    b = np.zeros(zeta.shape + (3,))
    b[..., 0] = params.bx
    b[..., 2] = fictitious_field(params, zeta)
    return b


def field_magnitude(params: LatticeParams, zeta):
    return np.hypot(params.bx, fictitious_field(params, zeta))


def potential_matrix(params: LatticeParams, spin: SpinMatrices, zeta):
    """Spin-space potential V(zeta) = U_J*1 + (bx*fx + b_fict*fz)/F; (..., M, M)."""
    zeta = np.asarray(zeta, dtype=float)
    uj = scalar_potential(params, zeta)
    bf = fictitious_field(params, zeta)
    f = float(params.f_spin)
    eye = np.eye(spin.dim)
    v = (uj[..., None, None] * eye
         + (params.bx / f) * spin.fx
         + (bf[..., None, None] / f) * spin.fz)
    return v


def band_potential(params: LatticeParams, zeta, band: int = 1):
    """Adiabatic potential of the given band (1 = lowest), closed form."""
    if not 1 <= band <= 2 * params.f_spin + 1:
        raise DomainError(f"band must be in 1..{2 * params.f_spin + 1}")
    m = band - 1 - params.f_spin
    return scalar_potential(params, zeta) + (m / params.f_spin) * field_magnitude(params, zeta)


def pendulum_coefficients(params: LatticeParams, n_z):
    """(C, D) of the bx = 0 reduction U_J + n_z*b_fict = C cos(2 zeta + D).

    C = u0 sqrt(4 cos^2 th + n_z^2 sin^2 th),  D = arctan(n_z tan(th)/2).
    C carries the sign of u0.
    """
    n_z = np.asarray(n_z, dtype=float)
    c, s = math.cos(params.theta_l), math.sin(params.theta_l)
    amp = params.u0 * np.sqrt(4.0 * c * c + n_z * n_z * s * s)
    # arctan(n_z tan(th)/2) on (0, pi/2); atan2 extends the branch past pi/2
    phase = np.arctan2(n_z * s, 2.0 * c)
    return amp, phase


# ------------------------------------------------------- classical reduction

def classical_potential(params: LatticeParams, zeta, n):
    """Scalar potential for a classical moment direction n: U_J + n . b."""
    n = np.asarray(n, dtype=float)
    return (scalar_potential(params, zeta)
            + n[..., 0] * params.bx
            + n[..., 2] * fictitious_field(params, zeta))


def force(params: LatticeParams, zeta, n):
    """-d/dzeta of classical_potential at fixed n."""
    zeta = np.asarray(zeta, dtype=float)
    n = np.asarray(n, dtype=float)
    c, s = math.cos(params.theta_l), math.sin(params.theta_l)
    uj_prime = -4.0 * params.u0 * c * np.sin(2.0 * zeta)
    bf_prime = -2.0 * params.u0 * s * np.cos(2.0 * zeta)
    return -(uj_prime + n[..., 2] * bf_prime)


def precession_field(params: LatticeParams, zeta):
    """Angular velocity of the moment: dn/dtau = precession_field x n.

    Equals b(zeta)/F.  Sign convention fixed against the quantum Larmor
    oracle: under a uniform +x field the mean spin rotates from +z toward
    -y, identically in the classical and quantum descriptions.
    """
    return effective_field(params, zeta) / params.f_spin


# ---------------------------------------------------------- adiabatic bands

@dataclass(frozen=True)
class AdiabaticSpectrum:
    """Position-resolved eigensystem of the potential matrix.

    grid    : N zeta values (uniform, one domain length, endpoint excluded)
    v       : (N, 2F+1) sorted adiabatic potentials
    eigvecs : (N, 2F+1, 2F+1) phase-continuous eigencolumns, [i, :, mu]
    """

    params: LatticeParams
    grid: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @property
    def dz(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_bands(self) -> int:
        return self.v.shape[1]

    def neighbor_overlap(self) -> float:
        """Smallest |<mu(z_i)|mu(z_i+1)>| over bands and the periodic grid."""
        nxt = np.roll(self.eigvecs, -1, axis=0)
        ov = np.abs(np.einsum("imk,imk->ik", self.eigvecs.conj(), nxt))
        return float(ov.min())


def zeta_grid(params: LatticeParams, n: int) -> np.ndarray:
    """Uniform periodic grid of n points covering [-L/2, L/2)."""
    length = params.domain_length
    return -length / 2.0 + length * np.arange(n) / n


def adiabatic_spectrum(params: LatticeParams, spin: SpinMatrices,
                       grid: np.ndarray) -> AdiabaticSpectrum:
    """Diagonalize V(zeta) on the grid with phase-continuous eigenvectors."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 8:
        raise DomainError("grid must be a 1-D array with at least 8 points")
    dz = np.diff(grid)
    if np.any(dz <= 0):
        raise DomainError("grid must be strictly increasing")
    if not np.allclose(dz, dz[0], rtol=0, atol=1e-9):
        raise DomainError("grid must be uniform")
    span = grid[-1] - grid[0] + dz[0]
    if abs(span - params.domain_length) > 1e-8:
        raise DomainError(
            f"grid must cover n_periods*pi = {params.domain_length:.6f}, got {span:.6f}")

    vmat = potential_matrix(params, spin, grid)
    try:
        w, u = np.linalg.eigh(vmat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed on the potential grid: {exc}") from None

    u = u.astype(complex)
    # phase fixing: first point against the fz basis, then maximal real
    # positive overlap with the previous grid point
    for mu in range(u.shape[2]):
        j = int(np.argmax(np.abs(u[0, :, mu])))
        ph = u[0, j, mu]
        if abs(ph) > 0:
            u[0, :, mu] *= ph.conj() / abs(ph)
    for i in range(1, u.shape[0]):
        ov = np.einsum("mk,mk->k", u[i - 1].conj(), u[i])
        ph = np.where(np.abs(ov) > 0, ov.conj() / np.maximum(np.abs(ov), 1e-300), 1.0)
        u[i] *= ph[None, :]
    return AdiabaticSpectrum(params=params, grid=grid, v=w, eigvecs=u)


def _d4_periodic(a: np.ndarray, dz: float) -> np.ndarray:
    """4th-order centered first derivative along axis 0, periodic."""
    return (-np.roll(a, -2, axis=0) + 8.0 * np.roll(a, -1, axis=0)
            - 8.0 * np.roll(a, 1, axis=0) + np.roll(a, 2, axis=0)) / (12.0 * dz)


def gauge_correction(spectrum: AdiabaticSpectrum, band: int = 1,
                     min_overlap: float = 0.99) -> np.ndarray:
    """Scalar gauge potential Phi_mu(zeta) of a band, in E_R.

    Phi = <d mu|d mu> - |<mu|d mu>|^2, evaluated as (1/2) Tr[(dP)^2] with
    P the band projector and a 4th-order centered difference.  The
    projector form is exactly invariant under any per-point eigenvector
    phase, so no gauge artifact survives the periodic seam.
    """
    if not 1 <= band <= spectrum.n_bands:
        raise DomainError(f"band must be in 1..{spectrum.n_bands}")
    ov = spectrum.neighbor_overlap()
    if ov < min_overlap:
        raise ResolutionError(
            f"grid too coarse for gauge correction: neighbor overlap {ov:.4f} < {min_overlap}")
    chi = spectrum.eigvecs[:, :, band - 1]
    proj = chi[:, :, None] * chi.conj()[:, None, :]
    dproj = _d4_periodic(proj, spectrum.dz)
    phi = 0.5 * np.einsum("iab,iba->i", dproj, dproj).real
    return np.maximum(phi, 0.0)


def gauge_correction_sos(params: LatticeParams, spin: SpinMatrices,
                         spectrum: AdiabaticSpectrum, band: int = 1) -> np.ndarray:
    """Sum-over-states route to Phi_mu, independent of finite differences.

    Uses <nu|dV/dzeta|mu>/(V_mu - V_nu); dV/dzeta = U_J' + (b_fict'/F) fz
    and the scalar part drops out of the off-diagonal elements.
    """
    mu = band - 1
    zeta = spectrum.grid
    bf_prime = -2.0 * params.u0 * math.sin(params.theta_l) * np.cos(2.0 * zeta)
    fz_me = np.einsum("imn,nk,ik->im", spectrum.eigvecs.conj().transpose(0, 2, 1),
                      spin.fz, spectrum.eigvecs[:, :, mu])
    gaps = spectrum.v - spectrum.v[:, mu:mu + 1]
    phi = np.zeros(len(zeta))
    for nu in range(spectrum.n_bands):
        if nu == mu:
            continue
        phi += np.abs(fz_me[:, nu] / params.f_spin) ** 2 / gaps[:, nu] ** 2
    return phi * bf_prime ** 2


# ------------------------------------------------------- well/barrier probes

@dataclass(frozen=True)
class DoubleWell:
    """Geometry of the lowest-band double well within one period."""

    zeta_left: float
    zeta_right: float
    v_min: float
    zeta_barrier: float
    v_barrier: float
    omega_well: float      # harmonic frequency sqrt(2 V'') at a well minimum


def lowest_band_well(params: LatticeParams) -> DoubleWell:
    """Locate the double-well minima and inner barrier of V_1.

    V_1 is even about both zeta = 0 and zeta = pi/2; the lower of the two
    stationary values is the inner barrier of the double well (zeta = 0
    for u0 < 0).  The two well minima are mirror images through it.
    """
    from scipy.optimize import minimize_scalar

    def v1(x):
        return float(band_potential(params, x, 1))

    zb = 0.0 if params.u0 < 0 else math.pi / 2.0
    h = 1e-5
    if v1(zb + h) - 2.0 * v1(zb) + v1(zb - h) >= 0:
        raise CalibrationError("lowest band is not a double well at these parameters")

    def v1_prime(x):
        c, s = math.cos(params.theta_l), math.sin(params.theta_l)
        uj_p = -4.0 * params.u0 * c * math.sin(2.0 * x)
        bf = -params.u0 * s * math.sin(2.0 * x)
        bf_p = -2.0 * params.u0 * s * math.cos(2.0 * x)
        return uj_p - bf * bf_p / math.hypot(params.bx, bf)

    from scipy.optimize import brentq

    zscan = zb - np.linspace(1e-4, math.pi / 2 - 1e-4, 2000)
    il = int(np.argmin(band_potential(params, zscan, 1)))
    res = minimize_scalar(v1, bounds=(zscan[il] - 2e-3, zscan[il] + 2e-3),
                          method="bounded", options={"xatol": 1e-10})
    zl = float(res.x)
    if params.bx > 0:
        zl = brentq(v1_prime, zl - 1e-4, zl + 1e-4, xtol=1e-15)
    vmin = v1(zl)
    if vmin >= v1(zb) - 1e-9:
        raise CalibrationError("lowest band is not a double well at these parameters")
    vpp = (v1(zl + h) - 2.0 * vmin + v1(zl - h)) / h ** 2
    if vpp <= 0:
        raise NumericalError("well curvature not positive; minimum search failed")
    return DoubleWell(zeta_left=zl, zeta_right=2.0 * zb - zl, v_min=vmin,
                      zeta_barrier=zb, v_barrier=v1(zb),
                      omega_well=math.sqrt(2.0 * vpp))
