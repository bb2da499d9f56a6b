"""Exact quantum evolution and spectra of the spinor wavepacket.

The wavefunction lives on a periodic zeta grid times the 2F+1 spin
components.  Time stepping is the split-operator scheme: a kinetic
half-step diagonal in momentum space (FFT per spin component) and a
potential step applied pointwise as a scalar phase times an exact spin
rotation about the local field axis, so each step is exactly unitary.
Spectra come from dense Fourier-grid Hamiltonians in the same
discretization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (CalibrationError, ConfigurationError, DomainError,
                     ResolutionError, StepSizeError)
from .model import (AdiabaticSpectrum, LatticeParams, SpinMatrices,
                    adiabatic_spectrum, band_potential, build_spin_matrices,
                    fictitious_field, field_magnitude, gauge_correction,
                    lowest_band_well, potential_matrix, scalar_potential,
                    zeta_grid)


@dataclass(frozen=True)
class SpinorWavefunction:
    """psi_m(zeta_i) on a periodic grid; norm convention sum |psi|^2 dz = 1."""

    grid: np.ndarray = field(repr=False)
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = len(self.grid)
        if n & (n - 1) != 0:
            raise ConfigurationError("grid size must be a power of two")
        if self.amps.shape[0] != n or self.amps.ndim != 2:
            raise ConfigurationError("amps must have shape (len(grid), 2F+1)")

    @property
    def dz(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_spin(self) -> int:
        return self.amps.shape[1]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2) * self.dz))

    def normalized(self) -> "SpinorWavefunction":
        return SpinorWavefunction(self.grid, self.amps / self.norm())

    def overlap(self, other: "SpinorWavefunction") -> complex:
        return complex(np.sum(self.amps.conj() * other.amps) * self.dz)

    def position_density(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=1)


@dataclass(frozen=True)
class EnergyLevels:
    values: np.ndarray
    source: str                      # "exact" | "bo" | "bo_plus_gauge"
    convergence_error: float = 0.0


def momentum_grid(grid: np.ndarray) -> np.ndarray:
    n = len(grid)
    dz = grid[1] - grid[0]
    return 2.0 * math.pi * np.fft.fftfreq(n, d=dz)


@lru_cache(maxsize=4)
def _fy_eigensystem(f_spin: int):
    spin = build_spin_matrices(f_spin)
    w, v = np.linalg.eigh(spin.fy)
    # eigenvalues are -F..F ascending up to roundoff
    return np.round(w).astype(float), v


class Propagator:
    """Precomputed split-operator stepper for fixed (params, grid, dtau)."""

    def __init__(self, params: LatticeParams, grid: np.ndarray, dtau: float):
        if dtau <= 0:
            raise DomainError("dtau must be positive")
        self.params = params
        self.grid = np.asarray(grid, dtype=float)
        self.dtau = float(dtau)
        k = momentum_grid(self.grid)
        self.kin_half = np.exp(-1j * k ** 2 * (dtau / 2.0))[:, None]
        self.kin_full = self.kin_half ** 2

        f = float(params.f_spin)
        m = np.arange(-params.f_spin, params.f_spin + 1, dtype=float)
        uj = scalar_potential(params, self.grid)
        bf = fictitious_field(params, self.grid)
        bmag = np.hypot(params.bx, bf)
        beta = np.arctan2(params.bx, bf)          # b_hat = (sin b, 0, cos b)
        lam, vy = _fy_eigensystem(params.f_spin)
        # R_y(beta_i) = Vy diag(e^{-i beta lam}) Vy^dag, per grid point
        ry = np.einsum("ak,ik,bk->iab", vy, np.exp(-1j * np.outer(beta, lam)), vy.conj())
        rot_z = np.exp(-1j * np.outer(bmag * dtau / f, m))
        u = np.einsum("iab,ib,icb->iac", ry, rot_z, ry.conj())
        self.u_pot = np.exp(-1j * uj * dtau)[:, None, None] * u

    def step(self, amps: np.ndarray, n_steps: int = 1) -> np.ndarray:
        """Advance n_steps of dtau; amps has shape (N, 2F+1).

        Adjacent kinetic half-steps of the Strang chain are merged, so a
        run of n steps costs 2n+2 FFTs instead of 4n.
        """
        if n_steps < 1:
            return amps.copy()
        a = np.fft.ifft(self.kin_half * np.fft.fft(amps, axis=0), axis=0)
        for k in range(n_steps):
            a = np.einsum("iab,ib->ia", self.u_pot, a)
            phase = self.kin_full if k < n_steps - 1 else self.kin_half
            a = np.fft.ifft(phase * np.fft.fft(a, axis=0), axis=0)
        return a


def evolve(params: LatticeParams, psi: SpinorWavefunction, tau_span: float,
           dtau: float = 1e-5, sample_times=None, drift_tol: float = 1e-8,
           check: bool = True):
    """Propagate psi by tau_span; returns (times, [SpinorWavefunction...]).

    sample_times selects the stored snapshots (always includes the final
    time).  Norm and mean-energy drift are checked against drift_tol
    (relative for the energy); violations raise StepSizeError.
    """
    if tau_span < 0:
        raise DomainError("tau_span must be non-negative")
    prop = Propagator(params, psi.grid, dtau)
    n_total = int(round(tau_span / dtau))
    if sample_times is None:
        sample_steps = [n_total]
    else:
        sample_steps = sorted({min(n_total, max(0, int(round(t / dtau))))
                               for t in sample_times} | {n_total})
    e0 = observables(params, psi)["energy"]
    out_t, out_psi = [], []
    a = psi.amps.copy()
    done = 0
    for target in sample_steps:
        if target > done:
            a = prop.step(a, target - done)
            done = target
        snap = SpinorWavefunction(psi.grid, a.copy())
        out_t.append(done * dtau)
        out_psi.append(snap)
        if check:
            norm_err = abs(snap.norm() - 1.0)
            e_err = abs(observables(params, snap)["energy"] - e0) / max(abs(e0), 1e-30)
            if norm_err > drift_tol or e_err > drift_tol:
                raise StepSizeError(
                    f"drift at tau={done * dtau:.4g}: norm {norm_err:.2e}, "
                    f"energy {e_err:.2e} (tol {drift_tol:.1e}); reduce dtau")
    return np.array(out_t), out_psi


def observable_series(params: LatticeParams, psi: SpinorWavefunction, tau_grid,
                      dtau: float = 1e-5, drift_tol: float = 1e-8) -> dict:
    """{fz, norm, energy} sampled along the evolution, without storing states."""
    prop = Propagator(params, psi.grid, dtau)
    spin = build_spin_matrices(params.f_spin)
    vmat = potential_matrix(params, spin, psi.grid)
    k = momentum_grid(psi.grid)
    m = np.arange(-params.f_spin, params.f_spin + 1, dtype=float)
    steps = [int(round(t / dtau)) for t in tau_grid]
    if sorted(steps) != steps:
        raise DomainError("tau_grid must be non-decreasing")
    a = psi.amps.copy()
    done = 0
    dz = psi.dz
    fz, norms, energies = [], [], []
    for target in steps:
        if target > done:
            a = prop.step(a, target - done)
            done = target
        n2 = float(np.sum(np.abs(a) ** 2) * dz)
        ak = np.fft.fft(a, axis=0)
        p2 = float(np.sum(k[:, None] ** 2 * np.abs(ak) ** 2) / np.sum(np.abs(ak) ** 2))
        vmean = float(np.einsum("im,imn,in->", a.conj(), vmat, a).real * dz) / n2
        fz.append(float(np.sum(np.abs(a) ** 2 * m[None, :]) * dz) / n2)
        norms.append(math.sqrt(n2))
        energies.append(p2 + vmean)
    norms = np.array(norms)
    if np.max(np.abs(norms - 1.0)) > drift_tol:
        raise StepSizeError(f"norm drift {np.max(np.abs(norms - 1.0)):.2e} over the series")
    return {"tau": np.array([s * dtau for s in steps]), "fz": np.array(fz),
            "norm": norms, "energy": np.array(energies)}


def fz_series(params: LatticeParams, psi: SpinorWavefunction, tau_grid,
              dtau: float = 1e-5, drift_tol: float = 1e-8):
    """<F_z>(tau) on tau_grid without storing wavefunctions."""
    return observable_series(params, psi, tau_grid, dtau=dtau,
                             drift_tol=drift_tol)["fz"]


def observables(params: LatticeParams, psi: SpinorWavefunction) -> dict:
    """norm, <E>, <F_z>, <zeta>, <p^2>, and the reduced position density."""
    dz = psi.dz
    a = psi.amps
    dens = np.sum(np.abs(a) ** 2, axis=1)
    norm2 = float(np.sum(dens) * dz)
    k = momentum_grid(psi.grid)
    ak = np.fft.fft(a, axis=0)
    p2 = float(np.sum(k[:, None] ** 2 * np.abs(ak) ** 2) / np.sum(np.abs(ak) ** 2))
    spin = build_spin_matrices(params.f_spin)
    vmat = potential_matrix(params, spin, psi.grid)
    vmean = float(np.einsum("im,imn,in->", a.conj(), vmat, a).real * dz) / norm2
    m = np.arange(-params.f_spin, params.f_spin + 1, dtype=float)
    fz = float(np.sum(np.abs(a) ** 2 * m[None, :]) * dz) / norm2
    zmean = float(np.sum(psi.grid * dens) * dz) / norm2
    return {"norm": math.sqrt(norm2), "energy": p2 + vmean, "fz": fz,
            "zeta_mean": zmean, "p2": p2, "v_mean": vmean, "density": dens}


# ------------------------------------------------------------- initial state

def initial_state(params: LatticeParams, side: str = "left",
                  grid_n: int = 256) -> SpinorWavefunction:
    """Wavepacket localized in one well of the lowest adiabatic potential.

    Gaussian ground state of the harmonic fit to the chosen well, tensored
    pointwise with the local lowest adiabatic spinor.  The mean energy
    must land above the V_1 inner barrier and below min V_2, else the
    parameter set is rejected.
    """
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    well = lowest_band_well(params)
    zw = well.zeta_left if side == "left" else well.zeta_right
    grid = zeta_grid(params, grid_n)
    length = params.domain_length
    dzw = (grid - zw + length / 2.0) % length - length / 2.0
    s2 = 2.0 / well.omega_well                     # <dzeta^2> = 1/omega
    g = np.exp(-dzw ** 2 / (2.0 * s2))

    spin = build_spin_matrices(params.f_spin)
    spec = adiabatic_spectrum(params, spin, grid)
    chi = spec.eigvecs[:, :, 0]
    psi = SpinorWavefunction(grid, g[:, None] * chi).normalized()

    e_mean = observables(params, psi)["energy"]
    v2_min = float(np.min(band_potential(params, grid, 2)))
    if not well.v_barrier < e_mean < v2_min:
        raise CalibrationError(
            f"initial-state energy {e_mean:.2f} violates barrier {well.v_barrier:.2f} "
            f"< <E> < min V_2 {v2_min:.2f}; adjust parameters")
    return psi


# ------------------------------------------------------------------- spectra

def _fgh_kinetic(grid: np.ndarray) -> np.ndarray:
    n = len(grid)
    k = momentum_grid(grid)
    fmat = np.fft.fft(np.eye(n), axis=0) / math.sqrt(n)
    t = fmat.conj().T @ (k[:, None] ** 2 * fmat)
    return 0.5 * (t + t.conj().T)


def fgh_levels_1d(v_grid: np.ndarray, grid: np.ndarray, n_levels: int = 10,
                  return_states: bool = False):
    """Levels of -d^2/dz^2 + V on a periodic grid (dense Fourier-grid H)."""
    h = _fgh_kinetic(grid) + np.diag(v_grid)
    if return_states:
        w, u = np.linalg.eigh(h)
        return w[:n_levels].real, u[:, :n_levels] / math.sqrt(grid[1] - grid[0])
    w = np.linalg.eigvalsh(h)
    return w[:n_levels].real


def full_hamiltonian_levels(params: LatticeParams, n_basis: int = 128,
                            n_levels: int = 10, tol: float = 1e-8,
                            return_states: bool = False):
    """Exact levels of p^2 + V(zeta) in the plane-wave x spin basis.

    Convergence is verified by doubling the basis; the doubled result is
    returned.  With return_states the eigencolumns come back reshaped to
    (grid, spin) spinor fields on the doubled grid.
    """
    def solve(nb, states=False):
        grid = zeta_grid(params, nb)
        spin = build_spin_matrices(params.f_spin)
        m = spin.dim
        t = _fgh_kinetic(grid)
        h = np.kron(t, np.eye(m))
        vblocks = potential_matrix(params, spin, grid)
        for i in range(nb):
            h[i * m:(i + 1) * m, i * m:(i + 1) * m] += vblocks[i]
        if states:
            w, u = np.linalg.eigh(h)
            return w[:n_levels].real, u, grid
        return np.linalg.eigvalsh(h)[:n_levels].real

    w1 = solve(n_basis)
    if return_states:
        w2, u, grid = solve(2 * n_basis, states=True)
    else:
        w2 = solve(2 * n_basis)
    err = float(np.max(np.abs(w1 - w2)))
    if err > tol:
        raise ResolutionError(
            f"levels changed by {err:.2e} under basis doubling (tol {tol:.1e}); "
            "increase n_basis")
    if return_states:
        m = 2 * params.f_spin + 1
        dz = grid[1] - grid[0]
        states = [SpinorWavefunction(grid, u[:, i].reshape(-1, m) / math.sqrt(dz))
                  for i in range(n_levels)]
        return EnergyLevels(values=w2, source="exact", convergence_error=err), states
    return EnergyLevels(values=w2, source="exact", convergence_error=err)


def gauge_on_grid(params: LatticeParams, band: int, grid: np.ndarray,
                  fine_n: int = 8192) -> np.ndarray:
    """Gauge correction evaluated on a fine grid and subsampled onto grid.

    Decouples the finite-difference resolution of Phi from the solver
    grid, so spectral convergence checks are not limited by the FD error.
    """
    n = len(grid)
    if fine_n % n != 0:
        raise DomainError("fine_n must be a multiple of the target grid size")
    spin = build_spin_matrices(params.f_spin)
    fine = zeta_grid(params, fine_n)
    spec = adiabatic_spectrum(params, spin, fine)
    phi = gauge_correction(spec, band)
    return phi[::fine_n // n]


def bo_levels(params: LatticeParams, band: int = 1, with_gauge: bool = True,
              grid_n: int = 512, n_levels: int = 10, tol: float = 1e-8,
              phi_fine_n: int = 8192) -> EnergyLevels:
    """Born-Oppenheimer levels of one band, optionally gauge corrected."""
    def solve(nb):
        grid = zeta_grid(params, nb)
        v = band_potential(params, grid, band)
        if with_gauge:
            v = v + gauge_on_grid(params, band, grid, phi_fine_n)
        return fgh_levels_1d(v, grid, n_levels)

    w1, w2 = solve(grid_n), solve(2 * grid_n)
    err = float(np.max(np.abs(w1 - w2)))
    if err > tol:
        raise ResolutionError(
            f"BO levels changed by {err:.2e} under grid doubling (tol {tol:.1e})")
    return EnergyLevels(values=w2, source="bo_plus_gauge" if with_gauge else "bo",
                        convergence_error=err)


# --------------------------------------------------- adiabatic decomposition

@dataclass(frozen=True)
class BandPopulations:
    grid: np.ndarray = field(repr=False)
    p_of_z: np.ndarray = field(repr=False)     # (N, 2F+1), band densities
    amplitudes: np.ndarray = field(repr=False)  # (N, 2F+1) complex psi_mu(z)

    @property
    def totals(self) -> np.ndarray:
        dz = float(self.grid[1] - self.grid[0])
        return np.sum(self.p_of_z, axis=0) * dz


@dataclass(frozen=True)
class KineticDensity:
    grid: np.ndarray = field(repr=False)
    t_of_z: np.ndarray = field(repr=False)
    populations: BandPopulations
    energy_mean: float


def band_populations(psi: SpinorWavefunction,
                     spectrum: AdiabaticSpectrum) -> BandPopulations:
    """Adiabatic-band amplitudes psi_mu(z) = <mu(z)|psi(z)> and densities."""
    if len(spectrum.grid) != len(psi.grid) or abs(spectrum.grid[0] - psi.grid[0]) > 1e-12:
        raise DomainError("spectrum and wavefunction must share the same grid")
    amps = np.einsum("imk,im->ik", spectrum.eigvecs.conj(), psi.amps)
    return BandPopulations(grid=psi.grid, p_of_z=np.abs(amps) ** 2, amplitudes=amps)


def kinetic_energy_density(params: LatticeParams, psi: SpinorWavefunction,
                           spectrum: AdiabaticSpectrum) -> KineticDensity:
    """T(z) = sum_mu [<E> - V_mu(z)] P_mu(z); integrates to <p^2>."""
    pops = band_populations(psi, spectrum)
    e_mean = observables(params, psi)["energy"]
    t_of_z = np.sum((e_mean - spectrum.v) * pops.p_of_z, axis=1)
    return KineticDensity(grid=psi.grid, t_of_z=t_of_z, populations=pops,
                          energy_mean=e_mean)


# ----------------------------------------------------------- time landmarks

def find_cat_time(times: np.ndarray, fz: np.ndarray) -> float:
    """Time of minimal |<F_z>| during the first magnetization oscillation."""
    fz = np.asarray(fz)
    sign0 = math.copysign(1.0, fz[0])
    crossings = np.where(np.sign(fz[:-1]) * np.sign(fz[1:]) < 0)[0]
    if len(crossings) >= 2:
        # minimum of |Fz| within the first full swing
        end = crossings[1] + 1
    else:
        end = len(fz)
    i = int(np.argmin(np.abs(fz[:end])))
    return float(times[i])


def first_zero_crossing(times: np.ndarray, fz: np.ndarray) -> float | None:
    """Linear-interpolated first zero of <F_z>(tau); None if it never flips."""
    fz = np.asarray(fz)
    idx = np.where(np.sign(fz[:-1]) * np.sign(fz[1:]) < 0)[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    frac = fz[i] / (fz[i] - fz[i + 1])
    return float(times[i] + frac * (times[i + 1] - times[i]))
