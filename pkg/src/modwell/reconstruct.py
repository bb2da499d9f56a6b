"""Pseudo-density reconstruction from joint Q values.

Primary route: one Tikhonov-regularized linear inversion of the map from
Hermitian operators on (Fock cutoff) x (spin) to Q values at a designed
probe set.  The probe projectors factorize as |alpha><alpha| x |n><n|, so
the normal equations inherit a Kronecker structure and the solution comes
from the SVDs of the two small factor matrices.  Positivity is never
imposed: negative eigenvalues of the result are the observable.

Validation route: the explicit two-step inversion - Gaussian deconvolution
of the motional Q to the Wigner-domain characteristic function, operator
Fourier inversion over displacement operators, and an exact spherical
tensor inversion for the spin sector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, sph_harm_y

from .errors import DomainError, IllPosedError
from .model import LatticeParams, build_spin_matrices
from .phasespace import (ReferenceFrame, fibonacci_sphere, motional_coherent,
                         probe_alphas, q_values, spin_coherent)
from .quantum import SpinorWavefunction

__all__ = [
    "PseudoDensity", "ProbeSet", "build_probes", "fock_coherent",
    "reconstruct_pseudo_density", "reconstruct_deconvolution",
    "coherent_product_state", "NoiseFloor", "calibrate_noise_floor",
]


@dataclass(frozen=True)
class ProbeSet:
    """Tensor probe grid: alphas (A_m,) x spin directions (A_s,)."""

    alphas: np.ndarray = field(repr=False)
    thetas: np.ndarray = field(repr=False)
    phis: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return len(self.alphas), len(self.thetas)

    def joint(self):
        """Flattened label arrays (alpha, theta, phi) over the tensor grid."""
        a = np.repeat(self.alphas, len(self.thetas))
        t = np.tile(self.thetas, len(self.alphas))
        p = np.tile(self.phis, len(self.alphas))
        return a, t, p


@dataclass(frozen=True)
class PseudoDensity:
    """Hermitian unit-trace reconstruction on (Fock n_max) x (2F+1)."""

    matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray                 # sorted descending
    residual: float
    raw_trace: float
    n_max: int
    f_spin: int

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


def build_probes(frame: ReferenceFrame, alpha_samples: np.ndarray,
                 n_alpha_side: int = 12, n_spin: int = 72,
                 span: float = 3.0) -> ProbeSet:
    """12x12 alpha grid over mean +- span*std of the samples, x Fibonacci sphere."""
    alphas = probe_alphas(np.asarray(alpha_samples, dtype=complex),
                          n_side=n_alpha_side, span=span)
    thetas, phis = fibonacci_sphere(n_spin)
    return ProbeSet(alphas=alphas, thetas=thetas, phis=phis)


def fock_coherent(alpha, n_max: int) -> np.ndarray:
    """Fock components c_n(alpha) = e^{-|a|^2/2} a^n / sqrt(n!), n = 0..n_max."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    n = np.arange(n_max + 1)
    absa = np.abs(alpha)
    lnmag = np.where(absa[:, None] > 0,
                     n[None, :] * np.log(np.maximum(absa[:, None], 1e-300)), 0.0)
    mag = np.exp(-0.5 * absa[:, None] ** 2 + lnmag - 0.5 * gammaln(n + 1)[None, :])
    phase = np.exp(1j * n[None, :] * np.angle(alpha)[:, None])
    out = mag * phase
    out[:, 1:] = np.where(absa[:, None] == 0, 0.0, out[:, 1:])
    return out


def _probe_factor_matrices(probes: ProbeSet, f_spin: int, n_max: int,
                           mass_tol: float = 1e-3):
    """A[a, (n,n')] and S[b, (s,s')] rows of the probe projectors."""
    c = fock_coherent(probes.alphas, n_max)                 # (A_m, n_max+1)
    mass = np.sum(np.abs(c) ** 2, axis=1)
    if np.min(mass) < 1.0 - mass_tol:
        raise IllPosedError(
            f"Fock cutoff too small: probe coherent mass {np.min(mass):.6f} < "
            f"{1 - mass_tol}; increase n_max")
    a_mat = (c.conj()[:, :, None] * c[:, None, :]).reshape(len(probes.alphas), -1)
    d = spin_coherent(f_spin, probes.thetas, probes.phis)   # (A_s, 2F+1)
    s_mat = (d.conj()[:, :, None] * d[:, None, :]).reshape(len(probes.thetas), -1)
    return a_mat, s_mat


def reconstruct_pseudo_density(q_matrix: np.ndarray, probes: ProbeSet,
                               f_spin: int, n_max: int = 48,
                               reg: float = 1e-6) -> PseudoDensity:
    """Tikhonov inversion of Q(alpha_a, n_b) to a Hermitian unit-trace operator.

    q_matrix has shape (len(alphas), len(spin directions)).  reg is the
    ridge weight relative to the largest singular value product of the
    factor maps.  Hermiticity of the minimizer is automatic for real data;
    the trace is normalized afterwards and reported raw.
    """
    q_matrix = np.asarray(q_matrix, dtype=float)
    if q_matrix.shape != probes.shape:
        raise DomainError(f"q_matrix shape {q_matrix.shape} != probes {probes.shape}")
    dm, ds = n_max + 1, 2 * f_spin + 1
    a_mat, s_mat = _probe_factor_matrices(probes, f_spin, n_max)

    ua, sa, vah = np.linalg.svd(a_mat, full_matrices=False)
    us, ss, vsh = np.linalg.svd(s_mat, full_matrices=False)
    lam = reg * sa[0] * ss[0]
    m = ua.conj().T @ q_matrix.astype(complex) @ us.conj()
    filt = (sa[:, None] * ss[None, :]) / (sa[:, None] ** 2 * ss[None, :] ** 2 + lam ** 2)
    y = filt * m
    r = vah.conj().T @ y @ vsh.conj()

    resid = float(np.linalg.norm((a_mat @ r @ s_mat.T).real - q_matrix)
                  / max(np.linalg.norm(q_matrix), 1e-300))
    rho = r.reshape(dm, dm, ds, ds).transpose(0, 2, 1, 3).reshape(dm * ds, dm * ds)
    rho = 0.5 * (rho + rho.conj().T)
    raw_trace = float(np.trace(rho).real)
    if abs(raw_trace) < 1e-12:
        raise IllPosedError("reconstructed trace vanishes; inversion is degenerate")
    rho = rho / raw_trace
    evals = np.linalg.eigvalsh(rho)[::-1].copy()
    return PseudoDensity(matrix=rho, eigenvalues=evals, residual=resid,
                         raw_trace=raw_trace, n_max=n_max, f_spin=f_spin)


# -------------------------------------------------- spherical tensor algebra

@lru_cache(maxsize=8)
def _tensor_basis(f_spin: int):
    """Orthonormal spherical tensor operators T_lm, l = 0..2F; and the
    coherent-kernel eigenvalues g_l with <n|T_lm|n> = g_l Y_lm(n)."""
    spin = build_spin_matrices(f_spin)
    dim = spin.dim
    fp = np.asarray(spin.fx) + 1j * np.asarray(spin.fy)
    fm = np.asarray(spin.fx) - 1j * np.asarray(spin.fy)
    basis = {}
    for ell in range(0, 2 * f_spin + 1):
        top = np.linalg.matrix_power(fp, ell).astype(complex)
        top /= np.linalg.norm(top)
        basis[(ell, ell)] = top
        cur = top
        for m in range(ell, -ell, -1):
            cur = (fm @ cur - cur @ fm) / math.sqrt(ell * (ell + 1) - m * (m - 1))
            basis[(ell, m - 1)] = cur
    # kernel eigenvalues from the north pole
    north = np.zeros(dim, dtype=complex)
    north[-1] = 1.0
    g = np.zeros(2 * f_spin + 1, dtype=complex)
    for ell in range(0, 2 * f_spin + 1):
        y = complex(sph_harm_y(ell, 0, 0.0, 0.0))
        g[ell] = (north.conj() @ basis[(ell, 0)] @ north) / y
    return basis, g


def _displacement_elements(etas: np.ndarray, n_max: int) -> np.ndarray:
    """<n|D(eta)|m> for every eta; shape (len(etas), n_max+1, n_max+1).

    Uses the Laguerre form with a stable upward recurrence in the lower
    index: for n >= m,
    <n|D|m> = sqrt(m!/n!) eta^(n-m) e^{-|eta|^2/2} L_m^{(n-m)}(|eta|^2),
    and <n|D|m> = <m|D(-eta)|n>^* handles n < m.
    """
    etas = np.asarray(etas, dtype=complex)
    x = np.abs(etas) ** 2
    ne = len(etas)
    dim = n_max + 1
    out = np.zeros((ne, dim, dim), dtype=complex)
    ln_fact = gammaln(np.arange(dim) + 1.0)        # ln(n!)
    for diff in range(dim):
        # L_m^{(diff)}(x) recurrence in m
        lprev = np.ones(ne)
        lcur = 1.0 + diff - x
        ms = np.arange(dim - diff)
        pref_log = 0.5 * (ln_fact[ms] - ln_fact[ms + diff])
        with np.errstate(divide="ignore"):
            ln_eta = np.where(np.abs(etas) > 0,
                              np.log(np.maximum(np.abs(etas), 1e-300)), 0.0)
        for m in range(0, dim - diff):
            n = m + diff
            lm = lprev if m == 0 else lcur
            if m >= 1:
                lnew = ((2 * m + 1 + diff - x) * lcur - (m + diff) * lprev) / (m + 1)
                lprev, lcur = lcur, lnew
            mag = np.exp(pref_log[m] + diff * ln_eta - 0.5 * x)
            val = mag * np.exp(1j * diff * np.angle(etas)) * lm
            if diff > 0:
                val = np.where(np.abs(etas) == 0, 0.0, val)
            out[:, n, m] = val
            if diff > 0:
                out[:, m, n] = np.conj(val) * (-1.0) ** diff
    return out


def reconstruct_deconvolution(q_func, frame: ReferenceFrame, f_spin: int,
                              alpha_center: complex, alpha_halfwidth: float = 5.0,
                              n_max: int = 24, n_alpha_grid: int = 56,
                              n_eta: int = 57, eta_max: float = 5.0,
                              filter_width: float = 3.2) -> PseudoDensity:
    """Two-step route: deconvolve Q to the Wigner characteristic function,
    invert over displacement operators, and invert the spin sector through
    spherical tensors.  q_func(alphas, thetas, phis) -> Q values.

    Cross-validation backend for reconstruct_pseudo_density.  The e^{|eta|^2/2}
    deconvolution amplifies any Q noise; eta_max and filter_width must stay
    matched to the input noise floor (the defaults suit exact Q values on
    these grid sizes), which bounds the attainable round-trip fidelity.
    """
    # sphere nodes: Gauss-Legendre in cos(theta) x uniform phi (exact for l <= 2F)
    n_theta = 2 * f_spin + 2
    n_phi = 4 * f_spin + 4
    xs, ws = np.polynomial.legendre.leggauss(n_theta)
    thetas = np.arccos(xs)
    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * math.pi / n_phi
    th_g = np.repeat(thetas, n_phi)
    ph_g = np.tile(phis, n_theta)
    w_g = np.repeat(ws, n_phi) * wphi

    gx = np.linspace(alpha_center.real - alpha_halfwidth,
                     alpha_center.real + alpha_halfwidth, n_alpha_grid)
    gy = np.linspace(alpha_center.imag - alpha_halfwidth,
                     alpha_center.imag + alpha_halfwidth, n_alpha_grid)
    dx = gx[1] - gx[0]
    dy = gy[1] - gy[0]
    alph = (gx[:, None] + 1j * gy[None, :]).ravel()

    na = len(alph)
    ns = len(th_g)
    q = np.empty((na, ns))
    for j in range(ns):
        q[:, j] = q_func(alph, np.full(na, th_g[j]), np.full(na, ph_g[j]))

    # spin sector: spherical-harmonic analysis, exact at these nodes
    basis, g_l = _tensor_basis(f_spin)
    fields = {}
    for ell in range(0, 2 * f_spin + 1):
        for m in range(-ell, ell + 1):
            y = sph_harm_y(ell, m, th_g, ph_g)
            fields[(ell, m)] = (q * (w_g * np.conj(y))[None, :]).sum(axis=1) / g_l[ell]

    # motional sector: chi(eta) = e^{|eta|^2/2} FT[Q](eta), then
    # A = int d^2eta/pi chi(eta) D(-eta), with a Gaussian low-pass filter
    ex = np.linspace(-eta_max, eta_max, n_eta)
    deta = ex[1] - ex[0]
    eta = (ex[:, None] + 1j * ex[None, :]).ravel()
    # circular support: the e^{|eta|^2/2} amplification makes the square
    # corners the dominant noise source
    weight = np.exp(0.5 * np.abs(eta) ** 2 - np.abs(eta) ** 2 / (2.0 * filter_width ** 2))
    weight[np.abs(eta) > eta_max] = 0.0

    dim = (n_max + 1) * (2 * f_spin + 1)
    f_mat = np.stack([fields[key] for key in sorted(fields)], axis=1)   # (A, L)
    a_ops = np.zeros((f_mat.shape[1], n_max + 1, n_max + 1), dtype=complex)
    chunk = max(1, int(2e6 / max(na, 1)))
    for lo in range(0, len(eta), chunk):
        sl = slice(lo, min(lo + chunk, len(eta)))
        phase = np.exp(eta[sl, None] * alph.conj()[None, :]
                       - eta.conj()[sl, None] * alph[None, :])          # (e, A)
        chi = (phase @ f_mat) * (dx * dy / math.pi) * weight[sl, None]  # (e, L)
        dmats = _displacement_elements(-eta[sl], n_max)                 # (e, dm, dm)
        a_ops += np.einsum("el,enm->lnm", chi, dmats) * (deta * deta / math.pi)
    rho = np.zeros((dim, dim), dtype=complex)
    for idx, key in enumerate(sorted(fields)):
        rho += np.kron(a_ops[idx], basis[key])
    rho = 0.5 * (rho + rho.conj().T)
    raw_trace = float(np.trace(rho).real)
    if abs(raw_trace) < 1e-12:
        raise IllPosedError("deconvolution trace vanished; widen grids")
    rho /= raw_trace
    evals = np.linalg.eigvalsh(rho)[::-1].copy()
    return PseudoDensity(matrix=rho, eigenvalues=evals, residual=float("nan"),
                         raw_trace=raw_trace, n_max=n_max, f_spin=f_spin)


# ------------------------------------------------------------- calibration

def coherent_product_state(params: LatticeParams, frame: ReferenceFrame,
                           grid: np.ndarray, alpha: complex, theta: float,
                           phi: float) -> SpinorWavefunction:
    """|alpha> x |n> as a grid wavefunction (for controls and round trips)."""
    length = params.domain_length
    g = motional_coherent(frame, alpha, grid, length)
    s = spin_coherent(params.f_spin, theta, phi)
    return SpinorWavefunction(grid, g[:, None] * s[None, :]).normalized()


@dataclass(frozen=True)
class NoiseFloor:
    eps_rec: float
    floors: dict


def calibrate_noise_floor(params: LatticeParams, frame: ReferenceFrame,
                          probes: ProbeSet, states: dict,
                          n_max: int = 48, reg: float = 1e-6) -> NoiseFloor:
    """Empirical reconstruction floor: run the exact-Q pipeline on benign
    quantum states; eps_rec is the largest spurious negativity observed."""
    a, t, p = probes.joint()
    floors = {}
    for name, psi in states.items():
        q = q_values(psi, frame, a, t, p).reshape(probes.shape)
        pd = reconstruct_pseudo_density(q, probes, params.f_spin, n_max=n_max, reg=reg)
        floors[name] = pd.min_eigenvalue
    eps = max(1e-12, max(-min(0.0, v) for v in floors.values()))
    return NoiseFloor(eps_rec=eps, floors=floors)
