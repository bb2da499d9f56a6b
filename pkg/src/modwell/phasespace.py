"""Joint spin (x) motional Husimi machinery.

Labels are pairs of a motional coherent amplitude alpha, defined against a
declared reference harmonic frame (omega_ref, zeta_ref), and a spin
coherent direction (theta, phi).  The Q value of a pure spinor wavepacket
is |<alpha|<n|psi>|^2; the joint measure is
(2F+1)/(4 pi) dOmega x d^2alpha/pi, under which Q integrates to one and
first moments obey <F_z> = (F+1) E_Q[n_z] and E_Q[alpha] = <a>.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .classical import flow
from .errors import DomainError, IntegrationError, TuningError
from .model import LatticeParams, lowest_band_well
from .quantum import SpinorWavefunction, fz_series, observables

__all__ = [
    "ReferenceFrame", "CoherentLabel", "Ensemble", "default_frame",
    "alpha_from_phase_point", "phase_point_from_alpha", "spin_coherent",
    "motional_coherent", "q_values", "q_value", "metropolis_sample",
    "propagate_ensemble", "mean_fz_classical", "reduced_position_density",
    "q_position_marginal", "fibonacci_sphere", "probe_alphas",
    "classical_q_values", "compare_magnetization", "MagnetizationComparison",
]


@dataclass(frozen=True)
class ReferenceFrame:
    """Harmonic frame (omega, zeta_ref) declaring the alpha <-> (zeta, p) map."""

    omega: float
    zeta_ref: float

    def __post_init__(self):
        if self.omega <= 0:
            raise DomainError("frame omega must be positive")


@dataclass(frozen=True)
class CoherentLabel:
    alpha: complex
    theta: float
    phi: float


@dataclass(frozen=True)
class Ensemble:
    """Phase-space samples (zeta, p, theta, phi) with uniform weights."""

    samples: np.ndarray = field(repr=False)      # (N, 4)
    rng_seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] != 4:
            raise DomainError("samples must have shape (N, 4)")

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def zeta(self):
        return self.samples[:, 0]

    @property
    def p(self):
        return self.samples[:, 1]

    @property
    def theta(self):
        return self.samples[:, 2]

    @property
    def phi(self):
        return self.samples[:, 3]

    @property
    def n(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.stack([st * np.cos(self.phi), st * np.sin(self.phi),
                         np.cos(self.theta)], axis=-1)

    @property
    def n_z(self):
        return np.cos(self.theta)


def default_frame(params: LatticeParams, side: str = "left") -> ReferenceFrame:
    """Harmonic fit of the chosen well of the lowest adiabatic potential."""
    well = lowest_band_well(params)
    zw = well.zeta_left if side == "left" else well.zeta_right
    return ReferenceFrame(omega=well.omega_well, zeta_ref=zw)


def alpha_from_phase_point(frame: ReferenceFrame, zeta, p):
    """alpha = sqrt(omega) dzeta / 2 + i p / sqrt(omega)."""
    rt = math.sqrt(frame.omega)
    return 0.5 * rt * (np.asarray(zeta) - frame.zeta_ref) + 1j * np.asarray(p) / rt


def phase_point_from_alpha(frame: ReferenceFrame, alpha):
    alpha = np.asarray(alpha, dtype=complex)
    rt = math.sqrt(frame.omega)
    return frame.zeta_ref + 2.0 * alpha.real / rt, rt * alpha.imag


def spin_coherent(f_spin: int, theta, phi) -> np.ndarray:
    """Components of |n(theta, phi)> with <n|f|n> = F n; shape (..., 2F+1).

    Built as exp(-i phi fz) exp(-i theta fy) |m=+F>, whose closed form is
    binomial: c_m = sqrt(C(2F, F+m)) cos(t/2)^(F+m) sin(t/2)^(F-m) e^(-i m phi).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    f = int(f_spin)
    m = np.arange(-f, f + 1, dtype=float)
    ln_binom = (gammaln(2 * f + 1) - gammaln(f + m + 1) - gammaln(f - m + 1))
    half = theta[..., None] / 2.0
    with np.errstate(divide="ignore"):
        ln_c = np.log(np.maximum(np.cos(half), 1e-300)) * (f + m)
        ln_s = np.log(np.maximum(np.sin(half), 1e-300)) * (f - m)
    mag = np.exp(0.5 * ln_binom + ln_c + ln_s)
    return mag * np.exp(-1j * m * phi[..., None])


def motional_coherent(frame: ReferenceFrame, alpha: complex, grid: np.ndarray,
                      domain_length: float, mass_tol: float = 1e-6) -> np.ndarray:
    """Grid samples of <zeta|alpha> with minimum-image wrapping.

    Warns when the Gaussian is so wide or so far displaced that wrapping
    moves more than mass_tol of its mass.
    """
    zc, pc = phase_point_from_alpha(frame, alpha)
    s2 = 2.0 / frame.omega
    d = (np.asarray(grid) - zc + domain_length / 2.0) % domain_length - domain_length / 2.0
    g = np.exp(-d ** 2 / (2.0 * s2) + 1j * pc * d)
    dz = grid[1] - grid[0]
    norm = math.sqrt(float(np.sum(np.abs(g) ** 2) * dz))
    edge = domain_length / 2.0
    tail = math.erfc(edge / math.sqrt(2.0 * s2))
    if tail > mass_tol:
        warnings.warn(f"coherent state wraps the domain: tail mass {tail:.2e}",
                      stacklevel=2)
    return g / norm


def q_values(psi: SpinorWavefunction, frame: ReferenceFrame, alphas, thetas,
             phis, f_spin: int | None = None) -> np.ndarray:
    """Q = |<alpha|<n|psi>|^2 for batched labels (broadcast 1-D arrays)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if not (len(alphas) == len(thetas) == len(phis)):
        raise DomainError("label arrays must have equal length")
    f = (psi.n_spin - 1) // 2 if f_spin is None else f_spin
    length = float(psi.grid[-1] - psi.grid[0] + (psi.grid[1] - psi.grid[0]))
    dz = psi.dz
    # gaussians: (A, N); unique alphas are not deduplicated (caller batches)
    zc, pc = phase_point_from_alpha(frame, alphas)
    s2 = 2.0 / frame.omega
    d = (psi.grid[None, :] - zc[:, None] + length / 2.0) % length - length / 2.0
    g = np.exp(-d ** 2 / (2.0 * s2) + 1j * pc[:, None] * d)
    g /= np.sqrt(np.sum(np.abs(g) ** 2, axis=1) * dz)[:, None]
    proj = (g.conj() @ psi.amps) * dz                 # (A, 2F+1)
    spins = spin_coherent(f, thetas, phis)            # (A, 2F+1)
    ov = np.einsum("am,am->a", spins.conj(), proj)
    return np.abs(ov) ** 2


def q_value(psi: SpinorWavefunction, frame: ReferenceFrame,
            label: CoherentLabel) -> float:
    """Q at a single joint coherent label."""
    return float(q_values(psi, frame, [label.alpha], [label.theta], [label.phi])[0])


# ------------------------------------------------------------------ sampling

def _default_widths(frame: ReferenceFrame):
    s_z = math.sqrt(1.0 / frame.omega)       # coherent position width
    s_p = math.sqrt(frame.omega) / 2.0
    return np.array([0.7 * s_z, 0.7 * s_p, 0.12, 0.35])   # zeta, p, cos(theta), phi


def _lag1(x: np.ndarray) -> float:
    x = x - x.mean()
    den = float(np.sum(x * x))
    if den == 0:
        return 0.0
    return float(np.sum(x[:-1] * x[1:]) / den)


def metropolis_sample(params: LatticeParams, psi: SpinorWavefunction, count: int,
                      seed: int, frame: ReferenceFrame | None = None,
                      proposal_widths=None, burn_in: int = 10_000,
                      chains: int = 32, target_lag1: float = 0.1,
                      max_thin: int = 64, auto_tune: int = 0) -> Ensemble:
    """Random-walk Metropolis targeting the Q density of psi.

    Walks in (zeta, p, cos theta, phi), whose flat measure matches the Q
    integration measure, with chains independent vectorized walkers.
    Burn-in runs burn_in steps; the thinning interval is chosen from a
    pilot run so that the lag-1 autocorrelation of n_z (after thinning)
    drops below target_lag1.  Acceptance outside [0.1, 0.6] raises
    TuningError with suggested widths.
    """
    if count < 1000:
        raise DomainError("count must be at least 1000")
    if frame is None:
        frame = default_frame(params)
    widths = _default_widths(frame) if proposal_widths is None else \
        np.asarray(proposal_widths, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))

    obs = observables(params, psi)
    x = np.empty((chains, 4))
    x[:, 0] = obs["zeta_mean"] + 0.05 * rng.standard_normal(chains)
    x[:, 1] = 0.05 * rng.standard_normal(chains)
    x[:, 2] = np.clip(obs["fz"] / params.f_spin + 0.05 * rng.standard_normal(chains),
                      -0.99, 0.99)
    x[:, 3] = rng.uniform(0.0, 2.0 * math.pi, chains)

    def q_of(xarr):
        theta = np.arccos(np.clip(xarr[:, 2], -1.0, 1.0))
        al = alpha_from_phase_point(frame, xarr[:, 0], xarr[:, 1])
        return q_values(psi, frame, al, theta, xarr[:, 3])

    q = q_of(x)
    accepted = 0
    proposed = 0

    def sweep(x, q, n_steps, collect_every=0, collector=None, count_acc=False):
        nonlocal accepted, proposed
        for k in range(n_steps):
            prop = x + widths[None, :] * rng.standard_normal((chains, 4))
            prop[:, 3] %= 2.0 * math.pi
            ok = np.abs(prop[:, 2]) <= 1.0
            qp = np.zeros(chains)
            if np.any(ok):
                qp[ok] = q_of(prop[ok])
            accept = rng.uniform(size=chains) * q < qp
            x[accept] = prop[accept]
            q[accept] = qp[accept]
            if count_acc:
                accepted += int(np.sum(accept))
                proposed += chains
            if collect_every and (k + 1) % collect_every == 0 and collector is not None:
                collector.append(x.copy())
        return x, q

    x, q = sweep(x, q, burn_in, count_acc=True)
    acc_rate = accepted / max(proposed, 1)
    if not 0.1 <= acc_rate <= 0.6:
        scale = (acc_rate / 0.35) ** 0.7 if acc_rate > 0 else 0.2
        sug = widths * max(scale, 0.05)
        if auto_tune > 0:
            return metropolis_sample(params, psi, count, seed, frame=frame,
                                     proposal_widths=sug, burn_in=burn_in,
                                     chains=chains, target_lag1=target_lag1,
                                     max_thin=max_thin, auto_tune=auto_tune - 1)
        raise TuningError(
            f"acceptance rate {acc_rate:.3f} outside [0.1, 0.6]; "
            f"try proposal_widths ~ {np.array2string(sug, precision=4)}")

    # pilot run to choose the thinning interval from the n_z autocorrelation
    # function; aim at half the target for margin against pilot noise
    pilot: list[np.ndarray] = []
    x, q = sweep(x, q, 1600, collect_every=1, collector=pilot)
    nz_pilot = np.array([p[:, 2] for p in pilot])        # (steps, chains)
    nz_pilot = nz_pilot - nz_pilot.mean(axis=0, keepdims=True)
    var = np.mean(nz_pilot ** 2, axis=0)
    thin = max_thin
    for k in range(1, max_thin + 1):
        rho = np.mean(np.mean(nz_pilot[:-k] * nz_pilot[k:], axis=0)
                      / np.maximum(var, 1e-300))
        if rho < 0.5 * target_lag1:
            thin = k
            break

    per_chain = int(math.ceil(count / chains))
    kept: list[np.ndarray] = []
    x, q = sweep(x, q, per_chain * thin, collect_every=thin, collector=kept)
    # kept stacks (chains, 4) snapshots; chain series sit in fixed columns
    nz_kept = np.array([arr[:, 2] for arr in kept])
    rho_kept = float(np.mean([_lag1(nz_kept[:, c]) for c in range(chains)]))
    samples = np.array(kept).reshape(per_chain * chains, 4)[:count]
    ens = Ensemble(samples=np.column_stack([samples[:, 0], samples[:, 1],
                                            np.arccos(np.clip(samples[:, 2], -1, 1)),
                                            samples[:, 3] % (2 * math.pi)]),
                   rng_seed=int(seed),
                   provenance={"burn_in": burn_in, "thinning": thin,
                               "acceptance": acc_rate, "chains": chains,
                               "lag1_nz": rho_kept})
    return ens


def propagate_ensemble(params: LatticeParams, ensemble: Ensemble, tau: float,
                       dtau: float = 2.5e-4, order: int = 4,
                       energy_tol: float = 1e-8) -> Ensemble:
    """Transport every sample along the classical flow for time tau."""
    from .classical import energy as h_energy

    if tau == 0.0:
        return ensemble
    n = ensemble.n
    e0 = h_energy(params, ensemble.zeta, ensemble.p, n)
    z, p, nv = flow(params, ensemble.zeta.copy(), ensemble.p.copy(), n.copy(),
                    tau, dtau, order=order)
    e1 = h_energy(params, z, p, nv)
    # samples can sit near H = 0, so normalize by the ensemble energy scale
    scale = max(float(np.max(np.abs(e0))), 1e-30)
    drift = float(np.max(np.abs(e1 - e0))) / scale
    if drift > energy_tol:
        raise IntegrationError(
            f"per-sample energy drift {drift:.2e} exceeds {energy_tol:.1e}; reduce dtau")
    theta = np.arccos(np.clip(nv[:, 2], -1.0, 1.0))
    phi = np.arctan2(nv[:, 1], nv[:, 0]) % (2.0 * math.pi)
    prov = dict(ensemble.provenance)
    prov["transported_tau"] = prov.get("transported_tau", 0.0) + tau
    return Ensemble(samples=np.column_stack([z, p, theta, phi]),
                    rng_seed=ensemble.rng_seed, provenance=prov)


def mean_fz_classical(ensemble: Ensemble, f_spin: int, sign: float = 1.0):
    """Classical magnetization estimate sign*(F+1)*mean(n_z) and its MC error."""
    nz = ensemble.n_z
    n = len(nz)
    rho = float(np.clip(ensemble.provenance.get("lag1_nz", 0.0), 0.0, 0.95))
    n_eff = n * (1.0 - rho) / (1.0 + rho)
    value = sign * (f_spin + 1.0) * float(np.mean(nz))
    err = (f_spin + 1.0) * float(np.std(nz)) / math.sqrt(max(n_eff, 1.0))
    return value, err


# ------------------------------------------------------------- density views

def reduced_position_density(source, params: LatticeParams, bins: int = 128):
    """(centers, density) of position; exact marginal for wavefunctions,
    histogram estimate for ensembles.  Density integrates to one."""
    length = params.domain_length
    if isinstance(source, SpinorWavefunction):
        dens = source.position_density()
        dens = dens / (np.sum(dens) * source.dz)
        return source.grid.copy(), dens
    if isinstance(source, Ensemble):
        z = (source.zeta + length / 2.0) % length - length / 2.0
        hist, edges = np.histogram(z, bins=bins, range=(-length / 2.0, length / 2.0))
        centers = 0.5 * (edges[:-1] + edges[1:])
        dens = hist / (len(z) * (edges[1] - edges[0]))
        return centers, dens
    raise DomainError("source must be a SpinorWavefunction or an Ensemble")


def q_position_marginal(psi: SpinorWavefunction, frame: ReferenceFrame,
                        params: LatticeParams):
    """Position marginal of the joint Q: |psi|^2 convolved with the
    coherent-state position density (variance 1/omega), periodic."""
    dens = psi.position_density()
    dens = dens / (np.sum(dens) * psi.dz)
    length = params.domain_length
    n = len(psi.grid)
    x = (psi.grid - psi.grid[0] + length / 2.0) % length - length / 2.0
    kern = np.exp(-x ** 2 * frame.omega / 2.0)
    kern /= np.sum(kern) * psi.dz
    conv = np.fft.ifft(np.fft.fft(dens) * np.fft.fft(kern)).real * psi.dz
    return psi.grid.copy(), conv / (np.sum(conv) * psi.dz)


# ----------------------------------------------------------- probe utilities

def fibonacci_sphere(count: int) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) arrays of an area-uniform Fibonacci sphere set."""
    i = np.arange(count)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / count
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = (2.0 * math.pi * i / golden) % (2.0 * math.pi)
    return theta, phi


def probe_alphas(samples_alpha: np.ndarray, n_side: int = 12,
                 span: float = 3.0) -> np.ndarray:
    """n_side^2 alpha probes on a rectangular grid covering mean +- span*std."""
    re = samples_alpha.real
    im = samples_alpha.imag
    res = np.linspace(re.mean() - span * re.std(), re.mean() + span * re.std(), n_side)
    ims = np.linspace(im.mean() - span * im.std(), im.mean() + span * im.std(), n_side)
    return (res[:, None] + 1j * ims[None, :]).ravel()


def classical_q_values(params: LatticeParams, psi0: SpinorWavefunction,
                       frame: ReferenceFrame, alphas, thetas, phis, tau: float,
                       dtau: float = 2.5e-4) -> np.ndarray:
    """Classically transported Q at probe labels, by Liouville pullback.

    Q_class(t, x) = Q(0, flow_{-t}(x)); each probe phase point is carried
    backward and the initial Q is evaluated there exactly (no sampling
    noise).  The flow preserves the joint measure, so no Jacobian enters.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    z, p = phase_point_from_alpha(frame, alphas)
    st = np.sin(thetas)
    n = np.stack([st * np.cos(phis), st * np.sin(phis), np.cos(thetas)], axis=-1)
    if abs(tau) > 0:
        z, p, n = flow(params, z, p, n, -tau, dtau, order=4)
    al = alpha_from_phase_point(frame, z, p)
    th = np.arccos(np.clip(n[:, 2], -1.0, 1.0))
    ph = np.arctan2(n[:, 1], n[:, 0])
    return q_values(psi0, frame, al, th, ph)


# -------------------------------------------------- magnetization comparison

@dataclass(frozen=True)
class MagnetizationComparison:
    taus: np.ndarray
    fz_quantum: np.ndarray
    fz_classical: np.ndarray
    mc_err: np.ndarray
    divergence_time: float | None
    sign: float


def compare_magnetization(params: LatticeParams, tau_grid, ensemble_size: int,
                          seed: int, dtau_quantum: float = 2e-5,
                          dtau_classical: float = 5e-4,
                          psi0: SpinorWavefunction | None = None,
                          frame: ReferenceFrame | None = None,
                          persist: int = 2,
                          chunk: int = 16384) -> MagnetizationComparison:
    """Quantum vs classical-ensemble <F_z>(tau) from the same initial state.

    The classical estimator sign is fixed once at tau = 0 by matching the
    quantum value.  The divergence time is the first tau from which
    |difference| > 3 sigma_MC holds for persist consecutive grid points.
    Samples are transported in cache-sized chunks; the reduction order is
    fixed by the chunk partition, so results are reproducible.
    """
    from .classical import energy as h_energy
    from .errors import IntegrationError
    from .quantum import initial_state

    tau_grid = np.asarray(tau_grid, dtype=float)
    if psi0 is None:
        psi0 = initial_state(params)
    if frame is None:
        frame = default_frame(params)
    fz_q = fz_series(params, psi0, tau_grid, dtau=dtau_quantum)

    ens = metropolis_sample(params, psi0, ensemble_size, seed, frame=frame,
                            auto_tune=3)
    raw0 = (params.f_spin + 1.0) * float(np.mean(ens.n_z))
    sign = 1.0 if raw0 * fz_q[0] >= 0 else -1.0

    nz_sum = np.zeros(len(tau_grid))
    nz_sq = np.zeros(len(tau_grid))
    n_all = ens.n
    e_scale = float(np.max(np.abs(h_energy(params, ens.zeta, ens.p, n_all))))
    worst_drift = 0.0
    for lo in range(0, ens.size, chunk):
        sl = slice(lo, min(lo + chunk, ens.size))
        z = ens.zeta[sl].copy()
        p = ens.p[sl].copy()
        n = n_all[sl].copy()
        e0 = h_energy(params, z, p, n)
        done = 0.0
        for i, t in enumerate(tau_grid):
            if t > done:
                z, p, n = flow(params, z, p, n, t - done, dtau_classical)
                done = t
            nz_sum[i] += float(np.sum(n[:, 2]))
            nz_sq[i] += float(np.sum(n[:, 2] ** 2))
        worst_drift = max(worst_drift, float(
            np.max(np.abs(h_energy(params, z, p, n) - e0))) / e_scale)
    if worst_drift > 1e-8:
        raise IntegrationError(
            f"ensemble energy drift {worst_drift:.2e} exceeds 1e-8 of the "
            "energy scale; reduce dtau_classical")

    count = ens.size
    mean_nz = nz_sum / count
    std_nz = np.sqrt(np.maximum(nz_sq / count - mean_nz ** 2, 0.0))
    rho = float(np.clip(ens.provenance.get("lag1_nz", 0.0), 0.0, 0.95))
    n_eff = count * (1.0 - rho) / (1.0 + rho)
    fz_c = sign * (params.f_spin + 1.0) * mean_nz
    errs = (params.f_spin + 1.0) * std_nz / math.sqrt(max(n_eff, 1.0))

    apart = np.abs(fz_q - fz_c) > 3.0 * errs
    div_time = None
    for i in range(len(tau_grid) - persist + 1):
        if np.all(apart[i:i + persist]):
            div_time = float(tau_grid[i])
            break
    return MagnetizationComparison(taus=tau_grid, fz_quantum=fz_q,
                                   fz_classical=fz_c, mc_err=errs,
                                   divergence_time=div_time, sign=sign)
