import math

import numpy as np
import pytest
from scipy.stats import chisquare

from modwell import (DomainError, LatticeParams, TuningError,
                     alpha_from_phase_point, build_spin_matrices,
                     classical_q_values, compare_magnetization, default_frame,
                     full_hamiltonian_levels, initial_state, mean_fz_classical,
                     metropolis_sample, observables, phase_point_from_alpha,
                     propagate_ensemble, q_position_marginal, q_value,
                     q_values, reduced_position_density, spin_coherent,
                     zeta_grid)
from modwell.phasespace import CoherentLabel, Ensemble, ReferenceFrame
from modwell.reconstruct import coherent_product_state


@pytest.fixture(scope="module")
def frame(defaults):
    return default_frame(defaults)


@pytest.fixture(scope="module")
def stretched(defaults, frame, psi0):
    """Coherent product state |alpha=0> x |m=+F> at the reference well."""
    return coherent_product_state(defaults, frame, psi0.grid, 0.0 + 0.0j,
                                  0.0, 0.0)


# --------------------------------------------------------------- Q values

def test_q_self_overlap_is_maximal(defaults, frame, psi0):
    label = CoherentLabel(alpha=0.35 + 0.2j, theta=1.1, phi=0.6)
    psi = coherent_product_state(defaults, frame, psi0.grid, label.alpha,
                                 label.theta, label.phi)
    assert abs(q_value(psi, frame, label) - 1.0) < 1e-6
    # any other label scores strictly less
    other = CoherentLabel(alpha=1.2 - 0.4j, theta=0.4, phi=2.0)
    assert q_value(psi, frame, other) < 1.0


def test_q_spin_factor_matches_closed_form(defaults, frame, stretched):
    thetas = np.linspace(0.0, math.pi, 9)
    q = q_values(stretched, frame, np.zeros(9, complex), thetas, np.zeros(9))
    expect = ((1.0 + np.cos(thetas)) / 2.0) ** 8
    assert np.max(np.abs(q - expect)) < 1e-9
    assert q[-1] < 1e-12                      # n = -z against m = +F


def test_q_normalization_by_quadrature(defaults, frame, psi0):
    # joint measure (2F+1)/(4pi) dOmega x d^2alpha/pi integrates Q to 1
    f = defaults.f_spin
    a0 = np.mean(alpha_from_phase_point(frame, observables(defaults, psi0)["zeta_mean"], 0.0))
    gx = np.linspace(a0.real - 4.5, a0.real + 4.5, 30)
    gy = np.linspace(a0.imag - 4.5, a0.imag + 4.5, 30)
    da = (gx[1] - gx[0]) * (gy[1] - gy[0])
    alph = (gx[:, None] + 1j * gy[None, :]).ravel()
    xs, ws = np.polynomial.legendre.leggauss(10)
    thetas = np.arccos(xs)
    phis = 2.0 * math.pi * np.arange(18) / 18.0
    total = 0.0
    for th, w in zip(thetas, ws):
        for ph in phis:
            qv = q_values(psi0, frame, alph, np.full(len(alph), th),
                          np.full(len(alph), ph))
            total += w * (2 * math.pi / 18) * np.sum(qv) * da
    total *= (2 * f + 1) / (4 * math.pi) / math.pi
    assert abs(total - 1.0) < 1e-3


def test_first_moment_identities(defaults, frame, rng, psi0):
    # (F+1) E_Q[n_z] = <F_z> and E_Q[alpha] = <a>, to quadrature accuracy
    from tests_helpers_random import random_smooth_state

    f = defaults.f_spin
    xs, ws = np.polynomial.legendre.leggauss(12)
    thetas = np.arccos(xs)
    nphi = 20
    phis = 2.0 * math.pi * np.arange(nphi) / nphi
    for _ in range(5):
        psi = random_smooth_state(defaults, rng)
        # localize away from the periodic seam: the alpha <-> phase-point
        # dictionary is a plane-phase-space construction
        envelope = np.exp(-(psi.grid - frame.zeta_ref) ** 2 / (2 * 0.28 ** 2))
        psi = type(psi)(psi.grid, psi.amps * envelope[:, None]).normalized()
        obs = observables(defaults, psi)
        # exact motional reduction: sum_i dz psi(z) psi(z)^dag is the spin RDM
        rho_s = np.einsum("im,in->mn", psi.amps, psi.amps.conj()) * psi.dz
        total = 0.0
        for th, w in zip(thetas, ws):
            for ph in phis:
                c = spin_coherent(f, th, ph)
                qn = float(np.real(c.conj() @ rho_s @ c))
                total += w * (2 * math.pi / nphi) * math.cos(th) * qn
        e_nz = total * (2 * f + 1) / (4 * math.pi)
        assert abs((f + 1) * e_nz - obs["fz"]) < 1e-6
        # motional first moment via the ladder operator on the grid
        k = momentum_grid_local(psi)
        rt = math.sqrt(frame.omega)
        a_psi = (0.5 * rt * (psi.grid[:, None] - frame.zeta_ref) * psi.amps
                 + 1j * np.fft.ifft(k[:, None] * np.fft.fft(psi.amps, axis=0),
                                    axis=0) / rt)
        a_mean = complex(np.sum(psi.amps.conj() * a_psi) * psi.dz)
        gx = np.linspace(a_mean.real - 5.5, a_mean.real + 5.5, 36)
        gy = np.linspace(a_mean.imag - 5.5, a_mean.imag + 5.5, 36)
        alph = (gx[:, None] + 1j * gy[None, :]).ravel()
        da = (gx[1] - gx[0]) * (gy[1] - gy[0])
        # motional marginal: project out the spin by summing component Q's
        gsq = _motional_q(psi, frame, alph)
        e_alpha = np.sum(alph * gsq) * da / math.pi
        assert abs(e_alpha - a_mean) < 2e-3
    assert True


def momentum_grid_local(psi):
    n = len(psi.grid)
    dz = psi.grid[1] - psi.grid[0]
    return 2.0 * math.pi * np.fft.fftfreq(n, d=dz)


def _motional_q(psi, frame, alphas):
    """Spin-traced motional Husimi sum_m |<alpha|psi_m>|^2."""
    length = float(psi.grid[-1] - psi.grid[0] + (psi.grid[1] - psi.grid[0]))
    zc, pc = phase_point_from_alpha(frame, alphas)
    s2 = 2.0 / frame.omega
    d = (psi.grid[None, :] - zc[:, None] + length / 2.0) % length - length / 2.0
    g = np.exp(-d ** 2 / (2.0 * s2) + 1j * pc[:, None] * d)
    g /= np.sqrt(np.sum(np.abs(g) ** 2, axis=1) * psi.dz)[:, None]
    proj = (g.conj() @ psi.amps) * psi.dz
    return np.sum(np.abs(proj) ** 2, axis=1)


# --------------------------------------------------------------- sampling

@pytest.fixture(scope="module")
def stretched_samples(defaults, stretched):
    return metropolis_sample(defaults, stretched, 20000, seed=42)


def test_metropolis_stretched_state_moments(defaults, frame, stretched,
                                            stretched_samples):
    ens = stretched_samples
    f = defaults.f_spin
    # Beta-integral identity: <n_z>_Q = F/(F+1) for the stretched state
    target = f / (f + 1.0)
    err = np.std(ens.n_z) / math.sqrt(len(ens.n_z) / 4.0)   # conservative
    assert abs(np.mean(ens.n_z) - target) < 3.0 * max(err, 1e-3)
    assert abs(np.mean(ens.zeta) - frame.zeta_ref) < 3.0 * np.std(ens.zeta) / 50.0
    assert ens.provenance["thinning"] >= 1
    assert 0.1 <= ens.provenance["acceptance"] <= 0.6
    assert abs(ens.provenance["lag1_nz"]) < 0.25


def test_metropolis_seeds_agree(defaults, stretched, stretched_samples):
    ens2 = metropolis_sample(defaults, stretched, 20000, seed=43)
    m1, m2 = np.mean(stretched_samples.n_z), np.mean(ens2.n_z)
    s = np.std(stretched_samples.n_z) / math.sqrt(len(ens2.n_z) / 4.0)
    assert abs(m1 - m2) < 3.0 * math.sqrt(2.0) * max(s, 1e-3)


def test_metropolis_error_scaling(defaults, stretched, stretched_samples):
    val1, err1 = mean_fz_classical(stretched_samples, defaults.f_spin)
    small = Ensemble(samples=stretched_samples.samples[:5000],
                     rng_seed=stretched_samples.rng_seed,
                     provenance=stretched_samples.provenance)
    val2, err2 = mean_fz_classical(small, defaults.f_spin)
    assert 0.4 < err1 / err2 < 0.6            # 1/sqrt(N)
    assert abs(val1 - 4.0) < 3.0 * err1


def test_metropolis_reproducible_and_validated(defaults, stretched,
                                               stretched_samples):
    again = metropolis_sample(defaults, stretched, 20000, seed=42)
    assert np.array_equal(again.samples, stretched_samples.samples)
    with pytest.raises(DomainError):
        metropolis_sample(defaults, stretched, 100, seed=1)
    with pytest.raises(TuningError):
        metropolis_sample(defaults, stretched, 1000, seed=1,
                          proposal_widths=(1e-5, 1e-5, 1e-5, 1e-5),
                          burn_in=500)


def test_metropolis_detailed_balance_chi2(defaults, stretched,
                                          stretched_samples):
    # marginal over the sphere: expected occupancy of (cos theta, phi) bins
    # from direct Q integrals vs sampled counts
    f = defaults.f_spin
    rho_s = np.einsum("im,in->mn", stretched.amps, stretched.amps.conj()) \
        * stretched.dz
    nu, nphi = 6, 6
    u_edges = np.linspace(-1, 1, nu + 1)
    p_edges = np.linspace(0, 2 * math.pi, nphi + 1)
    expected = np.zeros((nu, nphi))
    fine = 6
    for i in range(nu):
        for j in range(nphi):
            us = np.linspace(u_edges[i], u_edges[i + 1], fine + 1)
            us = 0.5 * (us[1:] + us[:-1])
            ps = np.linspace(p_edges[j], p_edges[j + 1], fine + 1)
            ps = 0.5 * (ps[1:] + ps[:-1])
            acc = 0.0
            for u in us:
                th = math.acos(u)
                c = spin_coherent(f, th, ps)
                acc += float(np.sum(np.real(np.einsum(
                    "am,mn,an->a", c.conj(), rho_s, c))))
            expected[i, j] = acc * (2 / nu) * (2 * math.pi / nphi) / fine ** 2 \
                * (2 * f + 1) / (4 * math.pi)
    expected /= expected.sum()
    ens = stretched_samples
    # chi^2 assumes independent draws; subsample the thinned chains further
    counts, _, _ = np.histogram2d(ens.n_z[::4], ens.phi[::4],
                                  bins=[u_edges, p_edges])
    keep = expected.ravel() * counts.sum() > 8
    obs = counts.ravel()[keep]
    exp = expected.ravel()[keep]
    exp = exp / exp.sum() * obs.sum()
    stat, p = chisquare(obs, exp)
    assert p > 0.01


# -------------------------------------------------------------- transport

def test_propagate_identity_and_energy(defaults, stretched_samples):
    ens = stretched_samples
    same = propagate_ensemble(defaults, ens, 0.0)
    assert np.array_equal(same.samples, ens.samples)
    moved = propagate_ensemble(defaults, ens, 0.4, dtau=2.5e-4)
    from modwell.classical import energy as h_energy

    e0 = h_energy(defaults, ens.zeta, ens.p, ens.n)
    e1 = h_energy(defaults, moved.zeta, moved.p, moved.n)
    assert np.max(np.abs(e1 - e0)) < 1e-8 * np.max(np.abs(e0))


def test_propagate_conserves_nz_histogram_without_transverse_field(rng):
    p0 = LatticeParams(u0=-40.0, theta_l=1.1, bx=0.0)
    z = rng.uniform(-1.0, 1.0, 4000)
    mom = rng.uniform(-3, 3, 4000)
    th = np.arccos(rng.uniform(-1, 1, 4000))
    ph = rng.uniform(0, 2 * math.pi, 4000)
    ens = Ensemble(samples=np.column_stack([z, mom, th, ph]), rng_seed=0)
    moved = propagate_ensemble(p0, ens, 2.0, dtau=5e-4)
    assert np.max(np.abs(np.sort(moved.n_z) - np.sort(ens.n_z))) < 1e-11


def test_mean_fz_equatorial_state(defaults, frame, psi0):
    psi = coherent_product_state(defaults, frame, psi0.grid, 0.0,
                                 math.pi / 2, 0.3)
    ens = metropolis_sample(defaults, psi, 12000, seed=9, auto_tune=2)
    val, err = mean_fz_classical(ens, defaults.f_spin)
    assert abs(val) < 3.0 * err + 0.02


# --------------------------------------------------------------- densities

def test_reduced_density_symmetric_eigenstate(defaults):
    _, states = full_hamiltonian_levels(defaults, n_basis=128, n_levels=1,
                                        return_states=True)
    grid, dens = reduced_position_density(states[0].normalized(), defaults)
    flipped = dens[np.r_[0, len(dens) - 1:0:-1]]
    assert np.max(np.abs(dens - flipped)) < 1e-10 * dens.max()


def test_ensemble_density_matches_q_marginal(defaults, frame, psi0,
                                             stretched, stretched_samples):
    centers, hist = reduced_position_density(stretched_samples, defaults,
                                             bins=64)
    grid, qmarg = q_position_marginal(stretched, frame, defaults)
    qm = np.interp(centers, grid, qmarg)
    l1 = float(np.sum(np.abs(hist - qm)) * (centers[1] - centers[0]))
    assert l1 < 0.05


# ------------------------------------------------------- classical pullback

def test_classical_q_matches_direct_at_zero_time(defaults, frame, psi0, rng):
    alph = (rng.standard_normal(40) + 1j * rng.standard_normal(40)) * 0.8
    th = np.arccos(rng.uniform(-1, 1, 40))
    ph = rng.uniform(0, 2 * math.pi, 40)
    direct = q_values(psi0, frame, alph, th, ph)
    pulled = classical_q_values(defaults, psi0, frame, alph, th, ph, 0.0)
    assert np.max(np.abs(direct - pulled)) < 1e-12


def test_classical_q_liouville_consistency(defaults, frame, psi0):
    # pull back a label by +tau then transport the matching phase point
    # forward: the Q value must be the initial one at the original label
    tau = 0.21
    label_alpha = np.array([0.4 + 0.3j])
    th = np.array([0.9])
    ph = np.array([1.3])
    q_t = classical_q_values(defaults, psi0, frame, label_alpha, th, ph, tau,
                             dtau=1e-4)
    from modwell.classical import flow

    z, p = phase_point_from_alpha(frame, label_alpha)
    st = np.sin(th)
    n = np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)
    zb, pb, nb = flow(defaults, z, p, n, -tau, 1e-4)
    alb = alpha_from_phase_point(frame, zb, pb)
    q_0 = q_values(psi0, frame, alb, np.arccos(np.clip(nb[:, 2], -1, 1)),
                   np.arctan2(nb[:, 1], nb[:, 0]))
    assert abs(q_t[0] - q_0[0]) < 1e-12


# ------------------------------------------------------------- comparison

def test_compare_magnetization_start_agrees(defaults):
    taus = np.array([0.0, 0.04])
    comp = compare_magnetization(defaults, taus, 4000, seed=5,
                                 dtau_quantum=4e-5, dtau_classical=2.5e-4)
    assert abs(comp.fz_classical[0] - comp.fz_quantum[0]) < 3.0 * comp.mc_err[0]
    assert comp.sign in (-1.0, 1.0)
