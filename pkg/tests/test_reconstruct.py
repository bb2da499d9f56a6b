import math

import numpy as np
import pytest

from modwell import (IllPosedError, LatticeParams, build_probes,
                     calibrate_noise_floor, coherent_product_state,
                     fock_coherent, q_values, reconstruct_deconvolution,
                     reconstruct_pseudo_density, spin_coherent)
from modwell.phasespace import ReferenceFrame
from modwell.reconstruct import ProbeSet, _tensor_basis


@pytest.fixture(scope="module")
def small_setup():
    """F = 2 toy problem: cheap but exercises every code path."""
    params = LatticeParams(u0=-146.0, theta_l=math.radians(74.0), bx=107.514,
                           f_spin=2)
    frame = ReferenceFrame(omega=28.0, zeta_ref=-0.45)
    grid = -math.pi / 2 + math.pi * np.arange(512) / 512
    rng = np.random.default_rng(12)
    samples = 0.6 + 0.3j + 0.8 * (rng.standard_normal(300)
                                  + 1j * rng.standard_normal(300))
    probes = build_probes(frame, samples, n_alpha_side=10, n_spin=40)
    return params, frame, grid, probes


def vec_for(alpha, theta, phi, f_spin, n_max):
    v = np.kron(fock_coherent(np.array([alpha]), n_max)[0],
                spin_coherent(f_spin, theta, phi))
    return v / np.linalg.norm(v)


def test_probe_set_geometry(small_setup):
    _, _, _, probes = small_setup
    assert probes.shape == (100, 40)
    a, t, p = probes.joint()
    assert len(a) == 4000
    # Fibonacci sphere covers both hemispheres
    assert np.min(np.cos(probes.thetas)) < -0.9
    assert np.max(np.cos(probes.thetas)) > 0.9


def test_fock_coherent_normalization():
    c = fock_coherent(np.array([0.0, 0.8 + 0.4j, 2.0j]), 40)
    assert abs(c[0, 0] - 1.0) < 1e-15
    assert np.max(np.abs(np.sum(np.abs(c) ** 2, axis=1) - 1.0)) < 1e-10


def test_round_trip_coherent_state(small_setup):
    params, frame, grid, probes = small_setup
    alpha0, th0, ph0 = 0.8 + 0.5j, 1.1, 0.7
    psi = coherent_product_state(params, frame, grid, alpha0, th0, ph0)
    a, t, p = probes.joint()
    q = q_values(psi, frame, a, t, p).reshape(probes.shape)
    pd = reconstruct_pseudo_density(q, probes, 2, n_max=30, reg=1e-6)
    vec = vec_for(alpha0, th0, ph0, 2, 30)
    fidelity = float(np.real(vec.conj() @ pd.matrix @ vec))
    assert fidelity > 0.99
    assert pd.residual < 1e-6
    assert abs(pd.raw_trace - 1.0) < 0.05
    assert abs(np.trace(pd.matrix).real - 1.0) < 1e-8
    assert np.max(np.abs(pd.matrix - pd.matrix.conj().T)) < 1e-12
    assert pd.min_eigenvalue > -0.02


def test_reconstruction_is_linear(small_setup):
    params, frame, grid, probes = small_setup
    psi1 = coherent_product_state(params, frame, grid, 0.5, 0.9, 0.3)
    psi2 = coherent_product_state(params, frame, grid, -0.4 + 0.6j, 2.0, 4.0)
    a, t, p = probes.joint()
    q1 = q_values(psi1, frame, a, t, p).reshape(probes.shape)
    q2 = q_values(psi2, frame, a, t, p).reshape(probes.shape)
    w = 0.37

    def raw(q):
        pd = reconstruct_pseudo_density(q, probes, 2, n_max=30, reg=1e-6)
        return pd.matrix * pd.raw_trace          # undo trace normalization

    mixed = raw(w * q1 + (1 - w) * q2)
    combo = w * raw(q1) + (1 - w) * raw(q2)
    assert np.max(np.abs(mixed - combo)) < 1e-10


def test_fock_cutoff_guard(small_setup):
    params, frame, grid, probes = small_setup
    psi = coherent_product_state(params, frame, grid, 0.5, 0.9, 0.3)
    a, t, p = probes.joint()
    q = q_values(psi, frame, a, t, p).reshape(probes.shape)
    with pytest.raises(IllPosedError):
        reconstruct_pseudo_density(q, probes, 2, n_max=6, reg=1e-6)


def test_noise_floor_calibration(small_setup):
    params, frame, grid, probes = small_setup
    states = {
        "coh_a": coherent_product_state(params, frame, grid, 0.4, 0.8, 0.1),
        "coh_b": coherent_product_state(params, frame, grid, 1.1 - 0.2j, 1.9, 2.5),
        "coh_c": coherent_product_state(params, frame, grid, 0.1 + 0.9j, 1.2, 5.3),
    }
    floor = calibrate_noise_floor(params, frame, probes, states, n_max=30,
                                  reg=1e-6)
    assert floor.eps_rec < 0.02
    assert set(floor.floors) == set(states)
    for v in floor.floors.values():
        assert v >= -floor.eps_rec


def test_tensor_basis_orthonormal():
    basis, g = _tensor_basis(4)
    keys = sorted(basis)
    assert len(keys) == 81
    gram = np.array([[np.trace(basis[k1].conj().T @ basis[k2])
                      for k2 in keys] for k1 in keys])
    assert np.max(np.abs(gram - np.eye(81))) < 1e-12
    assert np.all(np.abs(g) > 0)


def test_deconvolution_backend_cross_validates(small_setup):
    params, frame, grid, probes = small_setup
    alpha0, th0, ph0 = 0.8 + 0.5j, 1.1, 0.7
    psi = coherent_product_state(params, frame, grid, alpha0, th0, ph0)

    def qf(a, t, p):
        return q_values(psi, frame, a, t, p)

    pd2 = reconstruct_deconvolution(qf, frame, 2, alpha_center=alpha0,
                                    alpha_halfwidth=5.0, n_max=24,
                                    n_alpha_grid=48, n_eta=49, eta_max=5.0,
                                    filter_width=3.2)
    vec = vec_for(alpha0, th0, ph0, 2, 24)
    fidelity = float(np.real(vec.conj() @ pd2.matrix @ vec))
    assert fidelity > 0.9
    assert pd2.min_eigenvalue > -0.05
    assert abs(pd2.raw_trace - 1.0) < 0.05
    # agreement with the primary route on the dominant eigenvector
    a, t, p = probes.joint()
    q = q_values(psi, frame, a, t, p).reshape(probes.shape)
    pd1 = reconstruct_pseudo_density(q, probes, 2, n_max=30, reg=1e-6)
    w1, v1 = np.linalg.eigh(pd1.matrix)
    w2, v2 = np.linalg.eigh(pd2.matrix)
    top2 = np.zeros((31, 5), dtype=complex)      # embed 24 -> 30 Fock space
    top2[:25] = v2[:, -1].reshape(25, 5)
    overlap = abs(np.vdot(v1[:, -1], top2.ravel()))
    assert overlap > 0.95
    assert abs(w1[-1] - w2[-1]) < 0.1
