"""Shared helpers for building random test states."""
import numpy as np

from modwell import SpinorWavefunction, momentum_grid, zeta_grid


def random_smooth_state(params, rng, n=256, smooth=0.02):
    """Normalized random spinor field with bounded kinetic content."""
    grid = zeta_grid(params, n)
    amps = (rng.standard_normal((n, 2 * params.f_spin + 1))
            + 1j * rng.standard_normal((n, 2 * params.f_spin + 1)))
    k = momentum_grid(grid)
    amps = np.fft.ifft(np.fft.fft(amps, axis=0)
                       * np.exp(-smooth * k[:, None] ** 2), axis=0)
    return SpinorWavefunction(grid, amps).normalized()
