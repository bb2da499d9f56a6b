import math

import numpy as np
import pytest

from modwell import (LatticeParams, adiabatic_spectrum, build_spin_matrices,
                     default_params, initial_state, zeta_grid)


@pytest.fixture(scope="session")
def spin4():
    return build_spin_matrices(4)


@pytest.fixture(scope="session")
def defaults():
    return default_params()


@pytest.fixture(scope="session")
def mild():
    """Gentle parameter set for integrator invariant tests."""
    return LatticeParams(u0=-2.0, theta_l=math.radians(75.0), bx=0.8)


@pytest.fixture(scope="session")
def psi0(defaults):
    return initial_state(defaults)


@pytest.fixture(scope="session")
def spec_default(defaults, spin4, psi0):
    return adiabatic_spectrum(defaults, spin4, psi0.grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
