"""
Shared fixtures and test configuration for memoryscope tests.
"""

import math

import numpy as np
import pytest

from memoryscope.dynamics import (
    DelayMap,
    FPDephasingParams,
    ThicknessGrid,
    TimeGrid,
    amplitude_damping_family,
    fp_dephasing_family,
    identity_family,
    random_cptp_family,
)
from memoryscope.qstate import REFERENCE_PRESETS, DensityMatrix, bloch_to_density
from memoryscope.surfaces import DirectionLattice


@pytest.fixture
def rng():
    """Fixture providing a seeded numpy generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def r01():
    """Reference state r01 = (0.20, pi/2, 13 pi/50)."""
    return bloch_to_density(REFERENCE_PRESETS["r01"])


@pytest.fixture
def r02():
    """Reference state r02 = (0.88, 8 pi/50, 13 pi/50)."""
    return bloch_to_density(REFERENCE_PRESETS["r02"])


@pytest.fixture
def maximally_mixed():
    """Fixture providing I/2."""
    return DensityMatrix.maximally_mixed(2)


@pytest.fixture
def strong_params():
    """Two-peak spectrum with the strongest second peak."""
    return FPDephasingParams(a_alpha=0.64)


@pytest.fixture
def retardation(strong_params):
    """Thickness read as retardation in wavelengths."""
    return DelayMap.retardation(strong_params)


@pytest.fixture
def window_family(strong_params, retardation):
    """Dephasing family over a 200-point grid of the [175, 318] lambda0 window."""
    grid = ThicknessGrid(L_min_lambda=175.0, L_max_lambda=318.0, points=200)
    family = fp_dephasing_family(strong_params, retardation, grid)
    return family, family.delays(grid.thicknesses())


@pytest.fixture
def full_family(strong_params, retardation):
    """Dephasing family over a 400-point grid of the full [75, 318] lambda0 range."""
    grid = ThicknessGrid(points=400)
    family = fp_dephasing_family(strong_params, retardation, grid)
    return family, family.delays(grid.thicknesses())


@pytest.fixture
def damping():
    """Amplitude damping with gamma = 1 over t in [0, 5]."""
    return amplitude_damping_family(1.0, horizon=5.0), TimeGrid(t_max=5.0, points=200)


@pytest.fixture
def identity():
    """Identity family on a qubit."""
    return identity_family(2, 1.0), TimeGrid(t_max=1.0, points=50)


@pytest.fixture
def random_qubit_family():
    """Seeded random CPTP family on a qubit."""
    return random_cptp_family(seed=1, dim=2), TimeGrid(t_max=1.0, points=300)


@pytest.fixture
def small_lattice():
    """Coarse 20 x 40 angle lattice."""
    return DirectionLattice(n_theta=20, n_phi=40)


@pytest.fixture
def equator_vector():
    """Bloch unit vector on the equator at phi = pi / 4."""
    return np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0])


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line(
        "markers", "slow: acceptance-size runs (deselect with '-m \"not slow\"')"
    )
