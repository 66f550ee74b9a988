"""Shared fixtures: beta = 0.25 and verification-beta parameters, small grids and band-limited random fields."""

import math
from pathlib import Path

import numpy as np
import pytest

from dispersion import ds_coefficients, solve_dispersion
from fields import ComplexField2D, MultiplierBank, RealField2D, SpectralGrid, to_physical, to_spectral

FIXTURES = Path(__file__).parent / "fixtures"


def band_limited(grid: SpectralGrid, seed: int, fraction: float = 0.25, real: bool = True):
    """Random field whose modes sit in the lowest `fraction` of each axis' spectrum"""
    rng = np.random.default_rng(seed)
    kx, kz = grid.nyquist
    k1, k2 = grid.wavenumbers
    mask = (np.abs(k1) < fraction * kx) & (np.abs(k2) < fraction * kz)
    if real:
        values = to_physical(mask * to_spectral(rng.standard_normal(grid.shape))).real
        return RealField2D(grid, values)
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return ComplexField2D(grid, to_physical(mask * to_spectral(noise)))


@pytest.fixture(scope="session")
def params():
    return solve_dispersion(0.25)


@pytest.fixture(scope="session")
def coeffs(params):
    return ds_coefficients(params)


@pytest.fixture(scope="session")
def verify_params():
    """beta = 0.1, the default of the expansion checks (weaker mean flow than 0.25)"""
    return solve_dispersion(0.1)


@pytest.fixture(scope="session")
def verify_coeffs(verify_params):
    return ds_coefficients(verify_params)


@pytest.fixture(scope="session")
def small_grid():
    return SpectralGrid(32, 32, 2 * math.pi * 4, 2 * math.pi * 4)


@pytest.fixture(scope="session")
def small_bank(small_grid, params):
    return MultiplierBank(small_grid, params)


@pytest.fixture(scope="session")
def ds_grid():
    """DS grid used by the solver tests: 64^2 on a 4 pi box"""
    return SpectralGrid(64, 64, 4 * math.pi, 4 * math.pi)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def carrier_grid(params):
    """Square box on which omega is mode 8 along x"""
    side = 2 * math.pi * 8 / params.omega
    return SpectralGrid(64, 64, side, side)


@pytest.fixture(scope="session")
def carrier_bank(carrier_grid, params):
    return MultiplierBank(carrier_grid, params)


@pytest.fixture(scope="session")
def envelope():
    """Smooth Gaussian envelope on the verifier's default grid (64^2, box 32, sigma 2)"""
    from lump_solver import gaussian_profile

    return gaussian_profile(SpectralGrid(64, 64, 32.0, 32.0), sigma_x=2.0, sigma_z=2.0)
