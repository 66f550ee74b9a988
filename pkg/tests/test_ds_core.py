import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from ds_core import (ds_multiplier, ds_residual, energy, gradient, lower_bound_margin, nehari_project,
                     nehari_residual, quadratic_symbol, ray_profile, relative_residual)
from exceptions import DegenerateRayError, GridMismatchError
from fields import MultiplierBank, SpectralGrid, inner, single_mode, translate, zeros
from tests.conftest import band_limited


@pytest.fixture(scope="module")
def zeta(small_grid):
    return 0.3 * band_limited(small_grid, seed=21, real=False)


def _directional(zeta, direction, coeffs, h=1e-2):
    """Richardson-extrapolated central difference; exact for quartic polynomials in h"""
    def central(step):
        return (energy(zeta + step * direction, coeffs).T0
                - energy(zeta - step * direction, coeffs).T0) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def test_gradient_matches_finite_differences(zeta, small_grid, coeffs):
    grad = gradient(zeta, coeffs)
    for seed in (31, 32, 33):
        v = band_limited(small_grid, seed=seed, real=False)
        fd = _directional(zeta, v, coeffs)
        assert inner(grad, v) == pytest.approx(fd, rel=1e-6)


def test_nehari_residual_is_gradient_along_zeta(zeta, coeffs):
    b = energy(zeta, coeffs)
    assert b.nehari == pytest.approx(2 * b.Q - 4 * b.S, rel=1e-14)
    assert inner(gradient(zeta, coeffs), zeta) == pytest.approx(b.nehari, rel=1e-10)
    assert nehari_residual(zeta, coeffs) == b.nehari


def test_single_mode_closed_form(small_grid, coeffs):
    k = 2 * math.pi * 2 / small_grid.lx
    A = 0.7
    z = single_mode(small_grid, k, amplitude=A, real=False)
    b = energy(z, coeffs)
    area = small_grid.area
    assert b.Q == pytest.approx((coeffs.a1 * k * k + coeffs.a3) * A ** 2 * area, rel=1e-12)
    assert b.S_nonlocal == pytest.approx(0.0, abs=1e-12)
    assert b.S_local == pytest.approx(coeffs.C2 * A ** 4 * area, rel=1e-12)
    assert b.T0 == pytest.approx(b.Q - b.S)


def test_energy_is_gauge_and_translation_invariant(zeta, coeffs):
    base = energy(zeta, coeffs).T0
    assert energy(np.exp(0.7j) * zeta, coeffs).T0 == pytest.approx(base, rel=1e-12)
    assert energy(translate(zeta, (5, 3)), coeffs).T0 == pytest.approx(base, rel=1e-12)


def test_ray_maximum_at_nehari_scaling(zeta, coeffs):
    b = energy(zeta, coeffs)
    lambda0, projected = nehari_project(zeta, coeffs, b)
    assert lambda0 == pytest.approx(math.sqrt(b.Q / (2 * b.S)))

    on_set = energy(projected, coeffs)
    assert abs(on_set.nehari) < 1e-10 * on_set.Q
    assert on_set.T0 == pytest.approx(b.Q ** 2 / (4 * b.S), rel=1e-10)

    lambdas = np.linspace(0.5 * lambda0, 1.5 * lambda0, 101)
    profile = ray_profile(zeta, coeffs, lambdas)
    assert lambdas[np.argmax(profile)] == pytest.approx(lambda0, abs=lambdas[1] - lambdas[0])
    assert profile.max() <= on_set.T0 * (1 + 1e-12)


def test_zero_ray_is_degenerate(small_grid, coeffs):
    with pytest.raises(DegenerateRayError):
        nehari_project(zeros(small_grid, real=False), coeffs)
    assert relative_residual(zeros(small_grid, real=False), coeffs) == 0.0


def test_residual_is_half_the_gradient(zeta, coeffs):
    assert np.allclose(ds_residual(zeta, coeffs).values, 0.5 * gradient(zeta, coeffs).values)
    assert relative_residual(zeta, coeffs) == pytest.approx(
        gradient(zeta, coeffs).norm_l2() / zeta.norm_l2())


def test_lower_bound_holds_on_nehari_set(zeta, coeffs):
    _, projected = nehari_project(zeta, coeffs)
    b = energy(projected, coeffs)
    margin = lower_bound_margin(projected, b, coeffs)
    assert margin["D1"] == coeffs.D1
    assert margin["margin"] >= 0
    assert margin["bound"] == pytest.approx(0.25 * coeffs.D1 * projected.norm_h1() ** 2)


def test_bank_on_other_grid_is_rejected(zeta, coeffs, params):
    other = MultiplierBank(SpectralGrid(64, 64, 1.0, 1.0), params)
    with pytest.raises(GridMismatchError):
        energy(zeta, coeffs, other)


def test_threads_match_serial_calls(small_grid, coeffs):
    fields = [0.3 * band_limited(small_grid, seed=70 + i, real=False) for i in range(8)]

    def evaluate(u):
        return energy(u, coeffs), gradient(u, coeffs).values

    serial = [evaluate(u) for u in fields]
    # cold caches so the symbol builds race too
    ds_multiplier.cache_clear()
    quadratic_symbol.cache_clear()
    with ThreadPoolExecutor(max_workers=8) as pool:
        threaded = list(pool.map(evaluate, fields * 4))

    for i, (breakdown, grad) in enumerate(threaded):
        expected_breakdown, expected_grad = serial[i % len(fields)]
        assert breakdown == expected_breakdown
        assert np.array_equal(grad, expected_grad)
