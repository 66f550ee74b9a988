"""Dispersion kernel, omega/Lambda and DS coefficients against high-precision oracles."""

import math

import mpmath as mp
import numpy as np
import pytest

from dispersion import (DispersionParams, _kernel_direct, _kernel_series, dispersion_curve,
                        dispersion_row, ds_coefficients, gtilde_hessian, identity_residuals,
                        kernel_f, phase_speed_squared, solve_dispersion, symbol_g, symbol_gtilde,
                        symbol_gtilde2)
from exceptions import DomainError, ValidationError

mp.mp.dps = 40


def _mp_f(t):
    return t * mp.coth(t)


def _mp_omega(beta: float) -> float:
    speed = lambda t: (1 + beta * t ** 2) / _mp_f(t)
    start = 1.0 / math.sqrt(beta) if beta < 0.1 else 1.4
    return float(mp.findroot(lambda s: mp.diff(speed, s), start))


@pytest.mark.parametrize("s", [1e-6, 0.1, 0.3, 0.4999, 0.5, 0.5001, 1.0, 1.403, 3.0, 8.0])
def test_kernel_matches_mpmath(s):
    f, fp, fpp = kernel_f(s)
    t = mp.mpf(s)
    assert f == pytest.approx(float(_mp_f(t)), rel=1e-13)
    assert fp == pytest.approx(float(mp.diff(_mp_f, t)), abs=1e-13)
    assert fpp == pytest.approx(float(mp.diff(_mp_f, t, 2)), abs=1e-12)


def test_kernel_parity_and_zero():
    s = np.array([-2.0, -0.3, 0.0, 0.3, 2.0])
    f, fp, fpp = kernel_f(s)
    assert f[2] == 1.0 and fp[2] == 0.0
    assert fpp[2] == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert f[0] == pytest.approx(f[4], rel=1e-15)
    assert fp[1] == pytest.approx(-fp[3], rel=1e-15)
    assert fpp[0] == pytest.approx(fpp[4], rel=1e-15)


def test_series_and_direct_branches_agree_at_switchover():
    s = np.array([0.5])
    series = _kernel_series(s)
    direct = _kernel_direct(s)
    assert series[0][0] == pytest.approx(direct[0][0], rel=1e-13)
    assert series[1][0] == pytest.approx(direct[1][0], rel=1e-13)
    assert series[2][0] == pytest.approx(direct[2][0], rel=1e-12)


def test_omega_matches_mpmath_root(params):
    assert params.omega == pytest.approx(_mp_omega(0.25), rel=1e-10)
    expected_lambda = (1 + 0.25 * params.omega ** 2) / kernel_f(params.omega)[0]
    assert params.lambda_crit == pytest.approx(expected_lambda, rel=1e-14)
    assert 1.3 < params.omega < 1.5
    assert 0.9 < params.lambda_crit < 1.0


def test_identities_hold_across_beta_range():
    for beta in np.linspace(0.02, 0.33, 100):
        params = solve_dispersion(float(beta))
        res = identity_residuals(params)
        assert abs(res["beta"]) < 1e-10, beta
        assert abs(res["lambda"]) < 1e-10, beta
        c = ds_coefficients(params)
        assert min(c.a1, c.a2, c.a3) > 0, beta
        assert c.C1 > 0 and c.C2 > 0, beta


def test_omega_decreases_with_beta():
    omegas = [solve_dispersion(b).omega for b in (0.05, 0.1, 0.2, 0.3)]
    assert all(b < a for a, b in zip(omegas, omegas[1:]))


@pytest.mark.parametrize("beta", [1e-4, 2e-4, 1e-3])
def test_small_beta_has_long_carrier(beta):
    params = solve_dispersion(beta)
    # f(s) = s up to e^(-2s) here, so c^2 = (1 + beta s^2)/s is minimised at beta^(-1/2)
    assert params.omega == pytest.approx(1.0 / math.sqrt(beta), rel=1e-9)
    assert params.lambda_crit == pytest.approx(2.0 * math.sqrt(beta), rel=1e-9)
    assert abs(identity_residuals(params)["beta"]) < 1e-12


@pytest.mark.parametrize("gap", [1e-6, 1e-10])
def test_beta_next_to_one_third(gap):
    beta = 1.0 / 3.0 - gap
    params = solve_dispersion(beta)
    assert params.omega == pytest.approx(math.sqrt(22.5 * gap), rel=1e-3)
    assert 0.0 < params.lambda_crit <= 1.0
    assert abs(identity_residuals(params)["beta"]) < 1e-12


def test_coefficients_refuse_unit_lambda():
    params = solve_dispersion(1.0 / 3.0 - 1e-10)
    assert params.lambda_crit == 1.0
    with pytest.raises(ValidationError):
        ds_coefficients(params)


@pytest.mark.parametrize("beta", [0.34, 1.0 / 3.0, 0.0, -0.1, float("nan")])
def test_beta_outside_weak_range_is_rejected(beta):
    with pytest.raises(DomainError):
        solve_dispersion(beta)


def test_params_validate_their_fields():
    with pytest.raises(ValidationError):
        DispersionParams(beta=0.25, omega=-1.0, lambda_crit=0.9)
    with pytest.raises(ValidationError):
        DispersionParams(beta=0.25, omega=1.4, lambda_crit=1.5)


def test_phase_speed_minimum_is_lambda(params):
    assert phase_speed_squared(params.omega, 0.25) == pytest.approx(params.lambda_crit, rel=1e-14)
    for s in (params.omega - 0.05, params.omega + 0.05, 0.2, 5.0):
        assert phase_speed_squared(s, 0.25) > params.lambda_crit


def test_g_vanishes_only_at_carrier(params):
    s = np.linspace(0, 10, 2001)
    g = symbol_g(s, params)
    assert g.min() >= -1e-14
    assert abs(symbol_g(params.omega, params)) < 1e-14
    assert s[np.argmin(g)] == pytest.approx(params.omega, abs=s[1] - s[0])


def test_gtilde_nonnegative_with_minima_at_carriers(params):
    w = params.omega
    k = np.linspace(-3 * w, 3 * w, 1024)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    values = symbol_gtilde((K1, K2), params)
    assert values.min() >= -1e-12
    cell = k[1] - k[0]
    for side in (K1 > 0, K1 < 0):
        masked = np.where(side, values, np.inf)
        i, j = np.unravel_index(np.argmin(masked), values.shape)
        assert abs(abs(K1[i, j]) - w) <= cell
        assert abs(K2[i, j]) <= cell


def test_gtilde_quadratic_model_near_carrier(params):
    w = params.omega
    for dk1, dk2 in [(1e-3, 0.0), (0.0, 1e-3), (-7e-4, 7e-4)]:
        exact = symbol_gtilde((w + dk1, dk2), params)
        model = symbol_gtilde2((w + dk1, dk2), params)
        assert abs(exact - model) < 0.05 * (dk1 ** 2 + dk2 ** 2)
        # even in k
        assert symbol_gtilde2((-(w + dk1), -dk2), params) == pytest.approx(model, rel=1e-14)


def test_gtilde_at_zero_is_one(params):
    assert symbol_gtilde((0.0, 0.0), params) == 1.0


def test_coefficient_formulas(params, coeffs):
    w, lam = params.omega, params.lambda_crit
    f, _, fpp = kernel_f(w)
    assert coeffs.a1 == pytest.approx((2 * 0.25 - lam * fpp) / 8, rel=1e-14)
    assert coeffs.a2 == pytest.approx(gtilde_hessian(params)[1] / 8, rel=1e-6)
    assert coeffs.a2 == pytest.approx(lam * f / (4 * w ** 2), rel=1e-6)
    assert coeffs.a3 == pytest.approx(lam * f / 4, rel=1e-14)
    assert coeffs.B_omega == pytest.approx(w ** 2 - f ** 2, rel=1e-14)
    assert coeffs.g_2omega == pytest.approx(symbol_g(2 * w, params), rel=1e-14)
    assert coeffs.D1 == min(coeffs.a1, coeffs.a2, coeffs.a3)


def test_dispersion_row_and_curve():
    row = dispersion_row(0.25)
    for key in ("beta", "omega", "lambda", "a1", "a2", "a3", "A", "B", "C1", "C2", "g2omega"):
        assert key in row
    assert abs(row["beta_identity_residual"]) < 1e-10
    s = np.linspace(0.0, 5.0, 51)
    curve = dispersion_curve(0.25, s)
    assert curve["c2"].shape == s.shape
    assert curve["c2"][0] == pytest.approx(1.0)
    assert np.all(curve["c2"] >= row["lambda"] - 1e-14)
