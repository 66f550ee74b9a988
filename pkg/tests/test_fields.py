import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from exceptions import GridMismatchError, ResolutionError, ShapeError, UnknownSymbolError, ValidationError
from fields import (SYMBOL_IDS, ComplexField2D, MultiplierBank, RealField2D, SpectralGrid, apply_multiplier,
                    derivative, from_frame, inner, integrate, lift, product, restrict,
                    single_mode, split_spectrum, to_frame, translate, zeros)
from tests.conftest import band_limited


def test_grid_validation():
    with pytest.raises(ValidationError):
        SpectralGrid(48, 64, 1.0, 1.0)
    with pytest.raises(ValidationError):
        SpectralGrid(8, 8, 1.0, 1.0)
    with pytest.raises(ValidationError):
        SpectralGrid(32, 32, 0.0, 1.0)


def test_centred_coordinates(small_grid):
    assert small_grid.x[small_grid.nx // 2] == pytest.approx(0.0, abs=1e-14)
    assert small_grid.z[0] == pytest.approx(-small_grid.lz / 2)


def test_mode_index_requires_commensurate_wavenumber(small_grid):
    assert small_grid.mode_index(2 * math.pi * 3 / small_grid.lx, 0.0) == (3, 0)
    # lx = 8 pi puts k = 1 on mode 4
    assert small_grid.mode_index(1.0, 0.0) == (4, 0)
    with pytest.raises(ResolutionError):
        small_grid.mode_index(1.1, 0.0)
    with pytest.raises(ResolutionError):
        small_grid.mode_index(0.0, 0.3)


def test_parseval(small_grid):
    u = band_limited(small_grid, seed=1, fraction=0.9)
    assert u.norm_h(0) == pytest.approx(u.norm_l2(), rel=1e-12)
    v = band_limited(small_grid, seed=2, real=False)
    assert v.norm_h(0) == pytest.approx(v.norm_l2(), rel=1e-12)


def test_single_mode_norms(small_grid):
    k = 2 * math.pi * 3 / small_grid.lx
    u = single_mode(small_grid, k)
    area = small_grid.area
    assert u.norm_l2() ** 2 == pytest.approx(area / 2, rel=1e-12)
    assert u.norm_h1() ** 2 == pytest.approx((1 + k * k) * area / 2, rel=1e-12)
    assert u.norm_h3() ** 2 == pytest.approx((1 + k * k) ** 3 * area / 2, rel=1e-12)
    assert u.sup_norm() == pytest.approx(1.0)
    assert u.fourier_l1_norm() == pytest.approx(2 * math.pi, rel=1e-12)
    assert integrate(u) == pytest.approx(0.0, abs=1e-12)


def test_scaled_norm_at_carrier(carrier_grid, params):
    u = single_mode(carrier_grid, params.omega)
    assert u.scaled_norm(0.1, params.omega) == pytest.approx(u.norm_l2(), rel=1e-10)
    with pytest.raises(ValidationError):
        u.scaled_norm(0.0, params.omega)


def test_product_is_dealiased(small_grid):
    a = band_limited(small_grid, seed=3, fraction=0.9)
    b = band_limited(small_grid, seed=4, fraction=0.9)
    fine = small_grid.padded(4)
    exact = RealField2D(fine, lift(a, 4).values * lift(b, 4).values)
    expected = restrict(exact, small_grid)
    assert np.allclose(product(a, b).values, expected.values, atol=1e-12)


def test_product_of_narrow_band_fields_is_pointwise(small_grid):
    a = band_limited(small_grid, seed=5)
    b = band_limited(small_grid, seed=6)
    assert np.allclose(product(a, b).values, a.values * b.values, atol=1e-12)


def test_lift_restrict_round_trip(small_grid):
    u = band_limited(small_grid, seed=7, fraction=0.9)
    back = restrict(lift(u), small_grid)
    assert np.allclose(back.values, u.values, atol=1e-13)
    w = band_limited(small_grid, seed=8, fraction=0.9, real=False)
    assert np.allclose(restrict(lift(w), small_grid).values, w.values, atol=1e-13)


def test_restrict_needs_same_box(small_grid):
    other = SpectralGrid(32, 32, small_grid.lx * 2, small_grid.lz)
    with pytest.raises(GridMismatchError):
        restrict(zeros(small_grid), other)


def test_translate_preserves_norms(small_grid):
    u = band_limited(small_grid, seed=9)
    moved = translate(u, (5, 3))
    assert moved.norm_l2() == pytest.approx(u.norm_l2(), rel=1e-14)
    assert moved.norm_h1() == pytest.approx(u.norm_h1(), rel=1e-12)


def test_derivative_of_cosine(small_grid):
    k = 2 * math.pi * 2 / small_grid.lx
    u = single_mode(small_grid, k)
    X, _ = small_grid.mesh
    assert np.allclose(derivative(u, 0).values, -k * np.sin(k * X), atol=1e-12)
    assert np.allclose(derivative(u, 0, 2).values, -k * k * u.values, atol=1e-12)
    assert np.allclose(derivative(u, 1).values, 0.0, atol=1e-12)
    with pytest.raises(ValidationError):
        derivative(u, 0, 3)


def test_inner_and_arithmetic(small_grid):
    u = band_limited(small_grid, seed=10)
    assert inner(u, u) == pytest.approx(u.norm_l2() ** 2, rel=1e-12)
    assert np.allclose((2.0 * u - u).values, u.values)
    assert isinstance(u + 1j, ComplexField2D)
    with pytest.raises(GridMismatchError):
        u + zeros(SpectralGrid(16, 16, 1.0, 1.0))


def test_field_shape_and_dtype_are_checked(small_grid):
    with pytest.raises(ShapeError):
        RealField2D(small_grid, np.zeros((16, 16)))
    with pytest.raises(ValidationError):
        RealField2D(small_grid, np.zeros(small_grid.shape, dtype=complex))


def test_carrier_mode_lives_in_the_balls(carrier_grid, carrier_bank, params):
    u = single_mode(carrier_grid, params.omega)
    assert np.allclose(apply_multiplier(u, "chi", carrier_bank).values, u.values, atol=1e-13)
    assert np.allclose(apply_multiplier(u, "red_F", carrier_bank).values, 0.0, atol=1e-13)
    assert np.allclose(apply_multiplier(u, "gtilde", carrier_bank).values, 0.0, atol=1e-12)
    # cov is one at the carrier itself
    assert np.allclose(apply_multiplier(u, "cov", carrier_bank).values, u.values, atol=1e-10)


def test_red_F_outside_the_balls(carrier_grid, carrier_bank, params):
    from dispersion import symbol_g

    u = single_mode(carrier_grid, 2 * params.omega)
    assert np.allclose(apply_multiplier(u, "chi", carrier_bank).values, 0.0, atol=1e-13)
    out = apply_multiplier(u, "red_F", carrier_bank)
    assert isinstance(out, RealField2D)
    assert np.allclose(out.values, u.values / symbol_g(2 * params.omega, params), atol=1e-12)


def test_split_spectrum(carrier_grid, carrier_bank, params):
    X, _ = carrier_grid.mesh
    u = single_mode(carrier_grid, params.omega) + single_mode(carrier_grid, 2 * params.omega)
    plus, minus, eta2 = split_spectrum(u, carrier_bank)
    assert np.allclose(plus.values, 0.5 * np.exp(1j * params.omega * X), atol=1e-12)
    assert np.allclose(minus.values, np.conj(plus.values))
    assert np.allclose(eta2.values, np.cos(2 * params.omega * X), atol=1e-12)


def test_coarse_grid_cannot_resolve_balls(params):
    bank = MultiplierBank(SpectralGrid(16, 16, 4 * math.pi, 4 * math.pi), params)
    with pytest.raises(ResolutionError):
        bank.check_resolution()


def test_bank_rejects_bad_delta_and_symbols(small_grid, small_bank, params):
    with pytest.raises(ValidationError):
        MultiplierBank(small_grid, params, delta_fraction=0.4)
    with pytest.raises(UnknownSymbolError):
        small_bank.symbol("not_a_symbol")


def test_multiplier_on_foreign_box_is_rejected(small_bank):
    u = zeros(SpectralGrid(32, 32, 1.0, 1.0))
    with pytest.raises(GridMismatchError):
        apply_multiplier(u, "K0", small_bank)


def test_multiplier_follows_padded_grid(small_grid, small_bank):
    u = band_limited(small_grid, seed=11)
    direct = apply_multiplier(u, "K0", small_bank)
    padded = restrict(apply_multiplier(lift(u), "K0", small_bank), small_grid)
    assert np.allclose(direct.values, padded.values, atol=1e-12)


def test_frame_round_trip(small_grid):
    u = band_limited(small_grid, seed=12)
    frame = to_frame(u)
    assert list(frame.columns) == ["x", "z", "value"]
    assert np.array_equal(from_frame(frame, small_grid).values, u.values)
    w = band_limited(small_grid, seed=13, real=False)
    back = from_frame(to_frame(w), small_grid)
    assert isinstance(back, ComplexField2D)
    assert np.array_equal(back.values, w.values)
    with pytest.raises(ShapeError):
        from_frame(frame.iloc[:10], small_grid)


def test_shared_bank_is_thread_safe(small_grid, params):
    u = band_limited(small_grid, seed=31)
    ids = sorted(SYMBOL_IDS) * 4
    serial_bank = MultiplierBank(small_grid, params)
    serial = {sid: apply_multiplier(u, sid, serial_bank).values for sid in ids}

    # fresh bank: first use of every symbol happens inside the pool
    shared = MultiplierBank(small_grid, params)
    with ThreadPoolExecutor(max_workers=8) as pool:
        threaded = list(pool.map(lambda sid: (sid, apply_multiplier(u, sid, shared).values), ids))

    for sid, values in threaded:
        assert np.array_equal(values, serial[sid]), sid
