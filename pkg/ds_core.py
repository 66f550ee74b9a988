"""
Davey-Stewartson Functional
T0 = Q - S on complex envelopes, its L2 gradient, the Nehari residual 2Q - 4S
and the closed-form ray projection onto the Nehari set
"""

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from dispersion import DSCoefficients
from exceptions import DegenerateRayError, GridMismatchError
from fields import (ComplexField2D, MultiplierBank, SpectralGrid, lift, restrict,
                    to_physical, to_spectral)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyBreakdown:
    Q: float
    S_nonlocal: float
    S_local: float
    S: float
    T0: float
    nehari: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@lru_cache(maxsize=32)
def ds_multiplier(grid: SpectralGrid, lambda_crit: float) -> np.ndarray:
    """m_DS = k1^2/((1-Lambda)k1^2 + k2^2), zero at k = 0"""
    k1, k2 = grid.wavenumbers
    denom = (1.0 - lambda_crit) * k1 * k1 + k2 * k2
    nonzero = (k1 * k1 + k2 * k2) > 0
    symbol = np.where(nonzero, k1 * k1 / np.where(nonzero, denom, 1.0), 0.0)
    symbol.flags.writeable = False
    return symbol


@lru_cache(maxsize=32)
def quadratic_symbol(grid: SpectralGrid, a1: float, a2: float, a3: float) -> np.ndarray:
    """a1 k1^2 + a2 k2^2 + a3"""
    k1, k2 = grid.wavenumbers
    symbol = a1 * k1 * k1 + a2 * k2 * k2 + a3
    symbol.flags.writeable = False
    return symbol


def _check_inputs(zeta: ComplexField2D, coeffs: DSCoefficients,
                  bank: Optional[MultiplierBank]):
    if bank is None:
        return
    if bank.grid != zeta.grid:
        raise GridMismatchError(f"zeta grid {zeta.grid} does not match bank grid {bank.grid}")
    if abs(bank.params.lambda_crit - coeffs.lambda_crit) > 1e-12:
        raise GridMismatchError("coefficients and multiplier bank disagree on Lambda")


def _density(zeta: ComplexField2D) -> Tuple[np.ndarray, np.ndarray, SpectralGrid]:
    """|zeta|^2 on the padded grid (exact), with the padded samples of zeta"""
    lifted = lift(zeta)
    rho = np.abs(lifted.values) ** 2
    return rho, lifted.values, lifted.grid


def energy(zeta: ComplexField2D, coeffs: DSCoefficients,
           bank: Optional[MultiplierBank] = None) -> EnergyBreakdown:
    """
    Evaluate Q, the two quartic parts and T0 = Q - S

    Args:
        zeta: Complex envelope on a periodic grid
        coeffs: DS coefficients
        bank: Optional bank used only to check grid/Lambda consistency

    Returns:
        EnergyBreakdown
    """
    _check_inputs(zeta, coeffs, bank)
    grid = zeta.grid
    power = np.abs(zeta.spectral()) ** 2
    Q = grid.area * float(np.sum(quadratic_symbol(grid, coeffs.a1, coeffs.a2, coeffs.a3) * power))

    rho, _, padded = _density(zeta)
    rho_hat = to_spectral(rho)
    m = ds_multiplier(padded, coeffs.lambda_crit)
    S_nonlocal = coeffs.C1 * padded.area * float(np.sum(m * np.abs(rho_hat) ** 2))
    S_local = coeffs.C2 * padded.cell_area * float(np.sum(rho * rho))

    S = S_nonlocal + S_local
    return EnergyBreakdown(Q=Q, S_nonlocal=S_nonlocal, S_local=S_local, S=S,
                           T0=Q - S, nehari=2.0 * Q - 4.0 * S)


def gradient(zeta: ComplexField2D, coeffs: DSCoefficients,
             bank: Optional[MultiplierBank] = None) -> ComplexField2D:
    """
    L2 gradient of T0 for the pairing Re int u conj(v):
    2(-a1 zeta_xx - a2 zeta_zz + a3 zeta) - 4(C1 w + C2 |zeta|^2) zeta, w = F^-1[m_DS F|zeta|^2]
    """
    _check_inputs(zeta, coeffs, bank)
    grid = zeta.grid
    linear = to_physical(quadratic_symbol(grid, coeffs.a1, coeffs.a2, coeffs.a3) * zeta.spectral())

    rho, lifted, padded = _density(zeta)
    w = to_physical(ds_multiplier(padded, coeffs.lambda_crit) * to_spectral(rho)).real
    cubic = ComplexField2D(padded, (coeffs.C1 * w + coeffs.C2 * rho) * lifted)
    cubic = restrict(cubic, grid)

    return ComplexField2D(grid, 2.0 * linear - 4.0 * cubic.values)


def ds_residual(zeta: ComplexField2D, coeffs: DSCoefficients) -> ComplexField2D:
    """Left side of the DS equation, which is half the gradient"""
    return 0.5 * gradient(zeta, coeffs)


def relative_residual(zeta: ComplexField2D, coeffs: DSCoefficients) -> float:
    """||grad T0||_2 / ||zeta||_2"""
    norm = zeta.norm_l2()
    if norm == 0:
        return 0.0
    return gradient(zeta, coeffs).norm_l2() / norm


def nehari_residual(zeta: ComplexField2D, coeffs: DSCoefficients) -> float:
    """d T0[zeta](zeta) = 2Q - 4S"""
    return energy(zeta, coeffs).nehari


def nehari_project(zeta: ComplexField2D, coeffs: DSCoefficients,
                   breakdown: Optional[EnergyBreakdown] = None
                   ) -> Tuple[float, ComplexField2D]:
    """
    Scale zeta onto the Nehari set

    Args:
        zeta: Nonzero envelope
        coeffs: DS coefficients
        breakdown: Energy of zeta if already known

    Returns:
        (lambda0, lambda0*zeta) with lambda0 = sqrt(Q/(2S))
    """
    b = breakdown if breakdown is not None else energy(zeta, coeffs)
    if not (b.S > np.finfo(float).tiny and b.Q > 0):
        raise DegenerateRayError(f"ray does not meet the Nehari set (Q={b.Q:.3e}, S={b.S:.3e})")
    lambda0 = float(np.sqrt(b.Q / (2.0 * b.S)))
    if not np.isfinite(lambda0):
        raise DegenerateRayError(f"ray scaling overflowed (Q={b.Q:.3e}, S={b.S:.3e})")
    return lambda0, lambda0 * zeta


def ray_profile(zeta: ComplexField2D, coeffs: DSCoefficients,
                lambdas: Iterable[float]) -> np.ndarray:
    """T0(lambda*zeta) evaluated directly at each lambda"""
    return np.array([energy(lam * zeta, coeffs).T0 for lam in lambdas])


def lower_bound_margin(zeta: ComplexField2D, breakdown: EnergyBreakdown,
                       coeffs: DSCoefficients) -> Dict[str, float]:
    """Compare T0 with the coercivity bound 1/4 D1 ||zeta||_1^2"""
    norm1 = zeta.norm_h1()
    bound = 0.25 * coeffs.D1 * norm1 ** 2
    return {
        "D1": coeffs.D1,
        "norm_h1": norm1,
        "bound": bound,
        "margin": breakdown.T0 - bound,
    }
