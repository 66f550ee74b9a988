"""
Dispersion Engine
Linear theory for weak surface tension (0 < beta < 1/3): the kernel s*coth(s), the
minimising wavenumber omega, the critical speed-squared Lambda, the symbols g, g~, g~2
and the Davey-Stewartson coefficients
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Tuple, Union

import numpy as np
from scipy import optimize, special

from exceptions import ConvergenceError, DomainError, ValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SERIES_CUTOFF = 0.5     # |s| below this uses the power series
SERIES_ORDER = 24       # highest power of s kept
ROOT_TOL = 1e-12
BRACKET_RANGE = (1e-4, 50.0)  # widened near beta -> 0 and beta -> 1/3
BRACKET_SAMPLES = 4000
A2_STEP = 1e-2          # finite-difference step for a2, relative to omega
A2_CROSS_CHECK = 1e-6


def _series_coefficients(order: int) -> np.ndarray:
    """c_n with s*coth(s) = sum_n c_n s^(2n), from the Bernoulli numbers"""
    bern = special.bernoulli(order)
    return np.array([2.0 ** (2 * n) * bern[2 * n] / math.factorial(2 * n)
                     for n in range(order // 2 + 1)])


_SERIES = _series_coefficients(SERIES_ORDER)


def _kernel_series(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """f, f', f'' from the even power series (accurate for |s| < pi)"""
    f = np.zeros_like(s)
    fp = np.zeros_like(s)
    fpp = np.zeros_like(s)
    for n, c in enumerate(_SERIES):
        p = 2 * n
        f += c * s ** p
        if n >= 1:
            fp += p * c * s ** (p - 1)
            fpp += p * (p - 1) * c * s ** (p - 2)
    return f, fp, fpp


def _kernel_direct(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """f, f', f'' from coth and csch^2 = coth^2 - 1 (s must be nonzero)"""
    coth = 1.0 / np.tanh(s)
    csch2 = coth * coth - 1.0
    f = s * coth
    fp = coth - s * csch2
    fpp = 2.0 * csch2 * (s * coth - 1.0)
    return f, fp, fpp


def kernel_f(s: ArrayLike) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """
    Dispersion kernel f(s) = s*coth(s) and its first two derivatives

    Args:
        s: Real wavenumber (scalar or array)

    Returns:
        (f, f', f'') with the same shape as s; f and f'' even, f' odd
    """
    s_arr = np.asarray(s, dtype=float)
    small = np.abs(s_arr) < SERIES_CUTOFF
    safe = np.where(small, 1.0, s_arr)

    f_d, fp_d, fpp_d = _kernel_direct(safe)
    f_s, fp_s, fpp_s = _kernel_series(np.where(small, s_arr, 0.0))

    f = np.where(small, f_s, f_d)
    fp = np.where(small, fp_s, fp_d)
    fpp = np.where(small, fpp_s, fpp_d)

    if np.ndim(s) == 0:
        return float(f), float(fp), float(fpp)
    return f, fp, fpp


@dataclass(frozen=True)
class DispersionParams:
    """Bond number beta, minimising wavenumber omega and Lambda = min c^2"""

    beta: float
    omega: float
    lambda_crit: float

    def __post_init__(self):
        _check_beta(self.beta)
        if not self.omega > 0:
            raise ValidationError(f"omega must be positive, got {self.omega}")
        # 1 - Lambda ~ 11.25 (1/3 - beta)^2 rounds to zero within ~1e-8 of 1/3
        if not 0 < self.lambda_crit <= 1:
            raise ValidationError(f"lambda_crit must lie in (0, 1], got {self.lambda_crit}")

    def f(self, s: ArrayLike) -> ArrayLike:
        return kernel_f(s)[0]

    def g(self, s: ArrayLike) -> ArrayLike:
        return symbol_g(s, self)

    def gtilde(self, k1: ArrayLike, k2: ArrayLike) -> ArrayLike:
        return symbol_gtilde((k1, k2), self)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class DSCoefficients:
    """Constants of the Davey-Stewartson functional and its derivation"""

    a1: float
    a2: float
    a3: float
    A_omega: float
    B_omega: float
    C1: float
    C2: float
    g_2omega: float
    lambda_crit: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "C1", "C2", "g_2omega"):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError(f"{name} must be positive, got {value}")

    @property
    def D1(self) -> float:
        """Coercivity constant of the quadratic part: Q >= D1 * ||zeta||_1^2"""
        return min(self.a1, self.a2, self.a3)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _check_beta(beta: float):
    if not (isinstance(beta, (int, float, np.floating)) and math.isfinite(beta)):
        raise DomainError(f"beta={beta!r} is not a finite number")
    if not 0.0 < beta < 1.0 / 3.0:
        raise DomainError(f"beta={beta} outside the weak surface tension range (0, 1/3)")


def phase_speed_squared(s: ArrayLike, beta: float) -> ArrayLike:
    """c^2(s) = (1 + beta s^2) / f(s)"""
    s_arr = np.asarray(s, dtype=float)
    result = (1.0 + beta * s_arr ** 2) / kernel_f(s_arr)[0]
    return float(result) if np.ndim(s) == 0 else result


def _first_order(s: ArrayLike, beta: float) -> ArrayLike:
    """Numerator of d/ds c^2: 2 beta s f - (1 + beta s^2) f'"""
    f, fp, _ = kernel_f(s)
    return 2.0 * beta * s * f - (1.0 + beta * s ** 2) * fp


def _first_order_slope(s: float, beta: float) -> float:
    f, _, fpp = kernel_f(s)
    return 2.0 * beta * f - (1.0 + beta * s ** 2) * fpp


def _bracket(beta: float) -> Tuple[float, float]:
    """
    Scan range for omega: omega ~ beta^(-1/2) as beta -> 0 and
    omega ~ sqrt(22.5 (1/3 - beta)) as beta -> 1/3
    """
    lo = min(BRACKET_RANGE[0], 0.5 * math.sqrt(1.0 / 3.0 - beta))
    hi = max(BRACKET_RANGE[1], 4.0 / math.sqrt(beta))
    return lo, hi


def _lambda_from_omega(beta: float, omega: float) -> float:
    """Lambda = 1 - (f - 1 - beta w^2)/f, with f - 1 summed directly below the series cutoff"""
    f = kernel_f(omega)[0]
    if omega < SERIES_CUTOFF:
        excess = float(sum(c * omega ** (2 * n) for n, c in enumerate(_SERIES) if n >= 1))
    else:
        excess = f - 1.0
    return 1.0 - (excess - beta * omega ** 2) / f


def solve_dispersion(beta: float) -> DispersionParams:
    """
    Locate the global minimum of c^2(s) = (1 + beta s^2)/f(s) on s > 0

    Args:
        beta: Bond number in (0, 1/3)

    Returns:
        DispersionParams with omega the minimiser and lambda_crit = c^2(omega)
    """
    _check_beta(beta)

    lo_end, hi_end = _bracket(beta)
    s_grid = np.logspace(math.log10(lo_end), math.log10(hi_end), BRACKET_SAMPLES)
    h = _first_order(s_grid, beta)
    crossings = np.nonzero((h[:-1] < 0) & (h[1:] >= 0))[0]
    if len(crossings) == 0:
        raise ConvergenceError(f"no sign change of dc^2/ds bracketed for beta={beta}")
    lo, hi = float(s_grid[crossings[0]]), float(s_grid[crossings[0] + 1])

    omega = optimize.brentq(_first_order, lo, hi, args=(beta,), xtol=1e-15,
                            rtol=4 * np.finfo(float).eps, maxiter=200)

    # safeguarded Newton polish: keep a step only if it stays bracketed and helps
    residual = abs(_first_order(omega, beta))
    for _ in range(4):
        slope = _first_order_slope(omega, beta)
        if slope == 0:
            break
        trial = omega - _first_order(omega, beta) / slope
        trial_residual = abs(_first_order(trial, beta))
        if not (lo <= trial <= hi) or trial_residual >= residual:
            break
        omega, residual = trial, trial_residual

    if residual >= ROOT_TOL:
        raise ConvergenceError(f"first-order residual {residual:.3e} above {ROOT_TOL} at beta={beta}")

    lambda_crit = _lambda_from_omega(beta, omega)
    logger.debug("beta=%.6g omega=%.15g lambda=%.15g residual=%.2e",
                 beta, omega, lambda_crit, residual)
    return DispersionParams(beta=float(beta), omega=float(omega), lambda_crit=float(lambda_crit))


def identity_residuals(params: DispersionParams) -> Dict[str, float]:
    """Residuals of beta = f'/(2wf - w^2 f') and Lambda = 2w/(2wf - w^2 f')"""
    w = params.omega
    f, fp, _ = kernel_f(w)
    denom = 2.0 * w * f - w * w * fp
    return {
        "first_order": float(_first_order(w, params.beta)),
        "beta": float(params.beta - fp / denom),
        "lambda": float(params.lambda_crit - 2.0 * w / denom),
    }


def symbol_g(s: ArrayLike, params: DispersionParams) -> ArrayLike:
    """g(s) = 1 + beta s^2 - Lambda f(s); nonnegative, zero only at s = +-omega"""
    s_arr = np.asarray(s, dtype=float)
    result = 1.0 + params.beta * s_arr ** 2 - params.lambda_crit * kernel_f(s_arr)[0]
    return float(result) if np.ndim(s) == 0 else result


def riesz_ratio(k1: ArrayLike, k2: ArrayLike) -> np.ndarray:
    """k1^2/|k|^2 with the value 0 at k = 0"""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    r2 = k1 * k1 + k2 * k2
    nonzero = r2 > 0
    return np.where(nonzero, k1 * k1 / np.where(nonzero, r2, 1.0), 0.0)


def symbol_gtilde(k: Tuple[ArrayLike, ArrayLike], params: DispersionParams) -> ArrayLike:
    """
    g~(k) = 1 + beta |k|^2 - Lambda (k1^2/|k|^2) f(|k|)

    Args:
        k: Pair (k1, k2) of scalars or equally shaped arrays
        params: Dispersion parameters

    Returns:
        Symbol values; zero only at k = +-(omega, 0)
    """
    k1, k2 = np.asarray(k[0], dtype=float), np.asarray(k[1], dtype=float)
    r2 = k1 * k1 + k2 * k2
    result = (1.0 + params.beta * r2
              - params.lambda_crit * riesz_ratio(k1, k2) * kernel_f(np.sqrt(r2))[0])
    return float(result) if result.ndim == 0 else result


def gtilde_hessian(params: DispersionParams) -> Tuple[float, float]:
    """Analytic second derivatives of g~ at (omega, 0) in k1 and in k2"""
    w = params.omega
    f, _, fpp = kernel_f(w)
    d11 = 2.0 * params.beta - params.lambda_crit * fpp
    d22 = 2.0 * params.lambda_crit * f / (w * w)
    return d11, d22


def symbol_gtilde2(k: Tuple[ArrayLike, ArrayLike], params: DispersionParams) -> ArrayLike:
    """Taylor quadratic of g~ at the carrier, evaluated with |k1| so it is even in k"""
    k1, k2 = np.asarray(k[0], dtype=float), np.asarray(k[1], dtype=float)
    d11, d22 = gtilde_hessian(params)
    result = 0.5 * d11 * (np.abs(k1) - params.omega) ** 2 + 0.5 * d22 * k2 ** 2
    return float(result) if result.ndim == 0 else result


def _a2_richardson(params: DispersionParams) -> float:
    """1/8 d^2 g~/dk2^2 at (omega, 0) by Richardson-extrapolated central differences"""
    w = params.omega

    def central(h: float) -> float:
        plus = symbol_gtilde((w, h), params)
        centre = symbol_gtilde((w, 0.0), params)
        minus = symbol_gtilde((w, -h), params)
        return (plus - 2.0 * centre + minus) / (h * h)

    h = A2_STEP * w
    second = (4.0 * central(h / 2) - central(h)) / 3.0
    return second / 8.0


def ds_coefficients(params: DispersionParams) -> DSCoefficients:
    """
    Davey-Stewartson coefficients at the given dispersion parameters

    Args:
        params: Output of solve_dispersion

    Returns:
        DSCoefficients (a1, a2, a3, A, B, C1, C2, g(2 omega))
    """
    beta, w, lam = params.beta, params.omega, params.lambda_crit
    if not lam < 1.0:
        raise ValidationError(
            f"1 - Lambda underflows at beta={beta}; the mean-flow symbol of the DS functional is singular")
    f1, _, fpp1 = kernel_f(w)
    f2 = kernel_f(2.0 * w)[0]
    g2 = symbol_g(2.0 * w, params)

    a1 = (2.0 * beta - lam * fpp1) / 8.0
    a2 = _a2_richardson(params)
    a2_analytic = gtilde_hessian(params)[1] / 8.0
    if abs(a2 - a2_analytic) > A2_CROSS_CHECK * abs(a2_analytic):
        raise ValidationError(
            f"a2 finite-difference value {a2:.12g} disagrees with expansion {a2_analytic:.12g}")
    a3 = lam * f1 / 4.0

    A = (3.0 * w ** 2 - f1 ** 2 - 2.0 * f1 * f2) / 2.0
    B = w ** 2 - f1 ** 2
    C1 = lam / 32.0 * (lam * B - 2.0 * f1) ** 2
    C2 = (lam ** 2 * A ** 2 / (16.0 * g2)
          + lam ** 2 * B ** 2 / 32.0
          + 3.0 * beta * w ** 4 / 64.0
          + lam * f1 * (f1 * f2 - 3.0 * w ** 2) / 16.0)

    if C1 <= 0 or C2 <= 0:
        raise ValidationError(f"quartic coefficients not positive at beta={beta}: C1={C1}, C2={C2}")

    return DSCoefficients(a1=float(a1), a2=float(a2), a3=float(a3), A_omega=float(A),
                          B_omega=float(B), C1=float(C1), C2=float(C2),
                          g_2omega=float(g2), lambda_crit=float(lam))


def dispersion_curve(beta: float, s: np.ndarray) -> Dict[str, np.ndarray]:
    """Tabulate c^2(s) and g(s) for plotting"""
    params = solve_dispersion(beta)
    s = np.asarray(s, dtype=float)
    return {
        "s": s,
        "c2": phase_speed_squared(s, beta),
        "g": symbol_g(s, params),
    }


def dispersion_row(beta: float) -> Dict[str, float]:
    """One row of the parameter table: params, coefficients and identity residuals"""
    params = solve_dispersion(beta)
    coeffs = ds_coefficients(params)
    residuals = identity_residuals(params)
    return {
        "beta": params.beta,
        "omega": params.omega,
        "lambda": params.lambda_crit,
        "a1": coeffs.a1,
        "a2": coeffs.a2,
        "a3": coeffs.a3,
        "A": coeffs.A_omega,
        "B": coeffs.B_omega,
        "C1": coeffs.C1,
        "C2": coeffs.C2,
        "g2omega": coeffs.g_2omega,
        "beta_identity_residual": residuals["beta"],
        "lambda_identity_residual": residuals["lambda"],
    }
