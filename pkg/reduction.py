"""
Reduction Functionals
Explicit water-wave functionals K2, K4, L2, L3, L4, H with their gradients, the
reduction map F(eta1) and convergence harnesses for the wavepacket expansions
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

import config
from dispersion import DispersionParams, DSCoefficients, ds_coefficients
from exceptions import GridMismatchError, ValidationError
from fields import (ComplexField2D, MultiplierBank, RealField2D, SpectralGrid, apply_multiplier,
                    derivative, ifft, lift, product, restrict, to_physical, to_spectral, zeros)

logger = logging.getLogger(__name__)

THETA = 5.0 / 6.0
ORDER_FRACTION = 0.75
BALL_LEAKAGE = 1e-10


def _check(eta: RealField2D, bank: MultiplierBank):
    if not isinstance(eta, RealField2D):
        raise ValidationError("reduction functionals act on real fields")
    if eta.grid != bank.grid:
        raise GridMismatchError(f"field grid {eta.grid} does not match bank grid {bank.grid}")


def _apply(symbol: np.ndarray, values: np.ndarray) -> np.ndarray:
    return to_physical(symbol * to_spectral(values)).real


def _padded_terms(eta: RealField2D, bank: MultiplierBank) -> Dict[str, np.ndarray]:
    """Samples of eta, its derivatives and K0/L0 images on the padded grid"""
    lifted = lift(eta)
    grid = lifted.grid
    pbank = bank.for_grid(grid)
    c = lifted.spectral()
    k1, k2 = grid.wavenumbers
    return {
        "grid": grid,
        "bank": pbank,
        "e": lifted.values,
        "ex": to_physical(1j * k1 * c).real,
        "ez": to_physical(1j * k2 * c).real,
        "exx": to_physical(-k1 * k1 * c).real,
        "exz": to_physical(-k1 * k2 * c).real,
        "k0": to_physical(pbank.symbol("K0") * c).real,
        "l0": to_physical(pbank.symbol("L0") * c).real,
    }


def _spectral_quadratic(eta: RealField2D, weight: np.ndarray) -> float:
    """1/2 int weight(k) |eta^|^2 dk"""
    return 0.5 * eta.grid.area * float(np.sum(weight * np.abs(eta.spectral()) ** 2))


def functional_K2(eta: RealField2D, bank: MultiplierBank) -> float:
    """1/2 int (eta^2 + beta eta_x^2 + beta eta_z^2)"""
    _check(eta, bank)
    k1, k2 = eta.grid.wavenumbers
    return _spectral_quadratic(eta, 1.0 + bank.params.beta * (k1 * k1 + k2 * k2))


def functional_K4(eta: RealField2D, bank: MultiplierBank) -> float:
    """-beta/8 int (eta_x^2 + eta_z^2)^2"""
    _check(eta, bank)
    t = _padded_terms(eta, bank)
    s = t["ex"] ** 2 + t["ez"] ** 2
    return -bank.params.beta / 8.0 * t["grid"].cell_area * float(np.sum(s * s))


def functional_L2(eta: RealField2D, bank: MultiplierBank) -> float:
    """1/2 int eta K0 eta"""
    _check(eta, bank)
    return _spectral_quadratic(eta, bank.symbol("K0"))


def functional_L3(eta: RealField2D, bank: MultiplierBank) -> float:
    """1/2 int (eta_x^2 eta - eta (K0 eta)^2 - eta (L0 eta)^2)"""
    _check(eta, bank)
    t = _padded_terms(eta, bank)
    e = t["e"]
    integrand = t["ex"] ** 2 * e - e * t["k0"] ** 2 - e * t["l0"] ** 2
    return 0.5 * t["grid"].cell_area * float(np.sum(integrand))


def functional_L4(eta: RealField2D, bank: MultiplierBank) -> float:
    """
    Quartic part of the kinetic energy

    1/2 int (K0(eta K0 eta) eta K0 eta + 2 L0(eta L0 eta) eta K0 eta + eta L0 eta H0(eta L0 eta))
    + 1/2 int eta^2 (K0 eta eta_xx + L0 eta eta_xz)
    """
    _check(eta, bank)
    t = _padded_terms(eta, bank)
    pbank, e = t["bank"], t["e"]
    q1 = e * t["k0"]
    q2 = e * t["l0"]
    first = (_apply(pbank.symbol("K0"), q1) * q1
             + 2.0 * _apply(pbank.symbol("L0"), q2) * q1
             + q2 * _apply(pbank.symbol("H0"), q2))
    second = e * e * (t["k0"] * t["exx"] + t["l0"] * t["exz"])
    return 0.5 * t["grid"].cell_area * float(np.sum(first + second))


def functional_H(eta: RealField2D, bank: MultiplierBank) -> float:
    """K2 - Lambda L2 = 1/2 int gtilde(k) |eta^|^2"""
    _check(eta, bank)
    return _spectral_quadratic(eta, bank.symbol("gtilde"))


def gradient_K2(eta: RealField2D, bank: MultiplierBank) -> RealField2D:
    """eta - beta eta_xx - beta eta_zz"""
    _check(eta, bank)
    k1, k2 = eta.grid.wavenumbers
    symbol = 1.0 + bank.params.beta * (k1 * k1 + k2 * k2)
    return ifft(symbol * eta.spectral(), eta.grid, real=True)


def gradient_K4(eta: RealField2D, bank: MultiplierBank) -> RealField2D:
    """beta/2 ((s eta_x)_x + (s eta_z)_z) with s = eta_x^2 + eta_z^2"""
    _check(eta, bank)
    t = _padded_terms(eta, bank)
    s = t["ex"] ** 2 + t["ez"] ** 2
    flux_x = restrict(RealField2D(t["grid"], s * t["ex"]), eta.grid)
    flux_z = restrict(RealField2D(t["grid"], s * t["ez"]), eta.grid)
    return 0.5 * bank.params.beta * (derivative(flux_x, 0) + derivative(flux_z, 1))


def gradient_L2(eta: RealField2D, bank: MultiplierBank) -> RealField2D:
    """K0 eta"""
    _check(eta, bank)
    return apply_multiplier(eta, "K0", bank)


def _l3_gradient_values(values: np.ndarray, grid: SpectralGrid, bank: MultiplierBank) -> np.ndarray:
    c = to_spectral(values)
    k1, _ = grid.wavenumbers
    K0, L0 = bank.symbol("K0"), bank.symbol("L0")
    ex = to_physical(1j * k1 * c).real
    k0 = to_physical(K0 * c).real
    l0 = to_physical(L0 * c).real
    total = ex ** 2 - k0 ** 2 - l0 ** 2
    total -= 2.0 * to_physical(1j * k1 * to_spectral(ex * values)).real
    total -= 2.0 * _apply(K0, values * k0)
    total -= 2.0 * _apply(L0, values * l0)
    return 0.5 * total


def gradient_L3(eta: RealField2D, bank: MultiplierBank, dealias: bool = True) -> RealField2D:
    """
    1/2 (eta_x^2 - (K0 eta)^2 - (L0 eta)^2 - 2(eta_x eta)_x - 2K0(eta K0 eta) - 2L0(eta L0 eta))

    Args:
        eta: Real field on the bank's grid
        bank: Multiplier bank
        dealias: Evaluate the products on the padded grid; only skip this when the
            quadratic spectrum of eta already fits below the grid's Nyquist wavenumbers

    Returns:
        RealField2D on eta's grid
    """
    _check(eta, bank)
    if not dealias:
        return RealField2D(eta.grid, _l3_gradient_values(eta.values, eta.grid, bank))
    lifted = lift(eta)
    values = _l3_gradient_values(lifted.values, lifted.grid, bank.for_grid(lifted.grid))
    return restrict(RealField2D(lifted.grid, values), eta.grid)


def _products_fit(bank: MultiplierBank) -> bool:
    """Whether quadratic products of a chi-supported field are alias-free unpadded"""
    grid, omega, delta = bank.grid, bank.params.omega, bank.delta
    kx, kz = grid.nyquist
    return (2 * (omega + delta) + 2 * np.pi / grid.lx < kx
            and 2 * delta + 2 * np.pi / grid.lz < kz)


def reduction_F(eta1: RealField2D, bank: MultiplierBank, epsilon: float) -> RealField2D:
    """
    F(eta1) = Lambda(1 - eps^2) F^-1[(1 - chi)/gtilde F[L3'(eta1)]]

    Args:
        eta1: Real field with spectrum inside the delta-balls
        bank: Multiplier bank on eta1's grid
        epsilon: Amplitude parameter in [0, 1)

    Returns:
        RealField2D whose spectrum avoids the chi support
    """
    _check(eta1, bank)
    if not 0 <= epsilon < 1:
        raise ValidationError(f"epsilon must lie in [0, 1), got {epsilon}")
    power = np.abs(eta1.spectral()) ** 2
    total = float(power.sum())
    if total == 0:
        return zeros(eta1.grid)
    outside = float(np.sum((1.0 - bank.symbol("chi")) * power))
    if outside > BALL_LEAKAGE * total:
        raise ValidationError(
            f"eta1 carries {outside / total:.3e} of its spectral mass outside the delta-balls")

    l3 = gradient_L3(eta1, bank, dealias=not _products_fit(bank))
    scale = bank.params.lambda_crit * (1.0 - epsilon ** 2)
    return ifft(scale * bank.symbol("red_F") * l3.spectral(), eta1.grid, real=True)


def finite_difference_gradient(functional: Callable[[RealField2D], float], eta: RealField2D,
                               direction: RealField2D, h: float = 1e-3) -> float:
    """
    Directional derivative by central differences at h and h/2 with Richardson
    extrapolation (exact for functionals of degree four or less)
    """
    def central(step: float) -> float:
        return (functional(eta + step * direction) - functional(eta - step * direction)) / (2 * step)

    coarse, fine = central(h), central(h / 2)
    return (4.0 * fine - coarse) / 3.0


def fit_order(epsilons: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(epsilon); nan with < 2 usable points"""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    usable = (eps > 0) & (err > 0) & np.isfinite(err)
    if usable.sum() < 2:
        return float("nan")
    X = np.log(eps[usable]).reshape(-1, 1)
    y = np.log(err[usable])
    model = LinearRegression().fit(X, y)
    return float(model.coef_[0])


@dataclass
class ConvergenceReport:
    """
    One expansion check over a decreasing list of epsilons

    rel_errors are |lhs - rhs|/|lhs| for the lemma checks; for norm checks lhs holds
    the error norm, rhs the normalising power of |||eta1|||, and rel_errors their ratio.
    """
    name: str
    epsilons: List[float]
    lhs: List[float]
    rhs: List[float]
    rel_errors: List[float]
    predicted_order: Optional[float] = None
    requested_epsilons: List[float] = field(default_factory=list)
    fitted_order: float = field(init=False)

    def __post_init__(self):
        if len(self.epsilons) != len(self.rel_errors):
            raise ValidationError("one relative error is needed per epsilon")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ValidationError(f"epsilons must be strictly decreasing, got {self.epsilons}")
        if not np.all(np.isfinite(self.rel_errors)):
            raise ValidationError(f"{self.name}: non-finite relative error in {self.rel_errors}")
        self.fitted_order = fit_order(self.epsilons, self.rel_errors)

    @property
    def monotone(self) -> bool:
        """Relative errors strictly decrease as epsilon decreases"""
        return all(b < a for a, b in zip(self.rel_errors, self.rel_errors[1:]))

    @property
    def order_threshold(self) -> Optional[float]:
        if self.predicted_order is None:
            return None
        return ORDER_FRACTION * self.predicted_order

    @property
    def passed(self) -> bool:
        if self.order_threshold is None:
            return self.monotone
        return self.monotone and self.fitted_order >= self.order_threshold

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epsilon": self.epsilons,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rel_error": self.rel_errors,
        })

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "epsilons": list(self.epsilons),
            "requested_epsilons": list(self.requested_epsilons),
            "lhs": list(self.lhs),
            "rhs": list(self.rhs),
            "rel_errors": list(self.rel_errors),
            "fitted_order": self.fitted_order,
            "predicted_order": self.predicted_order,
            "order_threshold": self.order_threshold,
            "monotone": self.monotone,
            "passed": self.passed,
        }


@dataclass
class _Packet:
    epsilon: float
    bank: MultiplierBank
    eta1: RealField2D
    plus: ComplexField2D
    F: RealField2D
    norm: float
    truncated_fraction: float


def _check_eps_list(eps_list: Sequence[float], minimum: int = 2) -> List[float]:
    eps = [float(e) for e in eps_list]
    if len(eps) < minimum:
        raise ValidationError(f"need at least {minimum} epsilons, got {len(eps)}")
    if any(not 0 < e < 1 for e in eps):
        raise ValidationError(f"epsilons must lie in (0, 1), got {eps}")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError(f"epsilons must be strictly decreasing, got {eps}")
    return eps


def _relative(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / abs(lhs) if lhs != 0 else abs(rhs)


class ExpansionVerifier:
    """Builds the wavepacket of a fixed envelope at each epsilon and checks expansions"""

    def __init__(self, zeta: ComplexField2D, params: DispersionParams,
                 coeffs: Optional[DSCoefficients] = None,
                 delta_fraction: float = config.DELTA_FRACTION,
                 truncation_limit: float = config.TRUNCATION_LIMIT,
                 max_modes: int = config.MAX_PHYSICAL_MODES):
        self.zeta = zeta
        self.params = params
        self.coeffs = coeffs if coeffs is not None else ds_coefficients(params)
        self.delta_fraction = delta_fraction
        self.truncation_limit = truncation_limit
        self.max_modes = max_modes
        self._packets: Dict[float, _Packet] = {}

    def packet(self, epsilon: float) -> _Packet:
        """eta1, its chi+ part, F(eta1) and |||eta1||| on the commensurate physical grid"""
        if epsilon in self._packets:
            return self._packets[epsilon]
        # lump_solver imports this module for reduction_F
        from lump_solver import physical_grid, wavepacket

        grid, eps_eff = physical_grid(self.zeta.grid, epsilon, self.params,
                                      self.delta_fraction, self.max_modes)
        bank = MultiplierBank(grid, self.params, self.delta_fraction)
        wp = wavepacket(self.zeta, eps_eff, self.params, bank, self.truncation_limit)
        eta1 = wp.eta1
        plus = ComplexField2D(grid, to_physical(bank.symbol("chi_plus") * eta1.spectral()))
        packet = _Packet(epsilon=eps_eff, bank=bank, eta1=eta1, plus=plus,
                         F=reduction_F(eta1, bank, eps_eff),
                         norm=eta1.scaled_norm(eps_eff, self.params.omega),
                         truncated_fraction=wp.truncated_fraction)
        logger.info("eps=%.6g (effective %.6g): grid %dx%d, |||eta1|||=%.6g, truncated %.2e",
                    epsilon, eps_eff, grid.nx, grid.nz, packet.norm, wp.truncated_fraction)
        self._packets[epsilon] = packet
        return packet

    def _plus_integrals(self, p: _Packet) -> Dict[str, float]:
        """int |eta1+|^4 and the riesz / m_DS quadratic forms of |eta1+|^2"""
        lifted = lift(p.plus)
        grid = lifted.grid
        pbank = p.bank.for_grid(grid)
        rho = np.abs(lifted.values) ** 2
        rho_hat = np.abs(to_spectral(rho)) ** 2
        return {
            "I4": grid.cell_area * float(np.sum(rho * rho)),
            "R": grid.area * float(np.sum(pbank.symbol("riesz11") * rho_hat)),
            "M": grid.area * float(np.sum(pbank.symbol("m_DS") * rho_hat)),
        }

    def _report(self, name: str, eps_list: Sequence[float], evaluate,
                predicted_order: Optional[float]) -> ConvergenceReport:
        eps = _check_eps_list(eps_list)
        lhs, rhs, errors, effective = [], [], [], []
        for epsilon in eps:
            p = self.packet(epsilon)
            left, right, error = evaluate(p)
            lhs.append(left)
            rhs.append(right)
            errors.append(error)
            effective.append(p.epsilon)
            logger.info("%s at eps=%.6g: lhs=%.6e rhs=%.6e error=%.3e",
                        name, p.epsilon, left, right, error)
        return ConvergenceReport(name, effective, lhs, rhs, errors, predicted_order,
                                 requested_epsilons=eps)

    def hf_corollary(self, eps_list: Sequence[float]) -> ConvergenceReport:
        """H(F(eta1)) against its three-term leading formula in |eta1+|"""
        c, omega = self.coeffs, self.params.omega
        lam, f = self.params.lambda_crit, float(self.params.f(omega))

        def evaluate(p: _Packet):
            t = self._plus_integrals(p)
            lhs = functional_H(p.F, p.bank)
            rhs = ((lam ** 2 * c.A_omega ** 2 / c.g_2omega + lam ** 2 * c.B_omega ** 2 / 2) * t["I4"]
                   - 2 * lam * f ** 2 * t["R"]
                   + lam * (lam * c.B_omega - 2 * f) ** 2 / 2 * t["M"])
            return lhs, rhs, _relative(lhs, rhs)

        return self._report("hf", eps_list, evaluate, 2 * THETA - 1)

    def k4_lemma(self, eps_list: Sequence[float]) -> ConvergenceReport:
        beta, omega = self.params.beta, self.params.omega

        def evaluate(p: _Packet):
            lhs = functional_K4(p.eta1 + p.F, p.bank)
            rhs = -0.75 * beta * omega ** 4 * self._plus_integrals(p)["I4"]
            return lhs, rhs, _relative(lhs, rhs)

        return self._report("k4", eps_list, evaluate, 2 * THETA - 1)

    def l4_lemma(self, eps_list: Sequence[float]) -> ConvergenceReport:
        omega = self.params.omega
        f, f2 = float(self.params.f(omega)), float(self.params.f(2 * omega))

        def evaluate(p: _Packet):
            t = self._plus_integrals(p)
            lhs = functional_L4(p.eta1 + p.F, p.bank)
            rhs = f * (f * f2 - 3 * omega ** 2) * t["I4"] + 2 * f ** 2 * t["R"]
            return lhs, rhs, _relative(lhs, rhs)

        return self._report("l4", eps_list, evaluate, 2 * THETA - 1)

    def l3_lemma(self, eps_list: Sequence[float]) -> ConvergenceReport:
        lam = self.params.lambda_crit

        def evaluate(p: _Packet):
            lhs = functional_L3(p.eta1 + p.F, p.bank)
            rhs = 2.0 * functional_H(p.F, p.bank) / (lam * (1.0 - p.epsilon ** 2))
            return lhs, rhs, _relative(lhs, rhs)

        return self._report("l3", eps_list, evaluate, 2 * THETA - 1)

    def approx_identities(self, eps_list: Sequence[float]) -> Dict[str, ConvergenceReport]:
        """Error norms of the single-carrier identities, scaled by |||eta1||| or |||eta1|||^2"""
        omega = self.params.omega
        f, g2 = float(self.params.f(omega)), float(self.params.g(2 * omega))
        f2 = float(self.params.f(2 * omega))

        def linear(p: _Packet) -> Dict[str, ComplexField2D]:
            u, bank = p.plus, p.bank
            return {
                "dx": derivative(u, 0) - 1j * omega * u,
                "dxx": derivative(u, 0, 2) + omega ** 2 * u,
                "dz": derivative(u, 1),
                "K0": apply_multiplier(u, "K0", bank) - f * u,
                "L0": apply_multiplier(u, "L0", bank),
            }

        def quadratic(p: _Packet) -> Dict[str, ComplexField2D]:
            sq, bank = product(p.plus, p.plus), p.bank
            return {
                "K0_square": apply_multiplier(sq, "K0", bank) - f2 * sq,
                "L0_square": apply_multiplier(sq, "L0", bank),
                "gtilde_inverse_square": apply_multiplier(sq, "red_F", bank) - sq * (1.0 / g2),
            }

        reports = {}
        for names, builder, power, order in (
                (("dx", "dxx", "dz", "K0", "L0"), linear, 1, 1.0),
                (("K0_square", "L0_square", "gtilde_inverse_square"), quadratic, 2, 1.0 + THETA)):
            for name in names:
                def evaluate(p: _Packet, name=name, builder=builder, power=power):
                    error = builder(p)[name].norm_l2()
                    scale = p.norm ** power
                    return error, scale, error / scale
                reports[name] = self._report(name, eps_list, evaluate, order)
        return reports

    def l3_gradient_expansion(self, eps_list: Sequence[float]) -> ConvergenceReport:
        """L3'(eta1) against A((eta1+)^2 + (eta1-)^2) + B eta1+ eta1- - 2f R11(eta1+ eta1-)"""
        c, omega = self.coeffs, self.params.omega
        f = float(self.params.f(omega))

        def evaluate(p: _Packet):
            exact = gradient_L3(p.eta1, p.bank, dealias=not _products_fit(p.bank))
            sq = product(p.plus, p.plus)
            mixed = product(p.plus, p.plus.conj()).real
            leading = (2.0 * c.A_omega * sq.real + c.B_omega * mixed
                       - 2.0 * f * apply_multiplier(mixed, "riesz11", p.bank))
            lhs = exact.norm_l2()
            error = (exact - leading).norm_l2()
            return lhs, error, error / lhs

        return self._report("l3_gradient", eps_list, evaluate, 1.0)

    def sup_estimate(self, eps_list: Sequence[float]) -> ConvergenceReport:
        """||eta1^||_L1 / (eps |log eps| |||eta1|||), which should stay bounded"""
        def evaluate(p: _Packet):
            top = p.eta1.fourier_l1_norm()
            bottom = p.epsilon * abs(math.log(p.epsilon)) * p.norm
            return top, bottom, top / bottom

        return self._report("sup_estimate", eps_list, evaluate, None)

    def F_estimate(self, eps_list: Sequence[float]) -> ConvergenceReport:
        """||F(eta1)||_3 / |||eta1|||^2, bounded and decaying like eps^theta"""
        def evaluate(p: _Packet):
            top = p.F.norm_h3()
            bottom = p.norm ** 2
            return top, bottom, top / bottom

        return self._report("F_estimate", eps_list, evaluate, THETA)


def verify_HF_corollary(zeta: ComplexField2D, params: DispersionParams, coeffs: DSCoefficients,
                        eps_list: Sequence[float], **options) -> ConvergenceReport:
    return ExpansionVerifier(zeta, params, coeffs, **options).hf_corollary(eps_list)


def verify_K4_L4_L3_lemmas(zeta: ComplexField2D, params: DispersionParams, coeffs: DSCoefficients,
                           eps_list: Sequence[float], **options) -> Dict[str, ConvergenceReport]:
    """One report per lemma, keyed 'k4', 'l4', 'l3'; the wavepackets are shared"""
    verifier = ExpansionVerifier(zeta, params, coeffs, **options)
    return {
        "k4": verifier.k4_lemma(eps_list),
        "l4": verifier.l4_lemma(eps_list),
        "l3": verifier.l3_lemma(eps_list),
    }


def verify_approx_identities(zeta: ComplexField2D, params: DispersionParams,
                             eps_list: Sequence[float], coeffs: Optional[DSCoefficients] = None,
                             **options) -> Dict[str, ConvergenceReport]:
    return ExpansionVerifier(zeta, params, coeffs, **options).approx_identities(eps_list)


def verify_L3_gradient_expansion(zeta: ComplexField2D, params: DispersionParams,
                                 coeffs: DSCoefficients, eps_list: Sequence[float],
                                 **options) -> ConvergenceReport:
    return ExpansionVerifier(zeta, params, coeffs, **options).l3_gradient_expansion(eps_list)


def sup_estimate_sweep(zeta: ComplexField2D, params: DispersionParams,
                       eps_list: Sequence[float], **options) -> ConvergenceReport:
    return ExpansionVerifier(zeta, params, **options).sup_estimate(eps_list)


def F_estimate_sweep(zeta: ComplexField2D, params: DispersionParams,
                     eps_list: Sequence[float], **options) -> ConvergenceReport:
    return ExpansionVerifier(zeta, params, **options).F_estimate(eps_list)
