"""
Lump Solver
Ground states of the Davey-Stewartson functional by Nehari-projected descent, and
reconstruction of the physical free surface from a DS envelope
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields as dataclass_fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from dispersion import DispersionParams, DSCoefficients
from ds_core import (EnergyBreakdown, energy, gradient, lower_bound_margin, nehari_project,
                     quadratic_symbol)
from exceptions import (CollapseError, DegenerateRayError, GridMismatchError,
                        NoConvergenceError, ResolutionError, TruncationError, ValidationError)
from fields import (ComplexField2D, MultiplierBank, RealField2D, SpectralGrid, apply_multiplier,
                    ifft, inner, to_physical, to_spectral, translate, zeros)
from reduction import reduction_F

logger = logging.getLogger(__name__)

STEP_RULES = ("fixed", "adaptive-BB")
ARMIJO_C = 1e-4
MAX_HALVINGS = 40
BB_RANGE = (1e-4, 1e2)
MIN_PHYSICAL_MODES = 16


@dataclass(frozen=True)
class SolverConfig:
    """Grid, initial guess and iteration settings for one ground-state solve"""
    nx: int = config.GRID_SIZE
    nz: int = config.GRID_SIZE
    lx: float = config.BOX_LENGTH
    lz: float = config.BOX_LENGTH
    amplitude: float = 1.0
    sigma_x: float = 1.0
    sigma_z: float = 1.0
    seed: int = 0
    perturbation: float = 0.0
    offset: Tuple[int, int] = (0, 0)
    step_rule: str = config.STEP_RULE
    step_size: float = 0.5
    max_iters: int = config.MAX_ITERS
    tol_residual: float = config.TOL_RESIDUAL
    recentre_every: int = config.RECENTRE_EVERY
    norm_bound: float = config.NORM_BOUND
    collapse_floor: float = config.COLLAPSE_FLOOR

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValidationError(f"tol_residual must be > 0, got {self.tol_residual}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step_rule not in STEP_RULES:
            raise ValidationError(f"step_rule must be one of {STEP_RULES}, got '{self.step_rule}'")
        if not self.step_size > 0:
            raise ValidationError(f"step_size must be > 0, got {self.step_size}")
        if self.recentre_every < 0:
            raise ValidationError(f"recentre_every must be >= 0, got {self.recentre_every}")
        if not (self.amplitude > 0 and self.sigma_x > 0 and self.sigma_z > 0):
            raise ValidationError("initial amplitude and widths must be positive")
        if self.perturbation < 0:
            raise ValidationError(f"perturbation must be >= 0, got {self.perturbation}")
        object.__setattr__(self, "offset", tuple(int(v) for v in self.offset))
        # grid validation (power of two, positive box)
        self.grid

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(int(self.nx), int(self.nz), float(self.lx), float(self.lz))

    @classmethod
    def from_dict(cls, settings: Dict[str, Any]) -> "SolverConfig":
        """Build from a settings dict, ignoring keys that are not solver fields"""
        names = {f.name for f in dataclass_fields(cls)}
        return cls(**{k: v for k, v in settings.items() if k in names})

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["offset"] = list(self.offset)
        return data


@dataclass
class SolveReport:
    zeta: ComplexField2D
    breakdown: EnergyBreakdown
    residual: float
    iterations: int
    trace: List[Tuple[float, float]]
    converged: bool
    method: str = "projected-gradient"
    lower_bound: Dict[str, float] = field(default_factory=dict)
    norm_bound_exceeded: bool = False

    def trace_frame(self) -> pd.DataFrame:
        """Per-iteration table: iteration, T0, residual"""
        frame = pd.DataFrame(self.trace, columns=["T0", "residual"])
        frame.insert(0, "iteration", np.arange(len(frame)))
        return frame

    def summary(self) -> Dict[str, Any]:
        """JSON-ready scalars (the field itself is written separately)"""
        b = self.breakdown
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "nehari_relative": abs(b.nehari) / b.Q if b.Q else float("nan"),
            "energy": b.to_dict(),
            "lower_bound": dict(self.lower_bound),
            "norm_h1": self.zeta.norm_h1(),
            "norm_bound_exceeded": self.norm_bound_exceeded,
            "grid": {"nx": self.zeta.grid.nx, "nz": self.zeta.grid.nz,
                     "lx": self.zeta.grid.lx, "lz": self.zeta.grid.lz},
        }


@dataclass
class WavepacketResult:
    epsilon: float
    eta1_tilde: RealField2D
    eta1: RealField2D
    truncated_fraction: float


@dataclass
class ReconstructionResult:
    epsilon: float
    epsilon_effective: float
    wave_speed: float
    eta1: RealField2D
    eta2_approx: RealField2D
    eta: RealField2D
    truncated_fraction: float = 0.0

    def spectra_disjoint(self, rel_tol: float = 1e-12) -> bool:
        """True when no mode carries both eta1 and F(eta1) above rel_tol of the peak"""
        a = np.abs(self.eta1.spectral())
        b = np.abs(self.eta2_approx.spectral())
        if a.max() == 0 or b.max() == 0:
            return True
        return not np.any((a > rel_tol * a.max()) & (b > rel_tol * b.max()))

    def summary(self) -> Dict[str, Any]:
        grid = self.eta.grid
        return {
            "epsilon": self.epsilon,
            "epsilon_effective": self.epsilon_effective,
            "wave_speed": self.wave_speed,
            "truncated_fraction": self.truncated_fraction,
            "spectra_disjoint": self.spectra_disjoint(),
            "eta1_sup": self.eta1.sup_norm(),
            "eta2_sup": self.eta2_approx.sup_norm(),
            "grid": {"nx": grid.nx, "nz": grid.nz, "lx": grid.lx, "lz": grid.lz},
        }


def gaussian_profile(grid: SpectralGrid, amplitude: float = 1.0, sigma_x: float = 1.0,
                     sigma_z: float = 1.0, offset: Tuple[int, int] = (0, 0)) -> ComplexField2D:
    """
    Centred anisotropic Gaussian envelope, circularly shifted by whole cells

    Args:
        grid: DS grid
        amplitude: Peak value
        sigma_x: Width along x
        sigma_z: Width along z
        offset: Shift in grid cells

    Returns:
        ComplexField2D
    """
    X, Z = grid.mesh
    values = amplitude * np.exp(-X ** 2 / (2 * sigma_x ** 2) - Z ** 2 / (2 * sigma_z ** 2))
    return translate(ComplexField2D(grid, values), offset)


def _smooth_noise(grid: SpectralGrid, seed: int) -> np.ndarray:
    """Unit-sup real noise restricted to the lowest quarter of the spectrum"""
    rng = np.random.default_rng(seed)
    k1, k2 = grid.wavenumbers
    kx, kz = grid.nyquist
    mask = (np.abs(k1) < kx / 4) & (np.abs(k2) < kz / 4)
    noise = to_physical(mask * to_spectral(rng.standard_normal(grid.shape))).real
    peak = np.max(np.abs(noise))
    return noise / peak if peak > 0 else noise


def initial_guess(cfg: SolverConfig, coeffs: DSCoefficients) -> ComplexField2D:
    """Gaussian with widths on the quadratic form's natural ellipse, plus optional seeded noise"""
    grid = cfg.grid
    sx = cfg.sigma_x * math.sqrt(coeffs.a1 / coeffs.a3)
    sz = cfg.sigma_z * math.sqrt(coeffs.a2 / coeffs.a3)
    zeta = gaussian_profile(grid, cfg.amplitude, sx, sz)
    if cfg.perturbation > 0:
        zeta = zeta + cfg.perturbation * cfg.amplitude * _smooth_noise(grid, cfg.seed)
    return translate(zeta, cfg.offset)


def preconditioner(grid: SpectralGrid, coeffs: DSCoefficients) -> np.ndarray:
    """Inverse of the gradient's linear symbol, 1/(2(a1 k1^2 + a2 k2^2 + a3))"""
    return 0.5 / quadratic_symbol(grid, coeffs.a1, coeffs.a2, coeffs.a3)


def _recentre(zeta: ComplexField2D) -> Tuple[ComplexField2D, Tuple[int, int]]:
    """Circular shift putting max|zeta| on the coordinate origin (centre index)"""
    grid = zeta.grid
    ix, iz = np.unravel_index(int(np.argmax(np.abs(zeta.values))), grid.shape)
    shift = (grid.nx // 2 - int(ix), grid.nz // 2 - int(iz))
    if shift == (0, 0):
        return zeta, shift
    return translate(zeta, shift), shift


def _check_norm(zeta: ComplexField2D, cfg: SolverConfig) -> bool:
    """Raise on collapse; return True when the diagnostic norm bound is exceeded"""
    norm1 = zeta.norm_h1()
    if norm1 < cfg.collapse_floor:
        raise CollapseError(
            f"||zeta||_1 = {norm1:.3e} fell below {cfg.collapse_floor:.1e}; "
            f"retry with a larger initial amplitude")
    if norm1 > cfg.norm_bound:
        logger.warning("||zeta||_1 = %.3e exceeds the diagnostic bound %.1e", norm1, cfg.norm_bound)
        return True
    return False


def _start(cfg: SolverConfig, coeffs: DSCoefficients
           ) -> Tuple[ComplexField2D, EnergyBreakdown, ComplexField2D, bool]:
    _, zeta = nehari_project(initial_guess(cfg, coeffs), coeffs)
    norm_flag = _check_norm(zeta, cfg)
    return zeta, energy(zeta, coeffs), gradient(zeta, coeffs), norm_flag


def _finish(zeta, b, residual, iterations, trace, converged, method, coeffs, cfg,
            norm_flag) -> SolveReport:
    report = SolveReport(zeta=zeta, breakdown=b, residual=residual, iterations=iterations,
                         trace=trace, converged=converged, method=method,
                         lower_bound=lower_bound_margin(zeta, b, coeffs),
                         norm_bound_exceeded=norm_flag)
    if not converged:
        raise NoConvergenceError(
            f"{method} stopped after {iterations} iterations with residual {residual:.3e} "
            f"(tol {cfg.tol_residual:.1e})", report)
    logger.info("%s converged in %d iterations: T0=%.12g residual=%.3e",
                method, iterations, b.T0, residual)
    return report


def solve_ground_state(cfg: SolverConfig, coeffs: DSCoefficients) -> SolveReport:
    """
    Minimise T0 over the Nehari set by projected, preconditioned gradient descent

    Each step takes zeta - tau*P*grad, rescales it onto the Nehari set and accepts it
    under an Armijo test (tau halved otherwise). Barzilai-Borwein lengths seed tau
    for the adaptive rule; the peak is recentred every recentre_every iterations.

    Args:
        cfg: Solver configuration
        coeffs: DS coefficients

    Returns:
        SolveReport with converged=True

    Raises:
        NoConvergenceError: max_iters reached or the line search stalled (report attached)
        CollapseError: the iterate collapsed towards zero
    """
    grid = cfg.grid
    precond = preconditioner(grid, coeffs)
    zeta, b, g, norm_flag = _start(cfg, coeffs)
    residual = g.norm_l2() / zeta.norm_l2()
    trace = [(b.T0, residual)]
    tau = cfg.step_size
    previous = None  # (zeta, gradient) of the last accepted step
    iterations = 0

    while residual > cfg.tol_residual and iterations < cfg.max_iters:
        d = ComplexField2D(grid, to_physical(precond * g.spectral()))
        slope = inner(g, d)

        if cfg.step_rule == "fixed":
            tau = cfg.step_size
        elif previous is not None:
            s = zeta - previous[0]
            y = g - previous[1]
            py = ComplexField2D(grid, to_physical(precond * y.spectral()))
            sy, ypy = inner(s, y), inner(py, y)
            if sy > 0 and ypy > 0:
                tau = float(np.clip(sy / ypy, *BB_RANGE))

        slack = 8.0 * np.finfo(float).eps * abs(b.T0)
        accepted = None
        for _ in range(MAX_HALVINGS):
            try:
                _, trial = nehari_project(zeta - tau * d, coeffs)
            except DegenerateRayError:
                tau *= 0.5
                continue
            bt = energy(trial, coeffs)
            if bt.T0 <= b.T0 - ARMIJO_C * tau * slope + slack:
                accepted = (trial, bt)
                break
            tau *= 0.5

        if accepted is None:
            logger.info("line search stalled at iteration %d (residual %.3e)", iterations, residual)
            break

        previous = (zeta, g)
        zeta, b = accepted
        g = gradient(zeta, coeffs)
        iterations += 1

        if cfg.recentre_every and iterations % cfg.recentre_every == 0:
            zeta, shift = _recentre(zeta)
            if shift != (0, 0):
                g = translate(g, shift)
                previous = None
                logger.info("iteration %d: recentred by %s", iterations, shift)

        norm_flag = _check_norm(zeta, cfg) or norm_flag
        residual = g.norm_l2() / zeta.norm_l2()
        trace.append((b.T0, residual))
        logger.debug("iteration %d: T0=%.15g residual=%.3e tau=%.3e",
                     iterations, b.T0, residual, tau)

    return _finish(zeta, b, residual, iterations, trace, residual <= cfg.tol_residual,
                   "projected-gradient", coeffs, cfg, norm_flag)


def scan_descent(cfg: SolverConfig, coeffs: DSCoefficients, scan_points: int = 48) -> SolveReport:
    """
    Independent second optimizer: preconditioned steepest descent whose step length
    is picked by a dense log-spaced scan of T0 along the projected path

    Args:
        cfg: Solver configuration (step_rule and step_size are ignored)
        coeffs: DS coefficients
        scan_points: Number of step lengths in each scan

    Returns:
        SolveReport with method 'scan-descent'
    """
    grid = cfg.grid
    precond = preconditioner(grid, coeffs)
    taus = np.geomspace(1e-3, 4.0, scan_points)
    zeta, b, g, norm_flag = _start(cfg, coeffs)
    residual = g.norm_l2() / zeta.norm_l2()
    trace = [(b.T0, residual)]
    iterations = 0

    while residual > cfg.tol_residual and iterations < cfg.max_iters:
        d = ComplexField2D(grid, to_physical(precond * g.spectral()))
        best = None
        for tau in taus:
            try:
                _, trial = nehari_project(zeta - tau * d, coeffs)
            except DegenerateRayError:
                continue
            bt = energy(trial, coeffs)
            if best is None or bt.T0 < best[1].T0:
                best = (trial, bt)
        if best is None or best[1].T0 >= b.T0:
            logger.info("scan found no decrease at iteration %d (residual %.3e)", iterations, residual)
            break

        zeta, b = best
        iterations += 1
        if cfg.recentre_every and iterations % cfg.recentre_every == 0:
            zeta, _ = _recentre(zeta)
        g = gradient(zeta, coeffs)
        norm_flag = _check_norm(zeta, cfg) or norm_flag
        residual = g.norm_l2() / zeta.norm_l2()
        trace.append((b.T0, residual))
        logger.debug("scan iteration %d: T0=%.15g residual=%.3e", iterations, b.T0, residual)

    return _finish(zeta, b, residual, iterations, trace, residual <= cfg.tol_residual,
                   "scan-descent", coeffs, cfg, norm_flag)


def _next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def physical_grid(ds_grid: SpectralGrid, epsilon: float, params: DispersionParams,
                  delta_fraction: float = config.DELTA_FRACTION,
                  max_modes: int = config.MAX_PHYSICAL_MODES) -> Tuple[SpectralGrid, float]:
    """
    Physical grid holding the epsilon-rescaled DS box

    The x-length is rounded to a whole number of carrier wavelengths so that omega is a
    grid wavenumber; epsilon is adjusted to match.

    Args:
        ds_grid: Grid of the DS envelope
        epsilon: Requested amplitude parameter (> 0)
        params: Dispersion parameters
        delta_fraction: delta/omega for the spectral balls
        max_modes: Largest allowed number of points per axis

    Returns:
        (grid, epsilon_effective)
    """
    if not epsilon > 0:
        raise ValidationError(f"physical grid needs epsilon > 0, got {epsilon}")
    carrier = max(1, int(round(params.omega * ds_grid.lx / (2 * np.pi * epsilon))))
    lx = 2 * np.pi * carrier / params.omega
    eps_eff = ds_grid.lx / lx
    lz = ds_grid.lz / eps_eff

    delta = delta_fraction * params.omega
    rx = min(math.ceil(delta * lx / (2 * np.pi)), ds_grid.nx // 2) + 1
    rz = min(math.ceil(delta * lz / (2 * np.pi)), ds_grid.nz // 2) + 1
    nx = _next_power_of_two(max(MIN_PHYSICAL_MODES, 4 * (carrier + rx) + 2))
    nz = _next_power_of_two(max(MIN_PHYSICAL_MODES, 4 * rz + 2))
    if max(nx, nz) > max_modes:
        raise ResolutionError(
            f"epsilon={epsilon} needs a {nx}x{nz} physical grid; limit is {max_modes} per axis")
    if abs(eps_eff - epsilon) > 1e-12:
        logger.info("epsilon %.6g adjusted to %.12g for %d carrier wavelengths",
                    epsilon, eps_eff, carrier)
    return SpectralGrid(nx, nz, lx, lz), eps_eff


def _reflect(coeffs: np.ndarray) -> np.ndarray:
    """c(-k) in the standard fft layout"""
    return np.roll(coeffs[::-1, ::-1], 1, axis=(0, 1))


def wavepacket(zeta: ComplexField2D, epsilon: float, params: DispersionParams,
               bank: MultiplierBank,
               truncation_limit: float = config.TRUNCATION_LIMIT) -> WavepacketResult:
    """
    Physical wavepacket 2Re(1/2 eps zeta(eps x, eps z) e^{i omega x}) and its cov(D) image

    The packet is placed mode by mode: DS coefficient (m1, m2) goes to physical mode
    (m1 + carrier, m2) scaled by eps/2 and the carrier's phase at the box corner.

    Args:
        zeta: DS envelope
        epsilon: Amplitude parameter; bank.grid must be the epsilon-rescaled DS box
        params: Dispersion parameters
        bank: Multiplier bank on the physical grid
        truncation_limit: Largest allowed share of spectral mass cut by chi

    Returns:
        WavepacketResult with eta1_tilde, eta1 and the truncated mass fraction
    """
    ds, phys = zeta.grid, bank.grid
    if not epsilon > 0:
        raise ValidationError(f"wavepacket needs epsilon > 0, got {epsilon}")
    if (abs(phys.lx * epsilon - ds.lx) > 1e-9 * ds.lx
            or abs(phys.lz * epsilon - ds.lz) > 1e-9 * ds.lz):
        raise GridMismatchError(
            f"physical box ({phys.lx:.6g}, {phys.lz:.6g}) is not the DS box scaled by 1/{epsilon}")
    carrier, _ = phys.mode_index(params.omega)
    bank.check_resolution()

    values = 0.5 * epsilon * (-1.0) ** carrier * zeta.spectral()
    total = float(np.sum(np.abs(values) ** 2))
    if total == 0:
        empty = zeros(phys)
        return WavepacketResult(epsilon, empty, empty, 0.0)

    tx = np.fft.fftfreq(ds.nx, 1.0 / ds.nx).astype(int) + carrier
    tz = np.fft.fftfreq(ds.nz, 1.0 / ds.nz).astype(int)
    valid_x = (tx >= -(phys.nx // 2)) & (tx < phys.nx // 2)
    valid_z = (tz >= -(phys.nz // 2)) & (tz < phys.nz // 2)
    plus = np.zeros(phys.shape, dtype=np.complex128)
    plus[np.ix_(tx[valid_x] % phys.nx, tz[valid_z] % phys.nz)] = values[np.ix_(valid_x, valid_z)]
    plus *= bank.symbol("chi_plus")

    kept = float(np.sum(np.abs(plus) ** 2))
    truncated = max(0.0, 1.0 - kept / total)
    if truncated > truncation_limit:
        raise TruncationError(
            f"chi cut {truncated:.2%} of the wavepacket's spectral mass "
            f"(limit {truncation_limit:.2%}); reduce epsilon or the envelope's bandwidth",
            truncated_fraction=truncated)

    eta1_tilde = ifft(plus + np.conj(_reflect(plus)), phys, real=True)
    eta1 = apply_multiplier(eta1_tilde, "cov", bank)
    logger.debug("wavepacket eps=%.6g on %s: truncated %.3e", epsilon, phys, truncated)
    return WavepacketResult(epsilon, eta1_tilde, eta1, truncated)


def reconstruct_surface(zeta: ComplexField2D, epsilon: float, params: DispersionParams,
                        coeffs: DSCoefficients, bank: Optional[MultiplierBank] = None,
                        delta_fraction: float = config.DELTA_FRACTION,
                        truncation_limit: float = config.TRUNCATION_LIMIT,
                        max_modes: int = config.MAX_PHYSICAL_MODES) -> ReconstructionResult:
    """
    Free surface eta = eta1 + F(eta1) and wave speed sqrt((1 - eps^2) Lambda)

    Args:
        zeta: DS envelope (typically a converged ground state)
        epsilon: Amplitude parameter; 0 gives the flat surface
        params: Dispersion parameters
        coeffs: DS coefficients for the same beta
        bank: Physical-grid multiplier bank; built with physical_grid when omitted
        delta_fraction: delta/omega when the bank is built here
        truncation_limit: Passed to wavepacket
        max_modes: Passed to physical_grid

    Returns:
        ReconstructionResult
    """
    if abs(coeffs.lambda_crit - params.lambda_crit) > 1e-12:
        raise ValidationError("coefficients and dispersion parameters disagree on Lambda")
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        flat = zeros(zeta.grid)
        return ReconstructionResult(0.0, 0.0, math.sqrt(params.lambda_crit), flat, flat, flat)

    if bank is None:
        grid, eps_eff = physical_grid(zeta.grid, epsilon, params, delta_fraction, max_modes)
        bank = MultiplierBank(grid, params, delta_fraction)
    else:
        eps_eff = zeta.grid.lx / bank.grid.lx

    packet = wavepacket(zeta, eps_eff, params, bank, truncation_limit)
    correction = reduction_F(packet.eta1, bank, eps_eff)
    wave_speed = math.sqrt((1.0 - eps_eff ** 2) * params.lambda_crit)
    logger.info("reconstructed surface at eps=%.6g on %s, c=%.12g", eps_eff, bank.grid, wave_speed)
    return ReconstructionResult(epsilon, eps_eff, wave_speed, packet.eta1, correction,
                                packet.eta1 + correction, packet.truncated_fraction)
