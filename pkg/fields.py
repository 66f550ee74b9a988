"""
Spectral Fields
Periodic 2D grid, real/complex field containers, the transform contract and the
Fourier-multiplier bank.

Transform convention (fixed once): coefficients are Fourier-series coefficients,
``c = fft2(u) / (nx*nz)`` (scipy ``norm="forward"``), so that

    u(x, z) = sum_k c_k exp(i k.(x - x0)),   int |u|^2 = area * sum |c_k|^2,

and spectral quadratures read ``int m(k) |u^(k)|^2 dk = area * sum m(k) |c_k|^2``.
Coordinates are centred: x_i = -lx/2 + i*lx/nx, x0 = -lx/2.
"""

import logging
import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import fft as sfft

from dispersion import (DispersionParams, kernel_f, riesz_ratio, symbol_gtilde,
                        symbol_gtilde2)
from exceptions import (GridMismatchError, ResolutionError, ShapeError,
                        UnknownSymbolError, ValidationError)

logger = logging.getLogger(__name__)

MIN_BALL_MODES = 8


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    """Bi-periodic grid of nx x nz points on a box of side lx x lz"""

    nx: int
    nz: int
    lx: float
    lz: float

    def __post_init__(self):
        for name in ("nx", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 16 or not _is_power_of_two(int(n)):
                raise ValidationError(f"{name} must be a power of two >= 16, got {n}")
        if not (self.lx > 0 and self.lz > 0):
            raise ValidationError(f"box lengths must be positive, got {self.lx}, {self.lz}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dz(self) -> float:
        return self.lz / self.nz

    @property
    def area(self) -> float:
        return self.lx * self.lz

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.lx + self.dx * np.arange(self.nx)

    @cached_property
    def z(self) -> np.ndarray:
        return -0.5 * self.lz + self.dz * np.arange(self.nz)

    @cached_property
    def k1(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @cached_property
    def k2(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nz, d=self.dz)

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinates (X, Z), indexing 'ij'"""
        return np.meshgrid(self.x, self.z, indexing="ij")

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-mode (K1, K2) in the standard fft layout, indexing 'ij'"""
        return np.meshgrid(self.k1, self.k2, indexing="ij")

    @property
    def nyquist(self) -> Tuple[float, float]:
        return (np.pi / self.dx, np.pi / self.dz)

    def padded(self, factor: int = 2) -> "SpectralGrid":
        """Same box with factor times as many points per axis"""
        return SpectralGrid(self.nx * factor, self.nz * factor, self.lx, self.lz)

    def check(self, values: np.ndarray):
        if values.shape != self.shape:
            raise ShapeError(f"array of shape {values.shape} does not match grid {self.shape}")

    def mode_index(self, k1: float, k2: float = 0.0) -> Tuple[int, int]:
        """Integer mode numbers of a wavenumber; raises if it is not on the lattice"""
        m1 = k1 * self.lx / (2.0 * np.pi)
        m2 = k2 * self.lz / (2.0 * np.pi)
        r1, r2 = int(round(m1)), int(round(m2))
        if abs(m1 - r1) > 1e-9 or abs(m2 - r2) > 1e-9:
            raise ResolutionError(f"wavenumber ({k1}, {k2}) is not commensurate with the grid")
        return r1, r2


def to_spectral(values: np.ndarray) -> np.ndarray:
    return sfft.fft2(values, norm="forward")


def to_physical(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifft2(coeffs, norm="forward")


class _FieldOps:
    """Norms and arithmetic shared by both field types"""

    grid: SpectralGrid
    values: np.ndarray

    # numpy scalars defer to our reflected operators
    __array_ufunc__ = None

    def spectral(self) -> np.ndarray:
        return to_spectral(self.values)

    def _weighted_norm(self, weight: Optional[np.ndarray]) -> float:
        power = np.abs(self.spectral()) ** 2
        if weight is not None:
            power = weight * power
        return float(np.sqrt(self.grid.area * power.sum()))

    def norm_l2(self) -> float:
        return float(np.sqrt(self.grid.cell_area * np.sum(np.abs(self.values) ** 2)))

    def norm_h(self, s: float) -> float:
        """Sobolev norm (int (1+|k|^2)^s |u^|^2 dk)^(1/2)"""
        k1, k2 = self.grid.wavenumbers
        return self._weighted_norm((1.0 + k1 ** 2 + k2 ** 2) ** s)

    def norm_h1(self) -> float:
        return self.norm_h(1)

    def norm_h3(self) -> float:
        return self.norm_h(3)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scaled_norm(self, epsilon: float, omega: float) -> float:
        """|||u|||^2 = int (1 + eps^-2((|k1|-omega)^2 + k2^2)) |u^|^2 dk"""
        if epsilon <= 0:
            raise ValidationError(f"scaled norm needs epsilon > 0, got {epsilon}")
        k1, k2 = self.grid.wavenumbers
        weight = 1.0 + ((np.abs(k1) - omega) ** 2 + k2 ** 2) / epsilon ** 2
        return self._weighted_norm(weight)

    def fourier_l1_norm(self) -> float:
        """int |u^(k)| dk for the unitary transform; equals 2*pi*sum |c_k|"""
        return float(2.0 * np.pi * np.abs(self.spectral()).sum())

    def with_values(self, values: np.ndarray):
        return type(self)(self.grid, values)

    def _check_same_grid(self, other: "_FieldOps"):
        if other.grid != self.grid:
            raise GridMismatchError(f"fields live on different grids: {self.grid} vs {other.grid}")

    def _combine(self, other, op):
        if isinstance(other, _FieldOps):
            self._check_same_grid(other)
            values = op(self.values, other.values)
        else:
            values = op(self.values, other)
        if np.iscomplexobj(values):
            return ComplexField2D(self.grid, values)
        return RealField2D(self.grid, values)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        if isinstance(other, _FieldOps):
            return NotImplemented  # pointwise products go through product()
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class ComplexField2D(_FieldOps):
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        self.grid.check(values)
        object.__setattr__(self, "values", values)

    def conj(self) -> "ComplexField2D":
        return ComplexField2D(self.grid, np.conj(self.values))

    @property
    def real(self) -> "RealField2D":
        return RealField2D(self.grid, self.values.real)

    def abs2(self) -> "RealField2D":
        return RealField2D(self.grid, np.abs(self.values) ** 2)


@dataclass(frozen=True, eq=False)
class RealField2D(_FieldOps):
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if np.iscomplexobj(values):
            raise ValidationError("RealField2D needs real samples; take .real explicitly")
        values = values.astype(np.float64, copy=False)
        self.grid.check(values)
        object.__setattr__(self, "values", values)

    def as_complex(self) -> ComplexField2D:
        return ComplexField2D(self.grid, self.values)


Field = Union[ComplexField2D, RealField2D]


def zeros(grid: SpectralGrid, real: bool = True) -> Field:
    if real:
        return RealField2D(grid, np.zeros(grid.shape))
    return ComplexField2D(grid, np.zeros(grid.shape, dtype=np.complex128))


def fft(field: Field) -> np.ndarray:
    """Fourier-series coefficients of a field (standard fft layout)"""
    field.grid.check(field.values)
    return field.spectral()


def ifft(coeffs: np.ndarray, grid: SpectralGrid, real: bool = False) -> Field:
    """Field from coefficients; real=True takes the real part (conjugate symmetry)"""
    coeffs = np.asarray(coeffs)
    grid.check(coeffs)
    values = to_physical(coeffs)
    if real:
        return RealField2D(grid, values.real)
    return ComplexField2D(grid, values)


def single_mode(grid: SpectralGrid, k1: float, k2: float = 0.0, amplitude: complex = 1.0,
                real: bool = True) -> Field:
    """amplitude*cos(k.x) (real) or amplitude*exp(i k.x) (complex) on a commensurate grid"""
    grid.mode_index(k1, k2)
    X, Z = grid.mesh
    phase = k1 * X + k2 * Z
    if real:
        return RealField2D(grid, np.real(amplitude) * np.cos(phase))
    return ComplexField2D(grid, amplitude * np.exp(1j * phase))


def pad_coefficients(coeffs: np.ndarray, factor: int = 2) -> np.ndarray:
    """Zero-pad a coefficient array onto a grid factor times finer"""
    nx, nz = coeffs.shape
    out = np.zeros((factor * nx, factor * nz), dtype=np.complex128)
    ox, oz = (factor * nx - nx) // 2, (factor * nz - nz) // 2
    out[ox:ox + nx, oz:oz + nz] = np.fft.fftshift(coeffs)
    return np.fft.ifftshift(out)


def truncate_coefficients(coeffs: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Keep only the modes of a coarser grid of the given shape"""
    nx, nz = shape
    big_x, big_z = coeffs.shape
    ox, oz = (big_x - nx) // 2, (big_z - nz) // 2
    return np.fft.ifftshift(np.fft.fftshift(coeffs)[ox:ox + nx, oz:oz + nz])


def lift(field: Field, factor: int = 2) -> Field:
    """Exact spectral interpolation of a field onto the padded grid"""
    grid = field.grid.padded(factor)
    coeffs = pad_coefficients(field.spectral(), factor)
    return ifft(coeffs, grid, real=isinstance(field, RealField2D))


def restrict(field: Field, grid: SpectralGrid) -> Field:
    """Spectral truncation of a (padded) field onto a coarser grid with the same box"""
    if (field.grid.lx, field.grid.lz) != (grid.lx, grid.lz):
        raise GridMismatchError("restrict needs grids on the same box")
    coeffs = truncate_coefficients(field.spectral(), grid.shape)
    return ifft(coeffs, grid, real=isinstance(field, RealField2D))


def product(a: Field, b: Field) -> Field:
    """De-aliased pointwise product, returned on the grid of a"""
    a._check_same_grid(b)
    lifted = lift(a).values * lift(b).values
    padded_grid = a.grid.padded()
    if np.iscomplexobj(lifted):
        padded = ComplexField2D(padded_grid, lifted)
    else:
        padded = RealField2D(padded_grid, lifted)
    return restrict(padded, a.grid)


def integrate(field: Field) -> Union[float, complex]:
    """Trapezoid (spectrally exact) integral over the periodic box"""
    total = field.grid.cell_area * field.values.sum()
    return float(total) if isinstance(field, RealField2D) else complex(total)


def inner(a: Field, b: Field) -> float:
    """Real pairing Re int a conj(b)"""
    a._check_same_grid(b)
    return float(a.grid.cell_area * np.real(np.vdot(b.values, a.values)))


def translate(field: Field, shift: Tuple[int, int]) -> Field:
    """Circular shift by whole grid cells"""
    return field.with_values(np.roll(field.values, shift, axis=(0, 1)))


def derivative(field: Field, axis: int, order: int = 1) -> Field:
    """
    Spectral derivative (i k)^order along axis 0 (x) or 1 (z)

    Args:
        field: Real or complex field
        axis: 0 for x, 1 for z
        order: 1 or 2

    Returns:
        Field of the same kind
    """
    if order not in (1, 2):
        raise ValidationError(f"derivative order must be 1 or 2, got {order}")
    if axis not in (0, 1):
        raise ValidationError(f"axis must be 0 or 1, got {axis}")
    k = field.grid.wavenumbers[axis]
    coeffs = (1j * k) ** order * field.spectral()
    return ifft(coeffs, field.grid, real=isinstance(field, RealField2D))


# symbols whose values at k and -k coincide, so real input stays real
EVEN_SYMBOLS = frozenset({"K0", "L0", "H0", "chi", "m_DS", "red_F", "cov", "riesz11", "gtilde"})
SYMBOL_IDS = EVEN_SYMBOLS | {"chi_plus", "chi_minus"}


class MultiplierBank:
    """Per-mode symbol arrays for one grid, built lazily and cached"""

    def __init__(self, grid: SpectralGrid, params: DispersionParams,
                 delta_fraction: float = 0.25):
        if not 0 < delta_fraction < 1.0 / 3.0:
            raise ValidationError(f"delta must satisfy 0 < delta < omega/3, got {delta_fraction}*omega")
        self.grid = grid
        self.params = params
        self.delta_fraction = delta_fraction
        self.delta = delta_fraction * params.omega
        self._symbols: Dict[str, np.ndarray] = {}
        self._banks: Dict[SpectralGrid, "MultiplierBank"] = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return f"MultiplierBank({self.grid}, beta={self.params.beta}, delta={self.delta:.6g})"

    def for_grid(self, grid: SpectralGrid) -> "MultiplierBank":
        """Bank with the same parameters on another grid (e.g. the padded one)"""
        if grid == self.grid:
            return self
        with self._lock:
            if grid not in self._banks:
                self._banks[grid] = MultiplierBank(grid, self.params, self.delta_fraction)
            return self._banks[grid]

    def symbol(self, symbol_id: str) -> np.ndarray:
        if symbol_id not in SYMBOL_IDS:
            raise UnknownSymbolError(f"unknown multiplier symbol '{symbol_id}'")
        with self._lock:
            if symbol_id not in self._symbols:
                self._symbols[symbol_id] = self._build(symbol_id)
            return self._symbols[symbol_id]

    def _build(self, symbol_id: str) -> np.ndarray:
        k1, k2 = self.grid.wavenumbers
        p = self.params
        r2 = k1 * k1 + k2 * k2
        nonzero = r2 > 0
        safe_r2 = np.where(nonzero, r2, 1.0)

        if symbol_id in ("K0", "L0", "H0"):
            f = kernel_f(np.sqrt(r2))[0]
            numerator = {"K0": k1 * k1, "L0": k1 * k2, "H0": k2 * k2}[symbol_id]
            return np.where(nonzero, numerator / safe_r2, 0.0) * f
        if symbol_id == "riesz11":
            return riesz_ratio(k1, k2)
        if symbol_id == "chi_plus":
            return (((k1 - p.omega) ** 2 + k2 ** 2) < self.delta ** 2).astype(float)
        if symbol_id == "chi_minus":
            return (((k1 + p.omega) ** 2 + k2 ** 2) < self.delta ** 2).astype(float)
        if symbol_id == "chi":
            return self.symbol("chi_plus") + self.symbol("chi_minus")
        if symbol_id == "m_DS":
            denom = (1.0 - p.lambda_crit) * k1 * k1 + k2 * k2
            return np.where(nonzero, k1 * k1 / np.where(nonzero, denom, 1.0), 0.0)
        if symbol_id == "gtilde":
            return symbol_gtilde((k1, k2), p)
        if symbol_id == "red_F":
            chi = self.symbol("chi")
            gt = self.symbol("gtilde")
            return np.where(chi > 0, 0.0, 1.0 / np.where(chi > 0, 1.0, gt))
        if symbol_id == "cov":
            chi = self.symbol("chi")
            gt = self.symbol("gtilde")
            g2 = symbol_gtilde2((k1, k2), p)
            # removable singularity at the carriers: both vanish with equal Hessians
            ratio = np.where(gt > 1e-13, g2 / np.where(gt > 1e-13, gt, 1.0), 1.0)
            return np.sqrt(np.maximum(ratio, 0.0)) * chi
        raise UnknownSymbolError(symbol_id)

    def ball_mode_counts(self) -> Tuple[int, int]:
        return (int(self.symbol("chi_plus").sum()), int(self.symbol("chi_minus").sum()))

    def check_resolution(self):
        """Raise ResolutionError unless each delta-ball holds at least MIN_BALL_MODES modes"""
        plus, minus = self.ball_mode_counts()
        if min(plus, minus) < MIN_BALL_MODES:
            raise ResolutionError(
                f"delta-balls hold {plus}/{minus} modes on {self.grid}; need {MIN_BALL_MODES}")


def apply_multiplier(field: Field, symbol_id: str, bank: MultiplierBank) -> Field:
    """
    Pointwise spectral multiplication by a bank symbol

    Args:
        field: Input field on the bank's grid
        symbol_id: One of SYMBOL_IDS
        bank: Multiplier bank for field.grid (or a grid derived from it)

    Returns:
        Real field when the input is real and the symbol even, complex otherwise
    """
    if field.grid != bank.grid:
        bank = _bank_for(field, bank)
    symbol = bank.symbol(symbol_id)
    coeffs = symbol * field.spectral()
    real = isinstance(field, RealField2D) and symbol_id in EVEN_SYMBOLS
    return ifft(coeffs, field.grid, real=real)


def _bank_for(field: Field, bank: MultiplierBank) -> MultiplierBank:
    """Allow padded grids of the bank's box; anything else is a mismatch"""
    if (field.grid.lx, field.grid.lz) != (bank.grid.lx, bank.grid.lz):
        raise GridMismatchError(f"field grid {field.grid} does not match bank grid {bank.grid}")
    return bank.for_grid(field.grid)


def split_spectrum(eta: RealField2D, bank: MultiplierBank
                   ) -> Tuple[ComplexField2D, ComplexField2D, RealField2D]:
    """
    Split a real field into its chi+ part, chi- part and the remainder

    Args:
        eta: Real field on the bank's grid
        bank: Multiplier bank

    Returns:
        (eta1_plus, eta1_minus, eta2) with eta = 2 Re(eta1_plus) + eta2
    """
    if eta.grid != bank.grid:
        raise GridMismatchError(f"field grid {eta.grid} does not match bank grid {bank.grid}")
    bank.check_resolution()
    coeffs = eta.spectral()
    plus = ComplexField2D(eta.grid, to_physical(bank.symbol("chi_plus") * coeffs))
    minus = plus.conj()
    eta2 = RealField2D(eta.grid, eta.values - 2.0 * plus.values.real)
    return plus, minus, eta2


def to_frame(field: Field) -> pd.DataFrame:
    """Long-format table x, z, value (real) or x, z, re, im (complex), row-major"""
    X, Z = field.grid.mesh
    data = {"x": X.ravel(), "z": Z.ravel()}
    if isinstance(field, RealField2D):
        data["value"] = field.values.ravel()
    else:
        data["re"] = field.values.real.ravel()
        data["im"] = field.values.imag.ravel()
    return pd.DataFrame(data)


def from_frame(frame: pd.DataFrame, grid: SpectralGrid) -> Field:
    """Inverse of to_frame for a table written in row-major order"""
    if len(frame) != grid.size:
        raise ShapeError(f"table has {len(frame)} rows, grid needs {grid.size}")
    if "value" in frame.columns:
        return RealField2D(grid, frame["value"].to_numpy().reshape(grid.shape))
    if {"re", "im"} <= set(frame.columns):
        values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        return ComplexField2D(grid, values.reshape(grid.shape))
    raise ShapeError(f"table columns {list(frame.columns)} hold no field values")
