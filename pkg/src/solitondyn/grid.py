"""Uniform periodic grids and complex fields sampled on them.

All spectral operations go through :mod:`scipy.fft`; the worker count is a
module-level setting so the CLI ``--threads`` flag can change it once.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import DimensionError, GridMismatchError

_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    """Cubic periodic grid ``[-box/2, box/2)^dims`` with ``n`` points per axis."""

    n: int
    box: float
    dims: int = 1

    def __post_init__(self):
        if self.dims not in (1, 3):
            raise DimensionError(f"dims must be 1 or 3, got {self.dims}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.box <= 0:
            raise ValueError("box must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def dx(self) -> float:
        return self.box / self.n

    @property
    def dv(self) -> float:
        return self.dx**self.dims

    @cached_property
    def x1d(self) -> np.ndarray:
        return -self.box / 2 + self.dx * np.arange(self.n)

    @cached_property
    def k1d(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, self.dx)

    def _axis_view(self, arr: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.dims
        shape[axis] = self.n
        return arr.reshape(shape)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        return tuple(self._axis_view(self.x1d, j) for j in range(self.dims))

    @cached_property
    def kvec(self) -> tuple[np.ndarray, ...]:
        return tuple(self._axis_view(self.k1d, j) for j in range(self.dims))

    @cached_property
    def kvec_odd(self) -> tuple[np.ndarray, ...]:
        # first-derivative symbols with the Nyquist mode zeroed so real input stays real
        k = self.k1d.copy()
        k[self.n // 2] = 0.0
        return tuple(self._axis_view(k, j) for j in range(self.dims))

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for kj in self.kvec:
            out = out + kj**2
        return out

    @cached_property
    def r(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for xj in self.coords:
            out = out + xj**2
        return np.sqrt(out)

    def zeros(self, dtype=complex) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)

    # spectral transforms -------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.fftn(f, workers=_WORKERS)

    def ifft(self, f: np.ndarray) -> np.ndarray:
        return sfft.ifftn(f, workers=_WORKERS)

    def rfft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, workers=_WORKERS)

    def irfft(self, f: np.ndarray) -> np.ndarray:
        return sfft.irfftn(f, s=self.shape, workers=_WORKERS)

    def apply_multiplier(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier; real input gives real output."""
        if np.isrealobj(f):
            return self.ifft(symbol * self.fft(f)).real
        return self.ifft(symbol * self.fft(f))

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        return self.apply_multiplier(f, 1j * self.kvec_odd[axis])

    def gradient(self, f: np.ndarray) -> list[np.ndarray]:
        fh = self.fft(f)
        out = []
        for kj in self.kvec_odd:
            g = self.ifft(1j * kj * fh)
            out.append(g.real if np.isrealobj(f) else g)
        return out

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.apply_multiplier(f, -self.k2)

    # quadrature -----------------------------------------------------------
    def integrate(self, f: np.ndarray):
        return np.sum(f) * self.dv

    def norm2(self, f: np.ndarray) -> float:
        return float(np.sum(np.abs(f) ** 2) * self.dv)

    def grad_norm2(self, f: np.ndarray) -> float:
        # Parseval: sum |k|^2 |f_k|^2 dv / N
        fh = self.fft(f)
        return float(np.sum(self.k2 * np.abs(fh) ** 2) * self.dv / fh.size)

    def h1_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.norm2(f) + self.grad_norm2(f)))

    def boundary_mass_fraction(self, f: np.ndarray, width: float | None = None) -> float:
        """Fraction of ``|f|^2`` within ``width`` of the box faces (default: box/20)."""
        width = self.box / 20 if width is None else width
        mask = np.zeros(self.shape, dtype=bool)
        for xj in self.coords:
            mask = mask | (np.abs(xj) > self.box / 2 - width)
        total = np.sum(np.abs(f) ** 2)
        if total == 0:
            return 0.0
        return float(np.sum(np.abs(f[mask]) ** 2) / total)


@dataclass
class Field:
    """Complex (or real) samples on a :class:`Grid`."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @property
    def dims(self) -> int:
        return self.grid.dims

    def like(self, values) -> "Field":
        return Field(values, self.grid)

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.grid)

    def __add__(self, other):
        return self.like(self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return self.like(self.values - _vals(other, self.grid))

    def __mul__(self, c):
        return self.like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def _vals(other, grid: Grid):
    if isinstance(other, Field):
        check_same_grid(other.grid, grid)
        return other.values
    return other


def check_same_grid(g1: Grid, g2: Grid) -> None:
    if g1 != g2:
        raise GridMismatchError(f"grid mismatch: {g1} vs {g2}")
