"""Self-interaction potentials ``Phi[rho]`` for the two supported equations.

Hartree (3D): ``Phi[rho] = |x|^-1 * rho`` discretised with a spherically
truncated Coulomb kernel.  GP (1D): ``Phi[rho] = rho`` (local cubic term).
The same object is used by the PDE stepper, the energy, and the linearised
operators so that all of them see one discretisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .grid import Grid


@dataclass(frozen=True)
class LocalInteraction:
    """Cubic (Gross-Pitaevskii) interaction: ``Phi[rho] = rho``."""

    grid: Grid

    def potential(self, rho: np.ndarray) -> np.ndarray:
        return np.asarray(rho, dtype=float)


@dataclass(frozen=True)
class HartreeKernel:
    """Truncated Coulomb multiplier ``4 pi (1 - cos(|k| R)) / |k|^2``.

    ``R`` defaults to ``box/2``.  The k=0 value is ``2 pi R^2``.  Exact for
    densities whose support has diameter below ``box/2``.
    """

    grid: Grid
    radius: float | None = None
    multiplier: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.grid.dims != 3:
            raise DimensionError("HartreeKernel requires a 3D grid")
        R = self.grid.box / 2 if self.radius is None else float(self.radius)
        object.__setattr__(self, "radius", R)
        object.__setattr__(self, "multiplier", truncated_coulomb_multiplier(self.grid, R))

    def potential(self, rho: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.irfft(self.multiplier * g.rfft(np.asarray(rho, dtype=float)))


def truncated_coulomb_multiplier(grid: Grid, radius: float) -> np.ndarray:
    """Multiplier on the rfft half-grid."""
    n = grid.n
    k = grid.k1d
    kz = 2 * np.pi * np.fft.rfftfreq(n, grid.dx)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2
    kk = np.sqrt(k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        # 1 - cos(kR) = 2 sin^2(kR/2) avoids cancellation at small k
        mult = 8 * np.pi * np.sin(kk * radius / 2) ** 2 / k2
    mult[0, 0, 0] = 2 * np.pi * radius**2
    return mult


def make_interaction(grid: Grid):
    """Default interaction for a grid: local in 1D, truncated Coulomb in 3D."""
    if grid.dims == 1:
        return LocalInteraction(grid)
    return HartreeKernel(grid)
