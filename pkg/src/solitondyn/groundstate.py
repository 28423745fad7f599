"""Ground states of the Hartree (3D) and cubic GP (1D) equations.

The 3D profile solves ``-1/2 Lap eta - (|x|^-1 * eta^2) eta + lam eta = 0``
on a radial grid.  Writing ``phi = r eta`` turns the radial Laplacian into
``phi''`` with Dirichlet conditions at ``r = 0`` and ``r = r_max``, which the
type-I sine transform diagonalises.  The Coulomb potential is the Newton
shell integral; in the sine basis it is the Dirichlet solve of
``-psi'' = 4 pi r eta^2`` plus the harmonic part ``m r / r_max``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dst, idst
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import DimensionError, DomainError, IterationLimitError, SolverInstabilityError
from .grid import Field, Grid
from .interaction import HartreeKernel, LocalInteraction, make_interaction

log = logging.getLogger(__name__)

TARGET_MASS = 2.0
MIN_GRID_POINTS = 128


@dataclass(frozen=True)
class RadialProfile:
    """Radial samples of eta with ``r_grid[0] == 0``."""

    r_grid: np.ndarray
    values: np.ndarray
    lam: float
    residual_history: tuple = field(default=(), compare=False, repr=False)

    @property
    def r_max(self) -> float:
        # the Dirichlet wall sits one spacing beyond the last stored sample
        return float(self.r_grid[-1] + self.dr)

    @property
    def dr(self) -> float:
        return float(self.r_grid[1] - self.r_grid[0])

    @property
    def n(self) -> int:
        return len(self.r_grid)

    @property
    def mass(self) -> float:
        return radial_mass(self)

    def __call__(self, r):
        return interpolate_profile(self, r)


# ---------------------------------------------------------------------------
# radial spectral machinery


class _SineBasis:
    def __init__(self, r_max: float, n: int):
        self.r_max = r_max
        self.n = n
        self.dr = r_max / n
        self.r = self.dr * np.arange(1, n)
        self.k = np.pi * np.arange(1, n) / r_max

    def fwd(self, f):
        return dst(f, type=1)

    def inv(self, c):
        return idst(c, type=1)

    def neg_second_derivative(self, phi):
        return self.inv(self.k**2 * self.fwd(phi))

    def potential(self, phi, with_origin=False):
        """Newton-shell potential ``Phi = |x|^-1 * eta^2`` from ``phi = r eta``."""
        m = 4 * np.pi * np.sum(phi**2) * self.dr
        src = 4 * np.pi * phi**2 / self.r
        psi0 = self.inv(self.fwd(src) / self.k**2)
        Phi = (psi0 + m * self.r / self.r_max) / self.r
        if with_origin:
            return self.origin_value(psi0) + m / self.r_max, Phi
        return Phi

    def residual(self, phi, lam):
        """Residual of the stationary equation for eta (not phi)."""
        res = 0.5 * self.neg_second_derivative(phi) - self.potential(phi) * phi + lam * phi
        return res / self.r

    def origin_value(self, phi):
        # eta(0) = phi'(0) = sum_m c_m k_m with phi = sum c_m sin(k_m r)
        c = self.fwd(phi) / self.n
        return float(np.sum(c * self.k))


def solve_hartree_ground_state(
    r_max: float = 30.0,
    n_points: int = 2048,
    tol: float = 1e-10,
    lam: float | None = None,
    max_iter: int = 2000,
) -> RadialProfile:
    """Radial Hartree ground state by spectral renormalisation.

    With ``lam=None`` the equation is solved at ``lam = 1`` and the result is
    rescaled so that ``||eta||^2 = 2``; otherwise the profile for the given
    eigenvalue is returned as is.
    """
    if r_max < 20 or n_points < 512 or tol <= 0:
        raise DomainError("need r_max >= 20, n_points >= 512, tol > 0")
    solve_lam = 1.0 if lam is None else float(lam)
    if solve_lam <= 0:
        raise DomainError("lambda must be positive")
    basis = _SineBasis(r_max, n_points)
    r, k = basis.r, basis.k
    A = 0.5 * k**2 + solve_lam

    kappa = np.sqrt(2 * solve_lam)
    phi = r * np.exp(-kappa * r)
    history = []
    prev = None
    for it in range(max_iter):
        N_hat = basis.fwd(basis.potential(phi) * phi)
        phi_hat = basis.fwd(phi)
        M = np.dot(phi_hat, A * phi_hat) / np.dot(phi_hat, N_hat)
        phi = basis.inv(M**1.5 * N_hat / A)
        res = float(np.max(np.abs(basis.residual(np.sqrt(M) * phi, solve_lam))))
        if np.min(phi) < -1e-8 * np.max(phi):
            raise SolverInstabilityError(f"negative profile values at iteration {it}")
        if res < tol and history and res >= history[-1]:
            # stalled at the roundoff floor: keep the better previous iterate
            phi, M = prev
            break
        history.append(res)
        prev = (phi, M)
        if res < 0.1 * tol:
            break
    else:
        raise IterationLimitError(
            f"ground state not converged after {max_iter} iterations", residual=history[-1]
        )
    phi = np.sqrt(M) * phi
    log.debug("radial solve converged in %d iterations, residual %.3e", it + 1, history[-1])

    eta = phi / r
    values = np.concatenate([[basis.origin_value(phi)], eta])
    r_grid = np.concatenate([[0.0], r])
    values = _clean_tail(r_grid, values, solve_lam, 4 * np.pi * np.sum(phi**2) * basis.dr)
    prof = RadialProfile(r_grid, values, solve_lam, tuple(history))
    if lam is None:
        mu = TARGET_MASS / radial_mass(prof)
        prof = rescale(prof, mu)
    return prof


def _clean_tail(r, eta, lam, mass, floor=1e-13):
    """Replace roundoff-dominated tail samples by the Coulomb-modified asymptote.

    Far out ``eta ~ A r^(m/kappa - 1) exp(-kappa r)``.
    """
    kappa = np.sqrt(2 * lam)
    small = np.nonzero(eta < floor * eta[0])[0]
    if len(small) == 0:
        return eta
    j = small[0]
    beta = mass / kappa - 1
    A = eta[j - 1] / (r[j - 1] ** beta * np.exp(-kappa * r[j - 1]))
    out = eta.copy()
    out[j:] = A * r[j:] ** beta * np.exp(-kappa * r[j:])
    return out


def _basis_for(profile: RadialProfile) -> _SineBasis:
    return _SineBasis(profile.r_max, profile.n)


def rescale(profile: RadialProfile, mu: float) -> RadialProfile:
    """``x -> mu^2 eta(mu x)`` with eigenvalue ``lam mu^2`` (mass scales by ``mu``)."""
    if not mu > 0:
        raise DomainError(f"scale must be positive, got {mu}")
    if mu == 1:
        return profile
    return RadialProfile(
        profile.r_grid / mu, mu**2 * profile.values, profile.lam * mu**2, profile.residual_history
    )


def radial_mass(profile: RadialProfile) -> float:
    r, eta = profile.r_grid, profile.values
    return float(4 * np.pi * np.sum(r**2 * eta**2) * profile.dr)


def stationary_residual(profile: RadialProfile) -> float:
    """Sup-norm residual of the stationary equation on the radial grid."""
    basis = _basis_for(profile)
    phi = basis.r * profile.values[1:]
    return float(np.max(np.abs(basis.residual(phi, profile.lam))))


def radial_potential(profile: RadialProfile) -> np.ndarray:
    """``|x|^-1 * eta^2`` at ``profile.r_grid`` (spectral Newton shell)."""
    basis = _basis_for(profile)
    phi = basis.r * profile.values[1:]
    phi0, Phi = basis.potential(phi, with_origin=True)
    return np.concatenate([[phi0], Phi])


def newton_shell_potential(r: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Direct quadrature of ``(4pi/r) int_0^r s^2 eta^2 + 4pi int_r^inf s eta^2``.

    ``r`` must start at 0 and be uniform; Simpson cumulative sums.
    """
    inner = cumulative_simpson(r**2 * eta**2, x=r, initial=0.0)
    outer_cum = cumulative_simpson(r * eta**2, x=r, initial=0.0)
    outer = outer_cum[-1] - outer_cum
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 4 * np.pi * (inner / r + outer)
    out[0] = 4 * np.pi * outer[0]
    return out


def radial_hamiltonian(profile: RadialProfile) -> float:
    """``H(eta) = int 1/4 |grad eta|^2 - 1/4 eta^2 (|x|^-1 * eta^2)``."""
    basis = _basis_for(profile)
    phi = basis.r * profile.values[1:]
    kinetic = 4 * np.pi * basis.dr * np.dot(phi, basis.neg_second_derivative(phi))
    interaction = 4 * np.pi * basis.dr * np.dot(phi**2, basis.potential(phi))
    return float(0.25 * kinetic - 0.25 * interaction)


def decay_rate(profile: RadialProfile, r_lo: float = 15.0, r_hi: float = 25.0) -> float:
    """Minus the slope of a least-squares fit of ``log eta`` on ``[r_lo, r_hi]``."""
    sel = (profile.r_grid >= r_lo) & (profile.r_grid <= r_hi)
    if np.count_nonzero(sel) < 3:
        raise DomainError(f"profile has no samples in [{r_lo}, {r_hi}]")
    slope = np.polyfit(profile.r_grid[sel], np.log(profile.values[sel]), 1)[0]
    return float(-slope)


def interpolate_profile(profile: RadialProfile, r) -> np.ndarray:
    """Cubic interpolation in r, continued by the exponential tail past the grid."""
    r = np.asarray(r, dtype=float)
    spline = _spline(profile)
    rg, eta = profile.r_grid, profile.values
    out = spline(np.minimum(r, rg[-1]))
    far = r > rg[-1]
    if np.any(far):
        kappa = np.sqrt(2 * profile.lam)
        beta = radial_mass(profile) / kappa - 1
        A = eta[-1] / (rg[-1] ** beta * np.exp(-kappa * rg[-1]))
        out = np.where(far, A * np.maximum(r, rg[-1]) ** beta * np.exp(-kappa * r), out)
    return out


def _spline(profile: RadialProfile) -> CubicSpline:
    # even extension about r = 0 keeps the interpolant smooth through the origin
    rg, eta = profile.r_grid, profile.values
    return CubicSpline(np.concatenate([-rg[:0:-1], rg]), np.concatenate([eta[:0:-1], eta]))


# ---------------------------------------------------------------------------
# ground states on simulation grids


@dataclass(frozen=True)
class GroundState:
    """eta on a simulation grid together with its eigenvalue.

    ``interaction`` is the discretised self-interaction used to build (and
    later linearise about) the state.
    """

    field: Field
    lam: float
    interaction: object = field(repr=False, compare=False)
    profile: RadialProfile | None = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def eta(self) -> np.ndarray:
        return self.field.values.real

    @property
    def mass(self) -> float:
        return self.grid.norm2(self.eta)

    @property
    def dims(self) -> int:
        return self.grid.dims

    @property
    def weight(self) -> float:
        """Scaling weight p in ``mu^p eta(mu x)`` (2 in 3D, 1 in 1D)."""
        return (self.dims + 1) / 2

    def self_potential(self) -> np.ndarray:
        return self.interaction.potential(self.eta**2)


def _check_grid(grid: Grid):
    if grid.n**grid.dims < MIN_GRID_POINTS:
        raise DomainError(f"grid has fewer than {MIN_GRID_POINTS} points")


def gp_ground_state(grid: Grid) -> GroundState:
    """``eta = sech x`` with ``lam = 1/2`` on a 1D grid."""
    if grid.dims != 1:
        raise DimensionError("the GP ground state lives on a 1D grid")
    _check_grid(grid)
    eta = 1.0 / np.cosh(grid.x1d)
    return GroundState(Field(eta, grid), 0.5, LocalInteraction(grid))


def grid_residual(eta: np.ndarray, lam: float, interaction) -> np.ndarray:
    """``-1/2 Lap eta - Phi[eta^2] eta + lam eta`` on the grid."""
    grid = interaction.grid
    return -0.5 * grid.laplacian(eta) - interaction.potential(eta**2) * eta + lam * eta


def _refine_fixed_lambda(eta, lam, interaction, tol, max_iter):
    grid = interaction.grid
    A = 0.5 * grid.k2[..., : grid.n // 2 + 1] + lam if grid.dims == 3 else None
    if grid.dims == 1:
        A = 0.5 * (2 * np.pi * np.fft.rfftfreq(grid.n, grid.dx)) ** 2 + lam
    for it in range(max_iter):
        N_hat = grid.rfft(interaction.potential(eta**2) * eta)
        eta_hat = grid.rfft(eta)
        M = np.vdot(eta_hat, A * eta_hat).real / np.vdot(eta_hat, N_hat).real
        new = grid.irfft(M**1.5 * N_hat / A)
        step = np.max(np.abs(new - eta))
        eta = new
        if step < tol:
            return np.sqrt(M) * eta, it
    raise IterationLimitError("grid ground-state refinement did not converge", residual=step)


def hartree_ground_state(
    grid: Grid,
    profile: RadialProfile | None = None,
    tol: float = 1e-12,
    mass: float = TARGET_MASS,
    max_iter: int = 500,
) -> GroundState:
    """Interpolate the radial profile onto ``grid`` and refine it there.

    Refinement runs spectral renormalisation with the grid's truncated
    Coulomb kernel, adjusting ``lam`` by the scaling law until the discrete
    mass equals ``mass``.  The discrete stationary residual is then at
    roundoff level, which the linearised operators rely on.
    """
    if grid.dims != 3:
        raise DimensionError("the Hartree ground state lives on a 3D grid")
    _check_grid(grid)
    if profile is None:
        profile = solve_hartree_ground_state()
    kernel = HartreeKernel(grid)
    eta = interpolate_profile(profile, grid.r)
    lam = profile.lam
    for _ in range(20):
        eta, _ = _refine_fixed_lambda(eta, lam, kernel, tol, max_iter)
        m = grid.norm2(eta)
        if abs(m - mass) < 1e-12 * mass:
            break
        # continuum scaling: mass ~ sqrt(lam)
        lam = lam * (mass / m) ** 2
    return GroundState(Field(eta, grid), lam, kernel, profile)


def ground_state(grid: Grid, profile: RadialProfile | None = None) -> GroundState:
    """Ground state appropriate to the grid dimension."""
    if grid.dims == 1:
        return gp_ground_state(grid)
    return hartree_ground_state(grid, profile)


def hamiltonian_value(state, interaction=None) -> float:
    """``H(eta)`` for a radial profile, a grid ground state or a bare field."""
    if isinstance(state, RadialProfile):
        return radial_hamiltonian(state)
    if isinstance(state, GroundState):
        u, interaction = state.field.values, state.interaction
        grid = state.grid
    else:
        u, grid = state.values, state.grid
        interaction = interaction or make_interaction(grid)
    rho = np.abs(u) ** 2
    return float(0.25 * grid.grad_norm2(u) - 0.25 * grid.integrate(rho * interaction.potential(rho)))


# ---------------------------------------------------------------------------
# serialisation


def save_profile(profile: RadialProfile, path) -> None:
    lines = [
        f"lambda={profile.lam:.17g}",
        f"mass={radial_mass(profile):.17g}",
        f"n={profile.n}",
        f"rmax={profile.r_max:.17g}",
    ]
    lines += [f"{r:.17g} {v:.17g}" for r, v in zip(profile.r_grid, profile.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_profile(path) -> RadialProfile:
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" in line:
            key, val = line.split("=", 1)
            header[key.strip()] = val.strip()
        else:
            rows.append([float(t) for t in line.split()])
    data = np.array(rows)
    if len(data) != int(header["n"]):
        raise ValueError(f"expected {header['n']} samples, found {len(data)}")
    return RadialProfile(data[:, 0], data[:, 1], float(header["lambda"]))
