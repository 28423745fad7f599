"""Symmetry group (translations, boosts, phase, scaling) and symplectic structure.

A group element ``g = (a, v, gamma, mu)`` acts on fields by

    (g.u)(x) = exp(i gamma) exp(i v.(x - a)) mu^p u(mu (x - a))

with ``p = (d + 1)/2``: 2 for the 3D Hartree soliton family, 1 for the 1D
cubic one.  Either way ``||g.u||^2 = mu ||u||^2`` and ``g^* omega = mu omega``.
The Lie algebra basis is ordered translations, boosts, phase, scaling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DomainError
from .grid import Field, Grid, check_same_grid


class SupportOverflowWarning(RuntimeWarning):
    """Transformed field carries non-negligible mass near the box boundary."""


BOUNDARY_MASS_LIMIT = 1e-8


@dataclass(frozen=True)
class GroupElement:
    a: np.ndarray
    v: np.ndarray
    gamma: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if a.shape != v.shape:
            raise ValueError("a and v must have the same dimension")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def dims(self) -> int:
        return len(self.a)

    @classmethod
    def identity(cls, dims: int) -> "GroupElement":
        return cls(np.zeros(dims), np.zeros(dims), 0.0, 1.0)

    def params(self) -> np.ndarray:
        """Flat parameter vector ``(a, v, gamma, mu)``."""
        return np.concatenate([self.a, self.v, [self.gamma, self.mu]])

    @classmethod
    def from_params(cls, p) -> "GroupElement":
        p = np.asarray(p, dtype=float)
        d = (len(p) - 2) // 2
        return cls(p[:d], p[d : 2 * d], p[2 * d], p[2 * d + 1])

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "v": self.v.tolist(), "gamma": self.gamma, "mu": self.mu}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupElement":
        return cls(d["a"], d["v"], d["gamma"], d["mu"])

    def wrapped_gamma(self) -> float:
        """Phase reduced to ``(-pi, pi]`` for display."""
        return float(np.angle(np.exp(1j * self.gamma)))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)


@dataclass(frozen=True)
class GroupTangent:
    """Time derivative ``(adot, vdot, gammadot, mudot)`` of a curve in the group."""

    a: np.ndarray
    v: np.ndarray
    gamma: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))


def compose(g: GroupElement, gp: GroupElement) -> GroupElement:
    """Group law matching ``g.(gp.u) == (g gp).u``."""
    return GroupElement(
        g.a + gp.a / g.mu,
        g.v + g.mu * gp.v,
        g.gamma + gp.gamma + float(np.dot(g.v, gp.a)) / g.mu,
        g.mu * gp.mu,
    )


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(-g.mu * g.a, -g.v / g.mu, -g.gamma + float(np.dot(g.v, g.a)), 1.0 / g.mu)


def n_generators(dims: int) -> int:
    return 2 * dims + 2


def one_parameter(j: int, t: float, dims: int) -> GroupElement:
    """``exp(t e_j)`` for generator index ``j`` (1-based)."""
    p = GroupElement.identity(dims).params()
    if j == 2 * dims + 2:
        p[-1] = np.exp(t)
    else:
        p[j - 1] = t
    return GroupElement.from_params(p)


# ---------------------------------------------------------------------------
# action on fields


def _chirp(j: np.ndarray, n: int, delta: float) -> np.ndarray:
    """``exp(i pi (1 + delta) j^2 / n)`` with the large phase reduced exactly."""
    j2 = j.astype(np.int64) ** 2
    return np.exp(1j * np.pi * ((j2 % (2 * n)) / n + delta * (j2 / n)))


def _eval_axis(coef: np.ndarray, axis: int, grid: Grid, mu: float, a: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant along ``axis`` at ``mu (x_m - a)``.

    ``coef`` holds FFT coefficients along ``axis``.  The Nyquist mode is split
    symmetrically so that real data interpolate to real values.  The sums
    ``sum_q c_q W^{qm}`` with ``W = exp(2 pi i mu / n)`` are a chirp z-transform,
    done here by Bluestein's method with every large phase reduced exactly;
    a library chirp loses about ``n`` ulps in its phases.
    """
    n, L = grid.n, grid.box
    delta = mu - 1.0
    q = np.arange(n + 1)
    idx = (q - n // 2) % n
    weights = np.ones(n + 1)
    weights[0] = weights[-1] = 0.5
    kappa = (q - n // 2) * (2 * np.pi / L)
    # exp(i kappa (y0 - x0)) with y0 - x0 = delta x0 - mu a and x0 = -L/2
    pre = weights * np.exp(-1j * np.pi * delta * (q - n // 2) - 1j * kappa * mu * a) * _chirp(q, n, delta)
    shape = [1] * coef.ndim
    shape[axis] = n + 1
    x = np.take(coef, idx, axis=axis) * pre.reshape(shape)
    nfft = sfft.next_fast_len(2 * n + 1)
    j = np.arange(nfft)
    j = np.where(j < nfft - n, j, j - nfft)  # lags -n..n-1 wrapped
    kern = np.conj(_chirp(j, n, delta))
    conv = sfft.ifft(sfft.fft(x, nfft, axis=axis) * sfft.fft(kern).reshape(shape[:axis] + [nfft] + shape[axis + 1:]),
                     axis=axis)
    out = np.take(conv, np.arange(n), axis=axis)
    m = np.arange(n)
    post = (1.0 - 2.0 * (m % 2)) * np.exp(-1j * np.pi * delta * m) * _chirp(m, n, delta) / n
    shape[axis] = n
    return out * post.reshape(shape)


def _translate(u: np.ndarray, grid: Grid, shift: np.ndarray) -> np.ndarray:
    uh = grid.fft(u)
    for j, kj in enumerate(grid.kvec_odd):
        uh = uh * np.exp(-1j * kj * shift[j])
        if grid.n % 2 == 0:
            # symmetric Nyquist treatment: cos(k_N shift) keeps real data real
            sl = [slice(None)] * grid.dims
            sl[j] = grid.n // 2
            uh[tuple(sl)] *= np.cos(np.pi / grid.dx * shift[j])
    return grid.ifft(uh)


def _inside(grid: Grid, mu: float, a: np.ndarray) -> np.ndarray | None:
    """Mask of points whose argument ``mu (x - a)`` stays in the fundamental cell."""
    half = grid.box / 2
    mask = None
    for j, xj in enumerate(grid.coords):
        y = mu * (xj - a[j])
        ok = (y >= -half - 1e-12 * half) & (y < half)
        if not np.all(ok):
            mask = ok if mask is None else mask & ok
    return mask


def dilate_translate(u: np.ndarray, grid: Grid, mu: float, a: np.ndarray) -> np.ndarray:
    """Samples of ``u(mu (x - a))`` by spectral interpolation.

    ``u`` is taken to vanish outside the box, so arguments leaving the
    fundamental cell give zero rather than a periodic image.
    """
    if mu == 1.0:
        if not np.any(a):
            return np.asarray(u, dtype=complex)
        out = _translate(u, grid, a)
    else:
        out = grid.fft(u)
        for j in range(grid.dims):
            out = _eval_axis(out, j, grid, mu, float(a[j]))
    mask = _inside(grid, mu, np.asarray(a, dtype=float))
    if mask is not None:
        out = np.where(mask, out, 0.0)
    return out


def act(g: GroupElement, u: Field, check_support: bool = True) -> Field:
    """``(g.u)(x) = e^{i gamma} e^{i v.(x-a)} mu^p u(mu(x-a))``."""
    grid = u.grid
    if g.dims != grid.dims:
        raise DomainError(f"group element of dimension {g.dims} on a {grid.dims}D grid")
    p = (grid.dims + 1) / 2
    vals = dilate_translate(u.values, grid, g.mu, g.a)
    phase = g.gamma
    for j, xj in enumerate(grid.coords):
        phase = phase + g.v[j] * (xj - g.a[j])
    out = np.exp(1j * phase) * (g.mu**p) * vals
    if check_support:
        frac = grid.boundary_mass_fraction(out)
        if frac > BOUNDARY_MASS_LIMIT:
            warnings.warn(
                f"transformed field has boundary mass fraction {frac:.2e}",
                SupportOverflowWarning,
                stacklevel=2,
            )
    return Field(out, grid)


# ---------------------------------------------------------------------------
# Lie algebra


def apply_generator(j: int, u: Field) -> Field:
    """``e_j u`` with ``e_1..d = -d/dx_j``, ``e_d+1..2d = i x_j``, ``i``, ``p + x.grad``."""
    grid, d = u.grid, u.grid.dims
    vals = u.values
    if not 1 <= j <= n_generators(d):
        raise ValueError(f"generator index {j} out of range for dims={d}")
    if j <= d:
        out = -grid.derivative(vals, j - 1)
    elif j <= 2 * d:
        out = 1j * grid.coords[j - d - 1] * vals
    elif j == 2 * d + 1:
        out = 1j * vals
    else:
        out = (d + 1) / 2 * vals
        for xk, gk in zip(grid.coords, grid.gradient(vals)):
            out = out + xk * gk
    return Field(out, grid)


@dataclass(frozen=True)
class LieCoeffs:
    """Coefficients on the generator basis ``e_1 .. e_{2d+2}``."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("Lie algebra coefficients must be finite")
        object.__setattr__(self, "c", c)

    @property
    def dims(self) -> int:
        return (len(self.c) - 2) // 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.c))

    def apply(self, u: Field) -> Field:
        out = np.zeros(u.grid.shape, dtype=complex)
        for j, cj in enumerate(self.c, start=1):
            if cj != 0.0:
                out = out + cj * apply_generator(j, u).values
        return Field(out, u.grid)


def curve_derivative(g: GroupElement, gdot: GroupTangent) -> LieCoeffs:
    """``Y`` with ``d/dt (g(t).u) = g(t).(Y u)``.

    Coefficients: ``mu adot`` on translations, ``vdot / mu`` on boosts,
    ``gammadot - adot.v`` on phase, ``mudot / mu`` on scaling.
    """
    if not g.mu > 0:
        raise DomainError("mu must be positive")
    return LieCoeffs(
        np.concatenate(
            [
                g.mu * gdot.a,
                gdot.v / g.mu,
                [gdot.gamma - float(np.dot(gdot.a, g.v)), gdot.mu / g.mu],
            ]
        )
    )


# ---------------------------------------------------------------------------
# bilinear forms


def _pair(u: Field, w: Field) -> complex:
    check_same_grid(u.grid, w.grid)
    return complex(u.grid.integrate(u.values * np.conj(w.values)))


def symplectic_form(u: Field, w: Field) -> float:
    """``omega(u, w) = Im int u conj(w)``."""
    return _pair(u, w).imag


def inner(u: Field, w: Field) -> float:
    """``<u, w> = Re int u conj(w)``."""
    return _pair(u, w).real


def tangent_vectors(gs) -> list[Field]:
    """``e_j eta`` for every generator."""
    return [apply_generator(j, gs.field) for j in range(1, n_generators(gs.dims) + 1)]


def restricted_form_matrix(gs) -> np.ndarray:
    """``M_jk = omega(e_j eta, e_k eta)``."""
    vecs = tangent_vectors(gs)
    n = len(vecs)
    M = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            M[j, k] = symplectic_form(vecs[j], vecs[k])
    return M


def conformal_factor_check(g: GroupElement, u: Field, w: Field) -> float:
    """``omega(g.u, g.w) / omega(u, w)``; equals ``mu`` for the exact action."""
    base = symplectic_form(u, w)
    scale = max(np.sqrt(u.grid.norm2(u.values) * w.grid.norm2(w.values)), 1e-300)
    if abs(base) < 1e-14 * scale:
        raise DomainError("omega(u, w) vanishes; ratio undefined")
    return symplectic_form(act(g, u), act(g, w)) / base
