"""Effective classical dynamics of the soliton parameters.

Restricting ``H_V`` to the soliton manifold ``M = {g.eta}`` gives

    H_M(a, v, mu) = mu |v|^2 / 2 - lam mu^3 / 3 + (mu / 2) int V(x/mu + a) eta^2(x) dx

and the flow

    adot = v,   vdot = -(1/2) int grad V(x/mu + a) eta^2,   mudot = 0,
    gammadot = |v|^2 / 2 + lam mu^2 - alpha,
    alpha = 1/2 int V(x/mu + a) eta^2 - 1/(2 mu) int x.grad V(x/mu + a) eta^2.

``vdot`` equals ``effective_force / mu``; the two agree on ``mu = 1``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, StepRejectedError
from .symmetry import GroupElement, GroupTangent

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# potentials


class _Term:
    """One additive piece of ``W``; subclasses supply value and derivatives."""

    def value(self, y: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def grad(self, y: Sequence[np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError

    def hess(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def third(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def averages(self, a, mu, h, gs):
        """``int W(h(x/mu + a)) eta^2``, the gradient average and the x.grad average, or None."""
        return None


@dataclass
class PlaneWave(_Term):
    """``W(y) = A cos(k.y + phase)``."""

    k: np.ndarray
    amplitude: float = 1.0
    phase: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.k = np.atleast_1d(np.asarray(self.k, dtype=float))

    def _arg(self, y):
        return sum(kj * yj for kj, yj in zip(self.k, y)) + self.phase

    def value(self, y):
        return self.amplitude * np.cos(self._arg(y))

    def grad(self, y):
        s = -self.amplitude * np.sin(self._arg(y))
        return [kj * s for kj in self.k]

    def hess(self, y):
        return -self.amplitude * np.cos(self._arg(y)) * np.outer(self.k, self.k)

    def third(self, y):
        return self.amplitude * np.sin(self._arg(y)) * np.einsum("i,j,l->ijl", self.k, self.k, self.k)

    def averages(self, a, mu, h, gs):
        # W(h(x/mu + a)) = A Re exp(i(q.x + s)) with q = h k / mu, s = h k.a + phase
        key = (gs.grid, float(gs.lam), float(mu), float(h))
        if key not in self._cache:
            g = gs.grid
            qx = sum(h * kj / mu * xj for kj, xj in zip(self.k, g.coords))
            e = np.exp(1j * qx) * gs.eta**2
            kx = sum(kj * xj for kj, xj in zip(self.k, g.coords))
            self._cache[key] = (g.integrate(e), g.integrate(kx * e))
        C, D = self._cache[key]
        z = np.exp(1j * (h * np.dot(self.k, a) + self.phase))
        A = self.amplitude
        val = A * (z * C).real
        grad = -A * h * self.k * (z * C).imag
        xgrad = -A * h * (z * D).imag
        return val, grad, xgrad


@dataclass
class Quadratic(_Term):
    """``W(y) = c + b.y + 1/2 y.K y``."""

    K: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))

    def value(self, y):
        out = self.c + sum(bj * yj for bj, yj in zip(self.b, y))
        for j, k in np.ndindex(self.K.shape):
            if self.K[j, k]:
                out = out + 0.5 * self.K[j, k] * y[j] * y[k]
        return out

    def grad(self, y):
        return [
            self.b[j] + sum(self.K[j, k] * y[k] for k in range(len(self.b)) if self.K[j, k])
            for j in range(len(self.b))
        ]

    def hess(self, y):
        return self.K.copy()

    def third(self, y):
        d = len(self.b)
        return np.zeros((d, d, d))


@dataclass
class PotentialSpec:
    """``V(x) = W(h x)`` with ``W`` a sum of smooth terms."""

    terms: list
    h: float
    dims: int
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise DomainError(f"h must lie in (0, 1], got {self.h}")

    @classmethod
    def named(cls, name: str, h: float, dims: int = 1, **params) -> "PotentialSpec":
        """Catalogue: ``cos``, ``well`` (``-cos``), ``const``, ``linear``, ``quadratic``, ``zero``."""
        e1 = np.eye(dims)[0]
        if name == "cos":
            k = np.asarray(params.get("k", e1), dtype=float)
            terms = [PlaneWave(k, params.get("amplitude", 1.0), params.get("phase", 0.0))]
        elif name == "well":
            k = np.asarray(params.get("k", e1), dtype=float)
            terms = [PlaneWave(k, params.get("amplitude", 1.0), np.pi)]
        elif name == "zero":
            terms = [Quadratic(np.zeros((dims, dims)), np.zeros(dims), 0.0)]
        elif name == "const":
            terms = [Quadratic(np.zeros((dims, dims)), np.zeros(dims), params.get("c", 1.0))]
        elif name == "linear":
            terms = [Quadratic(np.zeros((dims, dims)), params.get("b", e1), params.get("c", 0.0))]
        elif name == "quadratic":
            K = np.asarray(params.get("K", np.eye(dims)), dtype=float)
            terms = [Quadratic(K, params.get("b", np.zeros(dims)), params.get("c", 0.0))]
        else:
            raise DomainError(f"unknown potential {name!r}")
        return cls(terms, h, dims, name)

    def with_h(self, h: float) -> "PotentialSpec":
        return PotentialSpec(self.terms, h, self.dims, self.name)

    # V and its derivatives at physical positions x ---------------------------
    def _scaled(self, x):
        return [self.h * np.asarray(xj) for xj in x]

    def values(self, x: Sequence[np.ndarray]) -> np.ndarray:
        y = self._scaled(x)
        return sum(t.value(y) for t in self.terms)

    def gradients(self, x: Sequence[np.ndarray]) -> list[np.ndarray]:
        y = self._scaled(x)
        out = [0.0] * self.dims
        for t in self.terms:
            out = [o + self.h * gj for o, gj in zip(out, t.grad(y))]
        return out

    def on_grid(self, grid) -> np.ndarray:
        return np.broadcast_to(self.values(grid.coords), grid.shape).copy()

    def value(self, a) -> float:
        return float(self.values(list(np.atleast_1d(a))))

    def gradient(self, a) -> np.ndarray:
        return np.array([float(g) for g in self.gradients(list(np.atleast_1d(a)))])

    def hessian(self, a) -> np.ndarray:
        y = self.h * np.atleast_1d(np.asarray(a, dtype=float))
        return self.h**2 * sum(t.hess(y) for t in self.terms)

    def third(self, a) -> np.ndarray:
        y = self.h * np.atleast_1d(np.asarray(a, dtype=float))
        return self.h**3 * sum(t.third(y) for t in self.terms)

    def averages(self, a, mu: float, gs):
        """``(int V(x/mu+a) eta^2, int grad V(x/mu+a) eta^2, int x.grad V(x/mu+a) eta^2)``."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        val, grad, xgrad = 0.0, np.zeros(self.dims), 0.0
        quad = []
        for t in self.terms:
            got = t.averages(a, mu, self.h, gs)
            if got is None:
                quad.append(t)
                continue
            val += got[0]
            grad = grad + got[1]
            xgrad += got[2]
        if quad:
            g = gs.grid
            x = [xj / mu + aj for xj, aj in zip(g.coords, a)]
            y = self._scaled(x)
            w = gs.eta**2
            for t in quad:
                val += g.integrate(t.value(y) * w)
                gr = t.grad(y)
                grad = grad + np.array([self.h * g.integrate(gj * w) for gj in gr])
                xgrad += self.h * g.integrate(sum(xj * gj for xj, gj in zip(g.coords, gr)) * w)
        return float(val), np.asarray(grad, dtype=float), float(xgrad)


# ---------------------------------------------------------------------------
# state and closed-form quantities


@dataclass(frozen=True)
class EffectiveState:
    t: float
    a: np.ndarray
    v: np.ndarray
    gamma: float
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if not self.mu > 0:
            raise DomainError("mu must be positive")

    @property
    def dims(self) -> int:
        return len(self.a)

    def group_element(self) -> GroupElement:
        return GroupElement(self.a, self.v, self.gamma, self.mu)

    @classmethod
    def from_group(cls, g: GroupElement, t: float = 0.0) -> "EffectiveState":
        return cls(t, g.a, g.v, g.gamma, g.mu)


def effective_force(a, mu: float, pot: PotentialSpec, gs) -> np.ndarray:
    """``-(mu/2) int grad V(x/mu + a) eta^2 dx``."""
    _, grad, _ = pot.averages(a, mu, gs)
    return -0.5 * mu * grad


def alpha_beta(a, mu: float, pot: PotentialSpec, gs) -> tuple[float, np.ndarray]:
    """``alpha = 1/2 <V> - <x.grad V>/(2 mu)``, ``beta = <grad V>/(2 mu)``, brackets against eta^2."""
    val, grad, xgrad = pot.averages(a, mu, gs)
    return 0.5 * val - xgrad / (2 * mu), grad / (2 * mu)


def gamma_rate(state: EffectiveState, pot: PotentialSpec, gs) -> float:
    alpha, _ = alpha_beta(state.a, state.mu, pot, gs)
    return 0.5 * float(np.dot(state.v, state.v)) + gs.lam * state.mu**2 - alpha


def restricted_hamiltonian(state: EffectiveState, pot: PotentialSpec, gs) -> float:
    """``H_V(g.eta) = mu|v|^2/2 + mu^3 H(eta) + (mu/2) int V(x/mu + a) eta^2`` with ``H(eta) = -lam/3``."""
    val, _, _ = pot.averages(state.a, state.mu, gs)
    mu = state.mu
    return 0.5 * mu * float(np.dot(state.v, state.v)) - gs.lam * mu**3 / 3 + 0.5 * mu * val


def classical_energy(state: EffectiveState, pot: PotentialSpec, gs) -> float:
    """``|v|^2/2 + Vbar(a)``, ``Vbar = 1/2 int V(x + a) eta^2``."""
    val, _, _ = pot.averages(state.a, 1.0, gs)
    return 0.5 * float(np.dot(state.v, state.v)) + 0.5 * val


def effective_rates(state: EffectiveState, pot: PotentialSpec, gs) -> GroupTangent:
    """Right-hand side of the effective flow at ``state``."""
    val, grad, xgrad = pot.averages(state.a, state.mu, gs)
    mu = state.mu
    alpha = 0.5 * val - xgrad / (2 * mu)
    gdot = 0.5 * float(np.dot(state.v, state.v)) + gs.lam * mu**2 - alpha
    return GroupTangent(state.v.copy(), -0.5 * grad, gdot, 0.0)


# ---------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    t: np.ndarray
    a: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    energy: np.ndarray

    def state(self, i: int) -> EffectiveState:
        return EffectiveState(self.t[i], self.a[i], self.v[i], self.gamma[i], self.mu[i])

    def at(self, t: float) -> EffectiveState:
        """Cubic Hermite interpolation between stored samples (a uses v as slope)."""
        i = int(np.clip(np.searchsorted(self.t, t) - 1, 0, len(self.t) - 2))
        t0, t1 = self.t[i], self.t[i + 1]
        s = (t - t0) / (t1 - t0)
        dt = t1 - t0
        h00, h10, h01, h11 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2
        a = h00 * self.a[i] + h10 * dt * self.v[i] + h01 * self.a[i + 1] + h11 * dt * self.v[i + 1]
        lin = lambda q: (1 - s) * q[i] + s * q[i + 1]  # noqa: E731
        return EffectiveState(t, a, lin(self.v), lin(self.gamma), self.mu[i])

    def to_csv(self, path) -> None:
        d = self.a.shape[1]
        cols = ["t"] + [f"a{j + 1}" for j in range(d)] + [f"v{j + 1}" for j in range(d)] + ["gamma", "mu", "energy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(self.t)):
                row = [self.t[i], *self.a[i], *self.v[i], self.gamma[i], self.mu[i], self.energy[i]]
                w.writerow([f"{x:.17g}" for x in row])


def integrate(
    state0: EffectiveState,
    pot: PotentialSpec,
    gs,
    T: float,
    dt: float,
    max_energy_jump: float = 1e-6,
    sample_every: int = 1,
) -> Trajectory:
    """Classical RK4 for ``(a, v, gamma)``; ``mu`` is held fixed.

    A step that changes the restricted Hamiltonian by more than
    ``max_energy_jump`` raises :class:`StepRejectedError`.  Negative ``T``
    integrates backwards.
    """
    if abs(dt) > 0.01 / max(1.0, float(np.linalg.norm(state0.v))) + 1e-15:
        raise DomainError(f"dt={dt} exceeds 0.01/max(1,|v0|)")
    n = int(round(abs(T) / dt))
    if abs(n * dt - abs(T)) > 1e-9 * max(1.0, abs(T)):
        raise DomainError(f"T={T} is not a multiple of dt={dt}")
    h = np.sign(T) * dt if T != 0 else dt
    d, mu = state0.dims, state0.mu

    def rhs(y):
        st = EffectiveState(0.0, y[:d], y[d : 2 * d], y[2 * d], mu)
        r = effective_rates(st, pot, gs)
        return np.concatenate([r.a, r.v, [r.gamma]])

    def energy(y):
        return restricted_hamiltonian(EffectiveState(0.0, y[:d], y[d : 2 * d], y[2 * d], mu), pot, gs)

    y = np.concatenate([state0.a, state0.v, [state0.gamma]])
    E = energy(y)
    ts, ys, Es = [state0.t], [y.copy()], [E]
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        E_new = energy(y)
        if abs(E_new - E) > max_energy_jump:
            raise StepRejectedError(f"energy jump {abs(E_new - E):.3e} at t={state0.t + (i + 1) * h:.6g}")
        E = E_new
        if (i + 1) % sample_every == 0 or i == n - 1:
            ts.append(state0.t + (i + 1) * h)
            ys.append(y.copy())
            Es.append(E)
    Y = np.array(ys)
    return Trajectory(
        np.array(ts), Y[:, :d], Y[:, d : 2 * d], Y[:, 2 * d], np.full(len(ts), mu), np.array(Es)
    )


# ---------------------------------------------------------------------------
# perturbed versus exact ODE comparison


@dataclass
class CompareReport:
    h: float
    delta: float
    T: float
    sup_a: float
    sup_v: float
    C_a: float
    C_v: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def comparison_horizon(h: float, delta: float, c: float = 1.0) -> float:
    """``c/h + delta log(1/h)/h``."""
    return c / h + delta * np.log(1 / h) / h


def ode_compare(
    eps1: Callable[[float], np.ndarray],
    eps2: Callable[[float], np.ndarray],
    force,
    state0: EffectiveState,
    T: float,
    h: float,
    delta: float = 0.0,
    dt: float = 0.01,
    forced_reference: bool = False,
) -> CompareReport:
    """Integrate ``adot = v + eps1, vdot = h f(h a) + eps2`` against ``eps``-free equations.

    ``force`` is a callable ``f`` or a :class:`PotentialSpec` (then
    ``f = -grad W``).  With ``forced_reference`` the reference system carries
    the same ``eps`` forcing, in which case the two solutions coincide.
    """
    if isinstance(force, PotentialSpec):
        pot = force.with_h(1.0)
        f = pot.gradient
        fun = lambda y: -f(y)  # noqa: E731
    else:
        fun = force
    d = state0.dims
    n = max(1, int(np.ceil(T / dt)))
    step = T / n

    def rhs(t, y, forced):
        a, v = y[:d], y[d:]
        e1 = np.atleast_1d(eps1(t)) if forced else 0.0
        e2 = np.atleast_1d(eps2(t)) if forced else 0.0
        return np.concatenate([v + e1, h * np.atleast_1d(fun(h * a)) + e2])

    def rk4(y, t, forced):
        k1 = rhs(t, y, forced)
        k2 = rhs(t + step / 2, y + step / 2 * k1, forced)
        k3 = rhs(t + step / 2, y + step / 2 * k2, forced)
        k4 = rhs(t + step, y + step * k3, forced)
        return y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    y = np.concatenate([state0.a, state0.v])
    yb = y.copy()
    sup_a = sup_v = 0.0
    t = state0.t
    for _ in range(n):
        y = rk4(y, t, True)
        yb = rk4(yb, t, forced_reference)
        t += step
        sup_a = max(sup_a, float(np.max(np.abs(y[:d] - yb[:d]))))
        sup_v = max(sup_v, float(np.max(np.abs(y[d:] - yb[d:]))))
    L = np.log(1 / h)
    return CompareReport(
        h, delta, T, sup_a, sup_v, sup_a / (h ** (2 - 2 * delta) * L), sup_v / (h ** (3 - 2 * delta) * L)
    )


def fit_exponent(hs, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(h)``."""
    hs, values = np.asarray(hs, dtype=float), np.asarray(values, dtype=float)
    if len(hs) < 2 or np.any(values <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])
