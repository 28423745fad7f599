"""Modulation decomposition ``u = g.(eta + w)`` and the derived diagnostics.

``w`` is made symplectically orthogonal to the tangent space ``g.eta`` by
solving ``P(g^-1 u - eta) = 0`` with the explicit projection

    P_j     = Re int u x_j eta          (j <= d)
    P_d+j   = -Im int u d_j eta
    P_2d+1  = Im int u (p + x.grad) eta
    P_2d+2  = Re int u eta

which satisfies ``P(Y eta) = Y`` for every Lie algebra element when the
ground state has mass 2.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .effective import PotentialSpec, alpha_beta
from .errors import FitDivergenceError
from .grid import Field, check_same_grid
from .pde import hartree_rhs
from .spectral import (
    LinearizedOperator,
    QuadraticSource,
    scaling_mode,
    second_moments,
    solve_Lplus,
)
from .symmetry import (
    GroupElement,
    GroupTangent,
    LieCoeffs,
    SupportOverflowWarning,
    act,
    curve_derivative,
    inverse,
)

log = logging.getLogger(__name__)

__all__ = [
    "project",
    "projection_vectors",
    "fit",
    "Decomposition",
    "alpha_beta",
    "quadratic_source",
    "compute_X",
    "Corrector",
    "build_wtilde",
    "lyapounov",
    "mu_bounds",
    "x_bound_constant",
    "weq_rhs",
]


# ---------------------------------------------------------------------------
# projection


def projection_vectors(gs) -> tuple[list[np.ndarray], list[str]]:
    """Real weight functions and the part (``re``/``im``/``-im``) each pairs with."""
    g, eta = gs.grid, gs.eta
    vecs = [x * eta for x in g.coords] + [-d for d in g.gradient(eta)]
    kinds = ["re"] * g.dims + ["im"] * g.dims
    vecs += [scaling_mode(gs), eta]
    kinds += ["im", "re"]
    return vecs, kinds


def project(u: Field, gs) -> np.ndarray:
    """``(P_1(u), ..., P_{2d+2}(u))``."""
    check_same_grid(u.grid, gs.grid)
    g = u.grid
    vecs, kinds = projection_vectors(gs)
    vals = np.asarray(u.values)
    out = np.empty(len(vecs))
    for j, (f, kind) in enumerate(zip(vecs, kinds)):
        z = g.integrate(vals * f)
        out[j] = z.real if kind == "re" else np.imag(z)
    return out


def project_lie(u: Field, gs) -> LieCoeffs:
    return LieCoeffs(project(u, gs))


# ---------------------------------------------------------------------------
# fit


@dataclass
class Decomposition:
    g: GroupElement
    w: Field
    residuals: np.ndarray
    w_h1: float
    iterations: int = 0
    used_fallback: bool = False

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def _pull_back(u: Field, g: GroupElement) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupportOverflowWarning)
        return act(inverse(g), u, check_support=False).values


class _FitProblem:
    def __init__(self, u: Field, gs):
        self.u = u
        self.gs = gs
        self.vecs, self.kinds = projection_vectors(gs)
        self.eta = gs.eta
        self.evals = 0

    def residual(self, p: np.ndarray) -> np.ndarray:
        self.evals += 1
        g = GroupElement.from_params(p)
        w = _pull_back(self.u, g) - self.eta
        grid = self.gs.grid
        out = np.empty(len(self.vecs))
        for j, (f, kind) in enumerate(zip(self.vecs, self.kinds)):
            z = grid.integrate(w * f)
            out[j] = z.real if kind == "re" else z.imag
        return out

    def jacobian(self, p: np.ndarray, r0: np.ndarray, step: float = 1e-6) -> np.ndarray:
        n = len(p)
        J = np.empty((n, n))
        for k in range(n):
            dp = step * p[k] if k == n - 1 else step
            q = p.copy()
            q[k] += dp
            J[:, k] = (self.residual(q) - r0) / dp
        return J


def _newton(prob: _FitProblem, p: np.ndarray, tol: float, max_iter: int):
    r = prob.residual(p)
    J = None
    last = np.inf
    for it in range(max_iter):
        nr = float(np.max(np.abs(r)))
        if nr < tol:
            return p, r, it, True
        if J is None or nr > 0.25 * last:
            J = prob.jacobian(p, r)
        last = nr
        try:
            dp = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return p, r, it, False
        # damp steps that would make mu non-positive
        lam = 1.0
        while p[-1] + lam * dp[-1] <= 0.2 * p[-1]:
            lam *= 0.5
        trial = p + lam * dp
        rt = prob.residual(trial)
        if np.max(np.abs(rt)) > nr and lam > 1e-3:
            # backtrack once on increase
            lam *= 0.5
            trial = p + lam * dp
            rt = prob.residual(trial)
        p, r = trial, rt
    return p, r, max_iter, float(np.max(np.abs(r))) < tol


def _grid_search(prob: _FitProblem, p: np.ndarray, span: float = 1.0, n: int = 5) -> np.ndarray:
    """Coarse search over the translation and the phase minimising the residual norm."""
    d = prob.gs.dims
    best, best_val = p, np.linalg.norm(prob.residual(p))
    offsets = np.linspace(-span, span, n)
    phases = np.linspace(-np.pi, np.pi, 8, endpoint=False)
    for j in range(d):
        for off in offsets:
            for ph in phases:
                q = best.copy()
                q[j] += off
                q[2 * d] += ph
                val = np.linalg.norm(prob.residual(q))
                if val < best_val:
                    best, best_val = q, val
    return best


def fit(u: Field, g_guess: GroupElement, gs, tol: float = 1e-10, max_iter: int = 50) -> Decomposition:
    """Solve ``P(g^-1 u - eta) = 0`` by Newton iteration from ``g_guess``.

    The Jacobian is a forward difference in the group parameters (absolute
    step on ``a, v, gamma``, relative on ``mu``) and is refreshed only when
    convergence slows.  If Newton stalls, a coarse search over ``(a, gamma)``
    restarts it once.  ``gamma`` is returned on the branch nearest the guess.
    """
    check_same_grid(u.grid, gs.grid)
    prob = _FitProblem(u, gs)
    p0 = g_guess.params()
    p, r, its, ok = _newton(prob, p0.copy(), tol, max_iter)
    fallback = False
    if not ok:
        fallback = True
        log.info("Newton stalled at residual %.3e; trying grid search", np.max(np.abs(r)))
        p1 = _grid_search(prob, p0.copy())
        p, r, its2, ok = _newton(prob, p1, tol, max_iter)
        its += its2
    if not ok:
        raise FitDivergenceError(
            f"modulation fit residual {np.max(np.abs(r)):.3e} above tol {tol:.1e}", residual=float(np.max(np.abs(r)))
        )
    d = gs.dims
    p[2 * d] -= 2 * np.pi * np.round((p[2 * d] - g_guess.gamma) / (2 * np.pi))
    g = GroupElement.from_params(p)
    w = Field(_pull_back(u, g) - gs.eta, u.grid)
    return Decomposition(g, w, r, u.grid.h1_norm(w.values), its, fallback)


# ---------------------------------------------------------------------------
# forcing coefficients


def quadratic_source(a, mu: float, pot: PotentialSpec, gs) -> QuadraticSource:
    """Quadratic Taylor part of ``-V(x/mu + a) + alpha + beta.x``."""
    return QuadraticSource.from_hessian(pot.hessian(a), mu, second_moments(gs))


def forcing_residual(a, mu: float, pot: PotentialSpec, gs) -> np.ndarray:
    """``P(i(V(x/mu + a) - alpha - beta.x) eta)``; vanishes identically."""
    grid = gs.grid
    alpha, beta = alpha_beta(a, mu, pot, gs)
    x = [xj / mu + aj for xj, aj in zip(grid.coords, np.atleast_1d(a))]
    f = pot.values(x) - alpha - sum(bj * xj for bj, xj in zip(beta, grid.coords))
    return project(Field(1j * f * gs.eta, grid), gs)


def compute_X(g: GroupElement, gdot: GroupTangent, alpha: float, beta, lam: float) -> LieCoeffs:
    """Forcing coefficient ``X = -Y + (mu v, -beta, lam mu^2 - |v|^2/2 - alpha, 0)``.

    ``Y`` is the curve derivative of ``g(t)``; ``X`` vanishes on the effective flow.
    """
    mu, v = g.mu, g.v
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return LieCoeffs(
        np.concatenate(
            [
                mu * (v - gdot.a),
                -(gdot.v / mu + beta),
                [
                    -gdot.gamma + float(np.dot(gdot.a, v)) - 0.5 * float(np.dot(v, v)) + lam * mu**2 - alpha,
                    -gdot.mu / mu,
                ],
            ]
        )
    )


# ---------------------------------------------------------------------------
# corrector


@dataclass
class Corrector:
    """Lazily solved ``f_jk = L+^-1 ((x_j x_k / 2 + delta_jk I_j / 4) eta)``."""

    gs: object
    tol: float = 1e-10
    _f: dict = field(default_factory=dict, repr=False)

    def f(self, j: int, k: int) -> np.ndarray:
        key = (min(j, k), max(j, k))
        if key not in self._f:
            d = self.gs.dims
            a = np.zeros((d, d))
            a[j, k] += 0.25
            a[k, j] += 0.25
            a0 = 0.25 * second_moments(self.gs)[j] if j == k else 0.0
            self._f[key] = solve_Lplus(QuadraticSource(a0, a), self.gs, tol=self.tol).values.real
        return self._f[key]

    def apply(self, hess: np.ndarray, mu: float) -> np.ndarray:
        """``sum_jk -(d_jk V / mu^4) f_jk``."""
        out = np.zeros(self.gs.grid.shape)
        d = self.gs.dims
        for j in range(d):
            for k in range(d):
                if hess[j, k] != 0.0:
                    out = out - hess[j, k] / mu**4 * self.f(j, k)
        return out


def build_wtilde(
    a,
    mu: float,
    pot: PotentialSpec,
    gs,
    lplus_solver: Corrector | None = None,
    adot=None,
    mudot: float = 0.0,
) -> tuple[Field, np.ndarray]:
    """Corrector ``w~`` and ``theta_jk = d/dt[-d_jk V(a) / mu^4]``.

    ``w~`` solves ``L+ w~ = Q eta / mu^2`` with ``Q`` from :func:`quadratic_source`.
    """
    solver = lplus_solver or Corrector(gs)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    hess = pot.hessian(a)
    wt = solver.apply(hess, mu)
    adot = np.zeros_like(a) if adot is None else np.atleast_1d(adot)
    third = pot.third(a)
    theta = -np.einsum("jkl,l->jk", third, adot) / mu**4 + 4 * hess * mudot / mu**5
    return Field(wt, gs.grid), theta


# ---------------------------------------------------------------------------
# monitored quantities


def lyapounov(w1: Field, gs) -> float:
    """``<L w1, w1>``."""
    op = gs if isinstance(gs, LinearizedOperator) else LinearizedOperator(gs)
    return op.quadratic_form(w1)


def mu_bounds(w_l2sq: float, eps: float) -> tuple[float, float]:
    """``((2 - eps)/(2 + |w|^2), (2 + eps)/(2 + |w|^2))``."""
    return (2 - eps) / (2 + w_l2sq), (2 + eps) / (2 + w_l2sq)


def x_bound_constant(x_norm, w_h1, h: float) -> float:
    """Smallest ``c`` with ``|X| <= c (h^2 |w| + |w|^2 + |w|^3)`` over the samples."""
    x_norm, w_h1 = np.asarray(x_norm, dtype=float), np.asarray(w_h1, dtype=float)
    denom = h**2 * w_h1 + w_h1**2 + w_h1**3
    mask = denom > 0
    if not np.any(mask):
        return float("nan")
    return float(np.max(x_norm[mask] / denom[mask]))


def weq_rhs(w: Field, g: GroupElement, gdot: GroupTangent, pot: PotentialSpec, gs) -> Field:
    """Right-hand side of the modulation equation for ``w``.

        dw/dt = X(eta + w) + i[-V(x/mu + a) + alpha + beta.x](eta + w) + i mu^2 (-L + N) w
    """
    grid = gs.grid
    eta = gs.eta
    mu = g.mu
    alpha, beta = alpha_beta(g.a, mu, pot, gs)
    X = compute_X(g, gdot, alpha, beta, gs.lam)
    wv = np.asarray(w.values, dtype=complex)
    x = [xj / mu + aj for xj, aj in zip(grid.coords, g.a)]
    forcing = -pot.values(x) + alpha + sum(bj * xj for bj, xj in zip(beta, grid.coords))
    phi = gs.interaction.potential
    cross = phi(2 * eta * wv.real)
    rho_w = phi(np.abs(wv) ** 2)
    Lw = -0.5 * grid.laplacian(wv) - gs.self_potential() * wv - cross * eta + gs.lam * wv
    Nw = rho_w * eta + cross * wv + rho_w * wv
    out = X.apply(Field(eta + wv, grid)).values + 1j * forcing * (eta + wv) + 1j * mu**2 * (-Lw + Nw)
    return Field(out, grid)


def weq_residual(u_prev: Field, u_next: Field, dt: float, dec: Decomposition, gdot: GroupTangent,
                 pot: PotentialSpec, gs) -> float:
    """Compare a centred difference of ``w = g^-1 u - eta`` at fixed ``g`` motion with :func:`weq_rhs`.

    ``u_prev`` and ``u_next`` are the field at ``t -/+ dt``; ``dec`` is the fit at ``t``.
    The relative mismatch is ``O(dt^2)``.
    """
    g0 = dec.g
    gm = GroupElement(g0.a - dt * gdot.a, g0.v - dt * gdot.v, g0.gamma - dt * gdot.gamma, g0.mu - dt * gdot.mu)
    gp = GroupElement(g0.a + dt * gdot.a, g0.v + dt * gdot.v, g0.gamma + dt * gdot.gamma, g0.mu + dt * gdot.mu)
    wm = _pull_back(u_prev, gm)
    wp = _pull_back(u_next, gp)
    fd = (wp - wm) / (2 * dt)
    rhs = weq_rhs(dec.w, g0, gdot, pot, gs).values
    grid = gs.grid
    return float(np.sqrt(grid.norm2(fd - rhs) / max(grid.norm2(rhs), 1e-300)))


def direct_w_rate(u: Field, dec: Decomposition, gdot: GroupTangent, pot: PotentialSpec, gs) -> Field:
    """``dw/dt = -Y(eta + w) + g^-1 (du/dt)`` with ``du/dt`` from the PDE right-hand side."""
    grid = gs.grid
    V = pot.on_grid(grid)
    udot = hartree_rhs(u, V, gs.interaction)
    Y = curve_derivative(dec.g, gdot)
    base = Field(gs.eta + dec.w.values, grid)
    return Field(-Y.apply(base).values + _pull_back(udot, dec.g), grid)


# ---------------------------------------------------------------------------
# output


MODULATION_COLUMNS = ["t", "a", "v", "gamma", "mu", "w_h1", "X_norm", "lyapounov", "max_residual"]


def write_modulation_csv(rows: list[dict], path) -> None:
    """Columns ``t, a_j, v_j, gamma, mu, w_h1, X_norm, lyapounov, max_residual``."""
    if not rows:
        return
    d = len(np.atleast_1d(rows[0]["a"]))
    cols = ["t"] + [f"a{j + 1}" for j in range(d)] + [f"v{j + 1}" for j in range(d)]
    cols += ["gamma", "mu", "w_h1", "X_norm", "lyapounov", "max_residual"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            vals = [r["t"], *np.atleast_1d(r["a"]), *np.atleast_1d(r["v"]), r["gamma"], r["mu"]]
            vals += [r.get("w_h1", np.nan), r.get("X_norm", np.nan), r.get("lyapounov", np.nan),
                     r.get("max_residual", np.nan)]
            w.writerow([f"{float(x):.17g}" for x in vals])
