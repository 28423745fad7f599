"""Tracking experiments: PDE evolution against the effective ODE.

A run starts from ``u0 = g0.(eta + w0)``, evolves the PDE with
``V(x) = W(h x)``, integrates the effective flow from ``g0``, and at every
observation time records

* ``err_eff = ||u - g_eff.eta||_H1`` (the tracking error),
* the modulation fit ``g_mod`` with ``||w||_H1`` and the Lyapounov value,
* ``err_mod = ||u - g_mod.eta||_H1``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .effective import EffectiveState, PotentialSpec, alpha_beta, effective_rates, integrate
from .errors import FitDivergenceError
from .grid import Field, Grid
from .groundstate import ground_state, solve_hartree_ground_state
from .modulation import Corrector, build_wtilde, compute_X, fit, lyapounov
from .pde import StrangStepper, energy, mass
from .spectral import hermite_basis
from .symmetry import GroupElement, GroupTangent, LieCoeffs, act

log = logging.getLogger(__name__)


def make_ground_state(equation: str, n: int, box: float, profile=None):
    if equation == "gp1d":
        return ground_state(Grid(n, box, 1))
    if equation == "hartree3d":
        return ground_state(Grid(n, box, 3), profile or solve_hartree_ground_state())
    raise ValueError(f"unknown equation {equation!r}")


def random_orthogonal_perturbation(gs, eps0: float, rng: np.random.Generator, n_modes: int = 50) -> Field:
    """Random smooth field with ``P(w) = 0`` and ``||w||_H1 = eps0``."""
    if eps0 == 0:
        return Field(np.zeros(gs.grid.shape, dtype=complex), gs.grid)
    from .modulation import project

    grid = gs.grid
    basis = hermite_basis(grid, n_modes, width=1.5)
    c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    w = sum(ci * b for ci, b in zip(c, basis))
    wf = Field(w, grid)
    # P(Y eta) = Y, so subtracting P(w) eta leaves a field with P = 0
    Pw = LieCoeffs(project(wf, gs))
    w = w - Pw.apply(gs.field).values
    w = w - LieCoeffs(project(Field(w, grid), gs)).apply(gs.field).values
    return Field(eps0 * w / grid.h1_norm(w), grid)


@dataclass
class TrackingResult:
    h: float
    eps0: float
    records: list[dict]
    sup_err_eff: float
    sup_err_mod: float
    sup_w_h1: float
    pde_error: float | None = None
    fit_failures: int = 0
    runtime: float = 0.0
    conservation: dict = field(default_factory=dict)

    def column(self, key):
        return np.array([r.get(key, np.nan) for r in self.records], dtype=float)


def _advance_guess(g: GroupElement, pot, gs, dt: float) -> GroupElement:
    r = effective_rates(EffectiveState.from_group(g), pot, gs)
    return GroupElement(g.a + dt * r.a, g.v + dt * r.v, g.gamma + dt * r.gamma, g.mu)


def track(
    gs,
    pot: PotentialSpec,
    g0: GroupElement,
    T: float,
    dt: float,
    interval: float,
    eps0: float = 0.0,
    seed: int = 0,
    do_fit: bool = True,
    wtilde: bool = False,
    ode_dt: float = 0.01,
    richardson: bool = False,
    u0: Field | None = None,
    fit_tol: float = 1e-9,
) -> TrackingResult:
    """Evolve ``g0.(eta + w0)`` to ``T`` and compare with the effective flow."""
    t_start = time.time()
    grid = gs.grid
    rng = np.random.default_rng(seed)
    if u0 is None:
        w0 = random_orthogonal_perturbation(gs, eps0, rng)
        u0 = act(g0, Field(gs.eta + w0.values, grid), check_support=False)
    V = pot.on_grid(grid)
    ode_dt = min(ode_dt, interval, 0.01 / max(1.0, float(np.linalg.norm(g0.v))))
    n_ode = int(round(interval / ode_dt))
    ode_dt = interval / n_ode
    traj = integrate(EffectiveState.from_group(g0), pot, gs, T, ode_dt, sample_every=n_ode)
    corr = Corrector(gs) if wtilde else None

    every = int(round(interval / dt))
    nsteps = int(round(T / dt))
    if abs(every * dt - interval) > 1e-9 or abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ValueError("interval and T must be multiples of dt")
    stepper = StrangStepper(grid, dt, V, gs.interaction)
    records: list[dict] = []
    g_guess = g0
    failures = 0
    u = np.asarray(u0.values, dtype=complex).copy()
    stepper.reset_guard(u)
    m0 = mass(u0)
    E0 = energy(u0, V, gs.interaction)
    i_obs = 0
    done = 0
    while True:
        t = done * dt
        uf = Field(u, grid)
        st = traj.state(i_obs)
        g_eff = st.group_element()
        rec = {"t": t, "a_eff": g_eff.a.copy(), "v_eff": g_eff.v.copy(), "gamma_eff": g_eff.gamma}
        rec["err_eff"] = grid.h1_norm(u - act(g_eff, gs.field, check_support=False).values)
        rec["mass"] = mass(uf)
        rec["energy"] = energy(uf, V, gs.interaction)
        rec["boundary"] = grid.boundary_mass_fraction(u)
        if do_fit:
            try:
                dec = fit(uf, g_guess, gs, tol=fit_tol)
                g_mod = dec.g
                rec.update(
                    a=g_mod.a.copy(), v=g_mod.v.copy(), gamma=g_mod.gamma, mu=g_mod.mu,
                    w_h1=dec.w_h1, max_residual=dec.max_residual,
                )
                rec["err_mod"] = grid.h1_norm(u - act(g_mod, gs.field, check_support=False).values)
                w1 = dec.w
                if corr is not None:
                    wt, _ = build_wtilde(g_mod.a, g_mod.mu, pot, gs, corr)
                    rec["wtilde_h1"] = grid.h1_norm(wt.values)
                    w1 = Field(dec.w.values - wt.values, grid)
                    rec["w1_h1"] = grid.h1_norm(w1.values)
                rec["lyapounov"] = lyapounov(w1, gs)
                g_guess = _advance_guess(g_mod, pot, gs, interval)
            except FitDivergenceError as exc:
                failures += 1
                rec["fit_error"] = str(exc)
                do_fit = False
        records.append(rec)
        if done >= nsteps:
            break
        u = stepper.advance(u, every, t0=t)
        done += every
        i_obs += 1
    if do_fit or any("a" in r for r in records):
        _attach_X(records, pot, gs)
    res = TrackingResult(
        pot.h,
        eps0,
        records,
        float(max(r["err_eff"] for r in records)),
        float(max((r.get("err_mod", np.nan) for r in records), default=np.nan)),
        float(max((r.get("w_h1", np.nan) for r in records), default=np.nan)),
        fit_failures=failures,
    )
    res.conservation = {
        "mass_drift": float(max(abs(r["mass"] - m0) for r in records) / m0),
        "energy_drift": float(max(abs(r["energy"] - E0) for r in records) / max(abs(E0), 1e-300)),
        "max_boundary": float(max(r["boundary"] for r in records)),
    }
    if richardson:
        res.pde_error = richardson_error(u0, V, gs, T, dt, interval)
    res.runtime = time.time() - t_start
    return res


def _attach_X(records: list[dict], pot, gs) -> None:
    """``|X|`` at interior samples from centred differences of the fitted ``g(t)``."""
    fitted = [i for i, r in enumerate(records) if "a" in r]
    for idx in range(1, len(fitted) - 1):
        i0, i1, i2 = fitted[idx - 1], fitted[idx], fitted[idx + 1]
        r0, r1, r2 = records[i0], records[i1], records[i2]
        span = r2["t"] - r0["t"]
        gdot = GroupTangent(
            (r2["a"] - r0["a"]) / span, (r2["v"] - r0["v"]) / span, (r2["gamma"] - r0["gamma"]) / span,
            (r2["mu"] - r0["mu"]) / span,
        )
        g = GroupElement(r1["a"], r1["v"], r1["gamma"], r1["mu"])
        alpha, beta = alpha_beta(g.a, g.mu, pot, gs)
        r1["X_norm"] = compute_X(g, gdot, alpha, beta, gs.lam).norm()


def richardson_error(u0: Field, V, gs, T: float, dt: float, interval: float) -> float:
    """``sup_t ||u_dt - u_dt/2||_H1`` over the observation times."""
    grid = gs.grid
    s1 = StrangStepper(grid, dt, V, gs.interaction)
    s2 = StrangStepper(grid, dt / 2, V, gs.interaction)
    u1 = np.asarray(u0.values, dtype=complex).copy()
    u2 = u1.copy()
    s1.reset_guard(u1)
    s2.reset_guard(u2)
    every = int(round(interval / dt))
    n = int(round(T / dt))
    worst = 0.0
    done = 0
    while done < n:
        u1 = s1.advance(u1, every, t0=done * dt)
        u2 = s2.advance(u2, 2 * every, t0=done * dt)
        done += every
        worst = max(worst, grid.h1_norm(u1 - u2))
    return worst


def fit_slope(hs, errs) -> float:
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    if len(hs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def fit_prefactor(hs, errs, power: float = 2.0) -> float:
    """Least-squares ``c`` in ``log err = log c + power log h``."""
    hs, errs = np.asarray(hs, dtype=float), np.asarray(errs, dtype=float)
    return float(np.exp(np.mean(np.log(errs) - power * np.log(hs))))


def theorem_horizon(h: float, c1: float = 1.0, c2: float = 1.0, delta: float = 0.0) -> float:
    """``c1/h + delta log(1/h) / (c2 h)``."""
    return c1 / h + delta * np.log(1 / h) / (c2 * h)


def round_to_step(T: float, step: float) -> float:
    return float(np.round(T / step) * step)
