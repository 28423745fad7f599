"""Linearisation of the energy about the ground state.

For ``w = w_r + i w_i`` the Hessian of ``H + lam M/2`` at ``eta`` splits as
``L w = L+ w_r + i L- w_i`` with

    L+ w = -1/2 Lap w - 2 Phi[eta w] eta - Phi[eta^2] w + lam w
    L- w = -1/2 Lap w - Phi[eta^2] w + lam w

(``Phi = identity`` in 1D, so ``L+`` carries ``-3 eta^2`` there).  This module
builds those operators, solves the corrector equation ``L+ f = Q eta`` in
the complement of ``ker L+ = span{d_j eta}``, and measures coercivity on the
symplectic complement of the soliton manifold.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import product
from math import comb

import numpy as np
from scipy.linalg import eigh, null_space
from scipy.sparse.linalg import LinearOperator, minres
from scipy.special import eval_hermite, gammaln

from .errors import DomainError, IncompatibleSourceError, IterationLimitError, SolverInstabilityError
from .grid import Field, check_same_grid
from .symmetry import apply_generator, inner, n_generators, symplectic_form, tangent_vectors

log = logging.getLogger(__name__)


def _real_values(w) -> np.ndarray:
    vals = w.values if isinstance(w, Field) else np.asarray(w)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag), initial=0.0) > 1e-14 * max(np.max(np.abs(vals.real), initial=0.0), 1.0):
            raise DomainError("L+ and L- act on real fields")
        vals = vals.real
    return vals


@dataclass(frozen=True)
class LinearizedOperator:
    """``L`` about a ground state, sharing its discretised interaction."""

    gs: object
    phi0: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "phi0", self.gs.self_potential())

    @property
    def lam(self) -> float:
        return self.gs.lam

    @property
    def grid(self):
        return self.gs.grid

    def plus(self, w: np.ndarray) -> np.ndarray:
        eta = self.gs.eta
        return (
            -0.5 * self.grid.laplacian(w)
            - 2 * self.gs.interaction.potential(eta * w) * eta
            - self.phi0 * w
            + self.lam * w
        )

    def minus(self, w: np.ndarray) -> np.ndarray:
        return -0.5 * self.grid.laplacian(w) - self.phi0 * w + self.lam * w

    def apply(self, u: Field) -> Field:
        vals = np.asarray(u.values, dtype=complex)
        return Field(self.plus(vals.real) + 1j * self.minus(vals.imag), u.grid)

    def quadratic_form(self, u: Field) -> float:
        return inner(self.apply(u), u)


def _operator(gs) -> LinearizedOperator:
    return gs if isinstance(gs, LinearizedOperator) else LinearizedOperator(gs)


def apply_Lplus(w, gs) -> Field:
    op = _operator(gs)
    return Field(op.plus(_real_values(w)), op.grid)


def apply_Lminus(w, gs) -> Field:
    op = _operator(gs)
    return Field(op.minus(_real_values(w)), op.grid)


def apply_L(u: Field, gs) -> Field:
    return _operator(gs).apply(u)


def kernel_vectors(gs) -> list[np.ndarray]:
    """``d_j eta``, spanning ``ker L+``."""
    return gs.grid.gradient(gs.eta)


def scaling_mode(gs) -> np.ndarray:
    """``(p + x.grad) eta`` with ``p = (d+1)/2``; ``L+`` maps it to ``-2 lam eta``."""
    return apply_generator(n_generators(gs.dims), gs.field).values.real


def kernel_residuals(gs) -> dict:
    """Relative residuals of the kernel identities and the scaling identities.

    ``scaling`` checks ``L+ zeta = -2 lam eta``, the derivative of the soliton
    family ``mu^p eta(mu x)`` in ``mu``; ``scaling_unit`` checks ``L+ zeta = eta``.
    """
    op = _operator(gs)
    g, eta = op.grid, op.gs.eta
    neta = np.sqrt(g.norm2(eta))
    out = {"Lminus_eta": np.sqrt(g.norm2(op.minus(eta))) / neta}
    out["Lplus_grad_eta"] = [
        np.sqrt(g.norm2(op.plus(dj)) / g.norm2(dj)) for dj in kernel_vectors(op.gs)
    ]
    Lz = op.plus(scaling_mode(op.gs))
    out["scaling"] = np.sqrt(g.norm2(Lz + 2 * op.lam * eta)) / neta
    out["scaling_unit"] = np.sqrt(g.norm2(Lz - eta)) / neta
    return {k: (float(v) if np.isscalar(v) else [float(x) for x in v]) for k, v in out.items()}


# ---------------------------------------------------------------------------
# quadratic source


def second_moments(gs) -> np.ndarray:
    """``I_j = int x_j^2 eta^2``."""
    g = gs.grid
    return np.array([g.integrate(x**2 * gs.eta**2) for x in g.coords], dtype=float)


@dataclass(frozen=True)
class QuadraticSource:
    """``Q(x) = a0 + sum_jk a_jk x_j x_k`` with symmetric ``a``."""

    a0: float
    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("a must be square")
        if not np.allclose(a, a.T, rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(a)))):
            raise ValueError("a must be symmetric")
        object.__setattr__(self, "a", 0.5 * (a + a.T))
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def dims(self) -> int:
        return self.a.shape[0]

    @classmethod
    def zero(cls, dims: int) -> "QuadraticSource":
        return cls(0.0, np.zeros((dims, dims)))

    @classmethod
    def from_hessian(cls, hess, mu: float, moments) -> "QuadraticSource":
        """Second-order part of ``-V(x/mu + a) + alpha + beta.x`` about ``x = 0``.

        ``a_jk = -d_jk V / (2 mu^2)``; ``a0 = -sum_j d_jj V I_j / (4 mu^2)`` comes
        from the second-order terms of ``alpha``.
        """
        hess = np.atleast_2d(np.asarray(hess, dtype=float))
        moments = np.asarray(moments, dtype=float)
        return cls(-float(np.dot(np.diag(hess), moments)) / (4 * mu**2), -hess / (2 * mu**2))

    def values(self, grid) -> np.ndarray:
        if grid.dims != self.dims:
            raise DomainError("source dimension does not match grid")
        q = np.full(grid.shape, self.a0)
        for j, k in product(range(self.dims), repeat=2):
            if self.a[j, k] != 0.0:
                q = q + self.a[j, k] * grid.coords[j] * grid.coords[k]
        return q

    def times_eta(self, gs) -> np.ndarray:
        return self.values(gs.grid) * gs.eta

    def scale(self, c: float) -> "QuadraticSource":
        return QuadraticSource(c * self.a0, c * self.a)


# ---------------------------------------------------------------------------
# corrector solve


@dataclass
class _Deflated:
    """``B = K^-1/2 L+ K^-1/2`` restricted to the complement of ``K^1/2 ker L+``.

    ``K = -1/2 Lap + lam`` makes ``B`` a bounded perturbation of the identity,
    so unpreconditioned MINRES converges in a modest number of iterations.
    """

    op: LinearizedOperator

    def __post_init__(self):
        g = self.op.grid
        self.shape = g.shape
        self.ksqrt = np.sqrt(0.5 * g.k2 + self.op.lam)
        self.basis = []
        for v in kernel_vectors(self.op.gs):
            q = self.kpow(v, 1)
            for b in self.basis:
                q = q - np.vdot(b, q) * b
            self.basis.append(q / np.linalg.norm(q))

    def kpow(self, f, sign):
        g = self.op.grid
        return g.ifft(self.ksqrt**sign * g.fft(f)).real

    def project(self, y):
        for b in self.basis:
            y = y - np.vdot(b, y) * b
        return y

    def matvec(self, y):
        y = self.project(np.asarray(y).reshape(self.shape))
        out = self.kpow(self.op.plus(self.kpow(y, -1)), -1)
        return self.project(out).ravel()


def _project_kernel(f: np.ndarray, kernel) -> np.ndarray:
    """L2-orthogonal projection off ``span(kernel)`` (vectors mutually orthogonal by parity)."""
    for v in kernel:
        f = f - np.vdot(v, f) / np.vdot(v, v) * v
    return f


def solve_Lplus(src, gs, tol: float = 1e-9, x0=None, max_iter: int = 2000, refinements: int = 4) -> Field:
    """Solve ``L+ f = Q eta`` with ``f`` orthogonal to ``ker L+``.

    ``src`` is a :class:`QuadraticSource` or a real right-hand side (array or
    Field).  Raises :class:`IncompatibleSourceError` when the right-hand side
    has a kernel component above ``10 tol``.
    """
    op = _operator(gs)
    g = op.grid
    if isinstance(src, QuadraticSource):
        rhs = src.times_eta(op.gs)
    else:
        rhs = _real_values(src)
        if isinstance(src, Field):
            check_same_grid(src.grid, g)
    kernel = kernel_vectors(op.gs)
    for j, v in enumerate(kernel):
        comp = abs(g.integrate(rhs * v)) / np.sqrt(g.norm2(v))
        if comp > 10 * tol:
            raise IncompatibleSourceError(f"source has component {comp:.3e} along d_{j + 1} eta")
    if not np.any(rhs):
        return Field(np.zeros(g.shape), g)
    rhs = _project_kernel(rhs, kernel)
    defl = _Deflated(op)
    n = rhs.size
    A = LinearOperator((n, n), matvec=defl.matvec, dtype=float)
    f = np.zeros(g.shape) if x0 is None else _project_kernel(_real_values(x0).copy(), kernel)
    res = np.inf
    for _ in range(refinements + 1):
        r = rhs - op.plus(f)
        res = np.sqrt(g.norm2(r))
        if res < tol:
            break
        b = defl.project(defl.kpow(r, -1)).ravel()
        y, info = minres(A, b, rtol=min(1e-3, 0.1 * tol / max(res, 1e-300)), maxiter=max_iter)
        if info < 0:
            raise SolverInstabilityError(f"MINRES breakdown (info={info})")
        f = _project_kernel(f + defl.kpow(y.reshape(g.shape), -1), kernel)
    else:
        r = rhs - op.plus(f)
        res = np.sqrt(g.norm2(r))
        if res >= tol:
            raise IterationLimitError(f"corrector residual {res:.3e} above tol {tol:.1e}", residual=res)
    return Field(f, g)


def corrector_orthogonality(f: Field, gs) -> np.ndarray:
    """``omega(f, e_j eta)`` for every generator."""
    return np.array([symplectic_form(f, t) for t in tangent_vectors(gs)])


# ---------------------------------------------------------------------------
# coercivity


def _hermite_1d(n: int, x: np.ndarray) -> np.ndarray:
    """Normalised Hermite function of order ``n``."""
    lognorm = -0.5 * (n * np.log(2.0) + gammaln(n + 1) + 0.5 * np.log(np.pi))
    return np.exp(lognorm - x**2 / 2) * eval_hermite(n, x)


def hermite_basis(grid, n_basis: int, width: float) -> list[np.ndarray]:
    """Tensor Hermite functions of total degree ``<= D`` (smallest ``D`` giving ``>= n_basis``)."""
    d = grid.dims
    D = 0
    while comb(D + d, d) < n_basis:
        D += 1
    per_axis = [[_hermite_1d(m, x / width) for m in range(D + 1)] for x in grid.coords]
    out = []
    for degs in product(range(D + 1), repeat=d):
        if sum(degs) <= D:
            f = per_axis[0][degs[0]]
            for ax in range(1, d):
                f = f * per_axis[ax][degs[ax]]
            out.append(np.broadcast_to(f, grid.shape).copy())
    return out


@dataclass
class CoercivityResult:
    constant: float
    plus_constant: float
    minus_constant: float
    unconstrained_plus_min: float
    minimizer: Field
    n_basis: int
    width: float


def _gram(op, basis, apply):
    g = op.grid
    n = len(basis)
    B = np.array([b.ravel() for b in basis])
    AB = np.array([apply(b).ravel() for b in basis])
    A = (B @ AB.T) * g.dv
    A = 0.5 * (A + A.T)
    G = (B @ B.T) * g.dv
    for grad in zip(*[g.gradient(b) for b in basis]):
        D = np.array([c.ravel() for c in grad])
        G = G + (D @ D.T) * g.dv
    return A, 0.5 * (G + G.T), B.reshape((n,) + g.shape)


def _constrained_min(A, G, C):
    Z = null_space(C) if C is not None and len(C) else np.eye(A.shape[0])
    Az, Gz = Z.T @ A @ Z, Z.T @ G @ Z
    vals, vecs = eigh(Az, Gz)
    return vals[0], Z @ vecs[:, 0]


def coercivity_analysis(gs, n_basis: int = 56, width: float | None = None) -> CoercivityResult:
    """Generalised Rayleigh quotient ``<Lw, w> / ||w||_H1^2`` on a Hermite Galerkin space.

    The constraints ``omega(w, e_j eta) = 0`` decouple: the real part must be
    orthogonal to ``x_j eta`` and ``eta``, the imaginary part to ``d_j eta``
    and the scaling mode.
    """
    if n_basis < 50:
        raise DomainError("n_basis must be at least 50")
    op = _operator(gs)
    g, eta = op.grid, op.gs.eta
    if width is None:
        # match the soliton's rms width per axis
        width = float(np.sqrt(np.mean(second_moments(op.gs)) / op.gs.mass)) * 1.5
    basis = hermite_basis(g, n_basis, width)
    Ap, G, B = _gram(op, basis, op.plus)
    Am, _, _ = _gram(op, basis, op.minus)
    flat = B.reshape(len(basis), -1)

    def constraints(funcs):
        return np.array([flat @ f.ravel() * g.dv for f in funcs])

    Cp = constraints([x * eta for x in g.coords] + [eta])
    Cm = constraints(list(kernel_vectors(op.gs)) + [scaling_mode(op.gs)])
    cp, yp = _constrained_min(Ap, G, Cp)
    cm, ym = _constrained_min(Am, G, Cm)
    free, _ = _constrained_min(Ap, G, None)
    if cp <= cm:
        w = np.tensordot(yp, B, axes=1) + 0j
    else:
        w = 1j * np.tensordot(ym, B, axes=1)
    c = float(min(cp, cm))
    if c < -1e-6:
        raise SolverInstabilityError(f"constrained quadratic form is indefinite (min {c:.3e})")
    return CoercivityResult(c, float(cp), float(cm), float(free), Field(w, g), len(basis), width)


def coercivity_constant(gs, n_basis: int = 56) -> float:
    return coercivity_analysis(gs, n_basis).constant


def rayleigh_quotient(w: Field, gs) -> float:
    op = _operator(gs)
    return op.quadratic_form(w) / op.grid.h1_norm(w.values) ** 2


# ---------------------------------------------------------------------------
# invariance of the tangent space


def manifold_invariance_residuals(gs) -> list[float]:
    """Out-of-span part of ``i L (e_j eta)`` relative to ``||e_j eta||``."""
    op = _operator(gs)
    g = op.grid
    tangents = tangent_vectors(op.gs)
    T = np.array([np.concatenate([t.values.real.ravel(), t.values.imag.ravel()]) for t in tangents])
    out = []
    for t in tangents:
        v = 1j * op.apply(t).values
        vv = np.concatenate([v.real.ravel(), v.imag.ravel()])
        coef, *_ = np.linalg.lstsq(T.T, vv, rcond=None)
        rest = vv - T.T @ coef
        out.append(float(np.sqrt(np.sum(rest**2) * g.dv / g.norm2(t.values))))
    return out


def manifold_invariance_check(gs) -> float:
    return max(manifold_invariance_residuals(gs))


# ---------------------------------------------------------------------------
# report


def spectral_report(gs, n_basis: int = 56, tol: float = 1e-10) -> dict:
    """Kernel residuals, coercivity, invariance and one corrector solve."""
    from .effective import PotentialSpec  # local import: effective depends on this module

    op = _operator(gs)
    report = {"dims": op.grid.dims, "n": op.grid.n, "box": op.grid.box, "lambda": op.lam}
    report["kernel"] = kernel_residuals(op)
    coer = coercivity_analysis(op.gs, n_basis)
    report["coercivity"] = {
        "constant": coer.constant,
        "plus_block": coer.plus_constant,
        "minus_block": coer.minus_constant,
        "unconstrained_plus_min": coer.unconstrained_plus_min,
        "n_basis": coer.n_basis,
        "width": coer.width,
    }
    report["invariance"] = manifold_invariance_residuals(op)
    pot = PotentialSpec.named("cos", h=0.1, dims=op.grid.dims)
    src = QuadraticSource.from_hessian(pot.hessian(np.full(op.grid.dims, 0.5)), 1.0, second_moments(op.gs))
    f = solve_Lplus(src, op, tol=tol)
    report["corrector"] = {
        "residual": float(np.sqrt(op.grid.norm2(op.plus(f.values.real) - src.times_eta(op.gs)))),
        "orthogonality": [float(x) for x in corrector_orthogonality(f, op.gs)],
    }
    return report


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
