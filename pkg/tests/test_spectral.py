import numpy as np
import pytest

from solitondyn.effective import PotentialSpec
from solitondyn.errors import DomainError, IncompatibleSourceError
from solitondyn.grid import Field
from solitondyn.spectral import (
    LinearizedOperator,
    QuadraticSource,
    apply_L,
    apply_Lminus,
    apply_Lplus,
    coercivity_analysis,
    corrector_orthogonality,
    hermite_basis,
    kernel_residuals,
    kernel_vectors,
    manifold_invariance_check,
    manifold_invariance_residuals,
    rayleigh_quotient,
    scaling_mode,
    second_moments,
    solve_Lplus,
    spectral_report,
)

from conftest import gaussian


def cos_source(gs, h=0.1, a=0.5):
    pot = PotentialSpec.named("cos", h=h, dims=gs.dims)
    return QuadraticSource.from_hessian(pot.hessian(np.full(gs.dims, a)), 1.0, second_moments(gs))


def test_gp_operators_match_closed_forms(gp):
    g, eta = gp.grid, gp.eta
    w = np.exp(-g.x1d**2) * np.cos(g.x1d)
    lap = g.laplacian(w)
    assert np.allclose(apply_Lplus(w, gp).values, -0.5 * lap - 3 * eta**2 * w + 0.5 * w, atol=1e-12)
    assert np.allclose(apply_Lminus(w, gp).values, -0.5 * lap - eta**2 * w + 0.5 * w, atol=1e-12)


def test_complex_input_rejected(gp):
    with pytest.raises(DomainError):
        apply_Lplus(gp.eta + 1j * gp.eta, gp)


def test_kernel_identities_1d(gp):
    res = kernel_residuals(gp)
    assert res["Lminus_eta"] < 1e-7
    assert max(res["Lplus_grad_eta"]) < 1e-6
    assert res["scaling"] < 1e-6


def test_kernel_identities_3d(gs3):
    res = kernel_residuals(gs3)
    assert res["Lminus_eta"] < 1e-7
    assert max(res["Lplus_grad_eta"]) < 1e-5


def test_scaling_mode_maps_to_minus_two_lambda_eta(gp):
    # derivative of mu^p eta(mu x) in mu at mu = 1 solves L+ zeta = -2 lam eta
    Lz = apply_Lplus(scaling_mode(gp), gp).values
    assert np.max(np.abs(Lz + 2 * gp.lam * gp.eta)) < 1e-8


@pytest.mark.parametrize("which", ["gp", "gs3"])
def test_self_adjoint(which, request, rng):
    gs = request.getfixturevalue(which)
    g = gs.grid
    op = LinearizedOperator(gs)
    for _ in range(20 if gs.dims == 1 else 4):
        u = Field(gaussian(g, rng.uniform(-1, 1, g.dims), rng.uniform(0.7, 2.0), rng.uniform(-1, 1, g.dims)), g)
        w = Field(gaussian(g, rng.uniform(-1, 1, g.dims), rng.uniform(0.7, 2.0), rng.uniform(-1, 1, g.dims)), g)
        lhs = g.integrate(op.apply(u).values * np.conj(w.values)).real
        rhs = g.integrate(u.values * np.conj(op.apply(w).values)).real
        assert abs(lhs - rhs) < 1e-9 * np.sqrt(g.norm2(u.values) * g.norm2(w.values))


def test_block_structure(gp, rng):
    g = gp.grid
    a = np.exp(-g.x1d**2 / 3)
    b = np.exp(-(g.x1d - 1) ** 2 / 2)
    Lu = apply_L(Field(a + 1j * b, g), gp).values
    assert np.allclose(Lu.real, apply_Lplus(a, gp).values, atol=1e-13)
    assert np.allclose(Lu.imag, apply_Lminus(b, gp).values, atol=1e-13)


def test_quadratic_source_validation():
    with pytest.raises(ValueError):
        QuadraticSource(0.0, np.array([[1.0, 2.0], [0.0, 1.0]]))
    z = QuadraticSource.zero(3)
    assert z.a0 == 0 and not np.any(z.a)


@pytest.mark.parametrize("which", ["gp", "gs3"])
def test_corrector_solve(which, request):
    gs = request.getfixturevalue(which)
    src = cos_source(gs)
    tol = 1e-9
    f = solve_Lplus(src, gs, tol=tol)
    g = gs.grid
    res = np.sqrt(g.norm2(apply_Lplus(f.values.real, gs).values - src.times_eta(gs)))
    assert res < tol
    assert np.max(np.abs(corrector_orthogonality(f, gs))) < 1e-8
    for v in kernel_vectors(gs):
        assert abs(g.integrate(f.values.real * v)) < 1e-10
    # a different starting guess converges to the same solution
    x0 = np.exp(-g.r**2 if gs.dims == 3 else -g.x1d**2)
    f2 = solve_Lplus(src, gs, tol=tol, x0=x0)
    assert np.sqrt(g.norm2(f.values - f2.values)) < 10 * tol


def test_corrector_source_orthogonal_to_kernel(gp):
    src = cos_source(gp, h=0.1, a=1.3)
    for v in kernel_vectors(gp):
        assert abs(gp.grid.integrate(src.times_eta(gp) * v)) < 1e-10


def test_incompatible_source_rejected(gp):
    with pytest.raises(IncompatibleSourceError):
        solve_Lplus(kernel_vectors(gp)[0], gp)


def test_zero_source_gives_zero(gp):
    assert not np.any(solve_Lplus(QuadraticSource.zero(1), gp).values)


def test_corrector_decay(gp):
    f = solve_Lplus(cos_source(gp), gp, tol=1e-11).values.real
    x = gp.grid.x1d
    sel = (x > 8) & (x < 20)
    slope = np.polyfit(x[sel], np.log(np.abs(f[sel])), 1)[0]
    assert slope <= -(np.sqrt(2 * gp.lam) - 0.1) / 2


def test_hermite_basis_is_orthonormal(grid1d):
    basis = hermite_basis(grid1d, 12, width=1.0)
    G = np.array([[grid1d.integrate(b * c) for c in basis] for b in basis])
    assert np.allclose(G, np.eye(len(basis)), atol=1e-10)


@pytest.mark.parametrize("which", ["gp", "gs3"])
def test_coercivity(which, request):
    gs = request.getfixturevalue(which)
    res = coercivity_analysis(gs, n_basis=56)
    assert res.constant > 0
    # the unconstrained L+ block has a negative direction
    assert res.unconstrained_plus_min < 0
    w = res.minimizer
    assert rayleigh_quotient(w, gs) == pytest.approx(res.constant, rel=1e-6)


def test_coercivity_needs_enough_basis(gp):
    with pytest.raises(DomainError):
        coercivity_analysis(gp, n_basis=20)


def test_kernel_direction_has_zero_quotient(gp):
    d = kernel_vectors(gp)[0]
    assert abs(rayleigh_quotient(Field(d, gp.grid), gp)) < 1e-8


def test_manifold_invariance_1d(gp):
    res = manifold_invariance_residuals(gp)
    assert res[2] < 1e-10  # phase direction maps to zero
    assert manifold_invariance_check(gp) < 1e-6


def test_spectral_report_contents(gp):
    rep = spectral_report(gp, n_basis=56)
    assert rep["dims"] == 1
    assert rep["coercivity"]["constant"] > 0
    assert max(abs(x) for x in rep["corrector"]["orthogonality"]) < 1e-8
    assert rep["kernel"]["Lminus_eta"] < 1e-7
