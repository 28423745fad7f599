import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from solitondyn.errors import DomainError, GridMismatchError
from solitondyn.grid import Field, Grid
from solitondyn.symmetry import (
    GroupElement,
    GroupTangent,
    LieCoeffs,
    SupportOverflowWarning,
    act,
    apply_generator,
    compose,
    conformal_factor_check,
    curve_derivative,
    inner,
    inverse,
    n_generators,
    one_parameter,
    restricted_form_matrix,
    symplectic_form,
)

from conftest import gaussian

G1 = Grid(512, 60.0, 1)
G3 = Grid(48, 24.0, 3)
# boosted and dilated packets need a finer 3D grid for 1e-9 identities
G3_FINE = Grid(96, 32.0, 3)


def random_element(rng, dims, spread=1.0):
    return GroupElement(
        spread * rng.uniform(-1, 1, dims),
        spread * rng.uniform(-1, 1, dims),
        rng.uniform(-np.pi, np.pi),
        np.exp(rng.uniform(-0.3, 0.3)),
    )


def close(g, h, tol):
    return np.allclose(g.params(), h.params(), atol=tol, rtol=0)


params = st.tuples(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-10, 10), st.floats(0.2, 5.0)
)


@settings(max_examples=100, deadline=None)
@given(params, params, params)
def test_compose_is_associative(p, q, r):
    g, h, k = (GroupElement([x[0]], [x[1]], x[2], x[3]) for x in (p, q, r))
    assert close(compose(compose(g, h), k), compose(g, compose(h, k)), 1e-12 * 100)


@settings(max_examples=50, deadline=None)
@given(params)
def test_inverse_is_two_sided(p):
    g = GroupElement([p[0]], [p[1]], p[2], p[3])
    e = GroupElement.identity(1)
    assert close(compose(g, inverse(g)), e, 1e-12 * max(1, abs(p[2]), p[3] * 10))
    assert close(compose(inverse(g), g), e, 1e-12 * max(1, abs(p[2]), p[3] * 10))


def test_group_law_examples():
    g = GroupElement([0, 0, 0], [0, 0, 0], 0, 2)
    h = GroupElement([1, 0, 0], [0, 0, 0], 0, 1)
    assert close(compose(g, h), GroupElement([0.5, 0, 0], [0, 0, 0], 0, 2), 0)
    assert close(g @ GroupElement.identity(3), g, 0)
    a = np.array([0.3, -1.0, 2.0])
    assert close(inverse(GroupElement(a, np.zeros(3), 0, 1.7)), GroupElement(-1.7 * a, np.zeros(3), 0, 1 / 1.7), 1e-15)
    e = GroupElement.identity(3)
    assert close(inverse(e), e, 0)


def test_group_element_validation_and_serialisation():
    with pytest.raises(DomainError):
        GroupElement([0.0], [0.0], 0.0, 0.0)
    with pytest.raises(ValueError):
        GroupElement([0.0], [0.0, 1.0])
    g = GroupElement([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], 7.5, 1.2)
    assert close(GroupElement.from_dict(g.to_dict()), g, 0)
    assert g.gamma == 7.5  # stored unreduced
    assert -np.pi < g.wrapped_gamma() <= np.pi


def test_identity_action_leaves_field_unchanged():
    u = Field(gaussian(G1, [1.0], 1.3, [0.4]), G1)
    out = act(GroupElement.identity(1), u)
    assert np.max(np.abs(out.values - u.values)) < 1e-13


@pytest.mark.parametrize("grid", [G1, G3_FINE], ids=["1d", "3d"])
def test_action_composition_and_inverse(grid, rng):
    d = grid.dims
    u = Field(gaussian(grid, 0.3 * np.ones(d), 1.5, 0.5 * np.ones(d)), grid)
    g1 = random_element(rng, d, 0.8)
    g2 = random_element(rng, d, 0.8)
    twice = act(g1, act(g2, u))
    once = act(compose(g1, g2), u)
    assert np.max(np.abs(twice.values - once.values)) < 1e-9
    back = act(inverse(g1), act(g1, u))
    assert np.max(np.abs(back.values - u.values)) < 1e-9


@pytest.mark.parametrize("grid", [G1, G3], ids=["1d", "3d"])
def test_action_scales_mass_by_mu(grid):
    u = Field(gaussian(grid, width=1.2), grid)
    g = GroupElement(0.5 * np.ones(grid.dims), np.ones(grid.dims), 0.3, 1.3)
    assert grid.norm2(act(g, u).values) == pytest.approx(1.3 * grid.norm2(u.values), rel=1e-10)


def test_action_matches_closed_form_1d():
    x = G1.x1d
    u = Field(1 / np.cosh(x), G1)
    g = GroupElement([2.0], [0.7], 0.4, 1.5)
    expect = np.exp(1j * (0.4 + 0.7 * (x - 2.0))) * 1.5 / np.cosh(1.5 * (x - 2.0))
    assert np.max(np.abs(act(g, u).values - expect)) < 1e-10


def test_support_overflow_warning():
    u = Field(1 / np.cosh(G1.x1d), G1)
    with pytest.warns(SupportOverflowWarning):
        act(GroupElement([27.0], [0.0], 0, 1.0), u)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        act(GroupElement([1.0], [0.0], 0, 1.0), u)


def test_generators_on_soliton(gp):
    eta = gp.field
    x0 = gp.grid.n // 2
    assert np.allclose(apply_generator(3, eta).values, 1j * gp.eta)
    assert apply_generator(4, eta).values[x0] == pytest.approx(1.0 * gp.eta[x0])  # weight 1 in 1D
    assert n_generators(1) == 4 and n_generators(3) == 8
    with pytest.raises(ValueError):
        apply_generator(5, eta)


def test_scaling_generator_weight_in_3d():
    u = Field(gaussian(G3, width=1.5).real, G3)
    c = G3.n // 2
    assert apply_generator(8, u).values[c, c, c] == pytest.approx(2 * u.values[c, c, c])


@pytest.mark.parametrize("grid", [G1, G3], ids=["1d", "3d"])
def test_generators_are_derivatives_of_one_parameter_subgroups(grid):
    d = grid.dims
    u = Field(gaussian(grid, 0.2 * np.ones(d), 1.1, 0.3 * np.ones(d)), grid)
    for j in range(1, n_generators(d) + 1):
        exact = apply_generator(j, u).values
        errs = []
        for s in (1e-2, 5e-3):
            fd = (act(one_parameter(j, s, d), u).values - act(one_parameter(j, -s, d), u).values) / (2 * s)
            errs.append(np.max(np.abs(fd - exact)))
        order = np.log2(errs[0] / errs[1])
        assert errs[1] < 1e-4
        assert order > 1.8, (j, errs)


def test_curve_derivative_examples():
    g = GroupElement([1.0], [0.5], 0.2, 1.3)
    assert np.all(curve_derivative(g, GroupTangent([0.0], [0.0], 0.0, 0.0)).c == 0)
    Y = curve_derivative(GroupElement([0.0], [0.0], 0.0, np.e), GroupTangent([0.0], [0.0], 0.0, np.e))
    assert np.allclose(Y.c, [0, 0, 0, 1])


@pytest.mark.parametrize("grid", [G1, G3], ids=["1d", "3d"])
def test_curve_derivative_matches_finite_differences(grid, rng):
    d = grid.dims
    u = Field(gaussian(grid, width=1.0), grid)
    a0, v0, da, dv = (rng.uniform(-0.5, 0.5, d) for _ in range(4))
    gam0, dgam, mu0, dmu = 0.3, -0.7, 1.1, 0.4

    def curve(t):
        return GroupElement(a0 + da * t + 0.3 * t**2, v0 + dv * t, gam0 + dgam * t + t**2, mu0 + dmu * t)

    g = curve(0.0)
    Y = curve_derivative(g, GroupTangent(da, dv, dgam, dmu))
    exact = act(g, Y.apply(u)).values
    errs = []
    for s in (1e-2, 5e-3):
        fd = (act(curve(s), u).values - act(curve(-s), u).values) / (2 * s)
        errs.append(np.max(np.abs(fd - exact)))
    assert errs[1] < 1e-4
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_symplectic_form_and_inner_product(gp):
    eta = gp.field
    ieta = Field(1j * gp.eta, gp.grid)
    assert symplectic_form(eta, eta) == 0.0
    assert symplectic_form(eta, ieta) == pytest.approx(-2.0, rel=1e-12)
    assert abs(inner(eta, ieta)) < 1e-15
    with pytest.raises(GridMismatchError):
        symplectic_form(eta, Field(np.zeros(64), Grid(64, 10.0, 1)))


def test_restricted_form_1d(gp):
    M = restricted_form_matrix(gp)
    expect = np.zeros((4, 4))
    expect[0, 1], expect[1, 0] = -1, 1
    expect[2, 3], expect[3, 2] = 1, -1
    assert np.max(np.abs(M - expect)) < 1e-8
    assert np.max(np.abs(M + M.T)) < 1e-10


def test_restricted_form_3d(gs3):
    M = restricted_form_matrix(gs3)
    expect = np.zeros((8, 8))
    for j in range(3):
        expect[j, j + 3], expect[j + 3, j] = -1, 1
    expect[6, 7], expect[7, 6] = 1, -1
    assert np.max(np.abs(M - expect)) < 1e-8
    assert np.max(np.abs(M + M.T)) < 1e-10


@pytest.mark.parametrize("grid", [G1, G3], ids=["1d", "3d"])
def test_conformal_factor_on_random_triples(grid, rng):
    d = grid.dims
    for _ in range(20 if d == 1 else 5):
        u = Field(gaussian(grid, rng.uniform(-1, 1, d), rng.uniform(0.8, 1.4), rng.uniform(-1, 1, d)), grid)
        w = Field(gaussian(grid, rng.uniform(-1, 1, d), rng.uniform(0.8, 1.4), rng.uniform(-1, 1, d)), grid)
        g = random_element(rng, d, 0.8)
        assert conformal_factor_check(g, u, w) == pytest.approx(g.mu, rel=1e-6)


def test_conformal_factor_examples():
    u = Field(gaussian(G1, [0.5], 1.0, [0.3]), G1)
    w = Field(gaussian(G1, [-0.5], 1.2, [-0.6]), G1)
    assert conformal_factor_check(GroupElement([0.0], [0.0], 0, 2.0), u, w) == pytest.approx(2.0, rel=1e-6)
    assert conformal_factor_check(GroupElement([1.5], [0.0], 0, 1.0), u, w) == pytest.approx(1.0, abs=1e-9)
    assert conformal_factor_check(GroupElement([0.3], [0.4], 1.0, 1.0), u, w) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DomainError):
        conformal_factor_check(GroupElement.identity(1), u, u)


def test_lie_coeffs_validation():
    with pytest.raises(ValueError):
        LieCoeffs([0.0, np.nan, 0.0, 0.0])
    assert LieCoeffs([3.0, 4.0, 0.0, 0.0]).norm() == 5.0
