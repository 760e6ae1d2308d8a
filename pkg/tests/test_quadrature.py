"""Adaptive quadrature against closed forms and the midpoint oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi

from carnot_ineq import jets
from carnot_ineq.fields import ScalarField
from carnot_ineq.groups import abelian, heisenberg
from carnot_ineq.quadrature import (
    ConfigurationError,
    DomainSpec,
    IntegrationError,
    QuadratureSpec,
    integrate,
    integrate_many,
    oracle_integrate,
    weighted_lp_integral,
    weighted_lp_norm,
)
from carnot_ineq.test_functions import BumpSpec, bump


def random_poly(n, seed):
    rng = np.random.default_rng(seed)
    E = rng.integers(0, 4, size=(5, n))
    c = rng.normal(size=5)
    return lambda x: (c[None, :] * np.prod(x[:, None, :] ** E[None], axis=2)).sum(axis=1)


def test_unit_cube_volume():
    iv = integrate(lambda x: np.ones(len(x)), DomainSpec(((0, 1),) * 3), QuadratureSpec())
    assert iv.value == pytest.approx(1.0, abs=1e-14)
    assert iv.converged and iv.err_estimate <= 1e-12


def test_constant_times_volume():
    dom = DomainSpec(((-1, 2), (0, 0.5), (3, 7)))
    iv = integrate(lambda x: np.full(len(x), 2.5), dom, QuadratureSpec())
    assert iv.value == pytest.approx(2.5 * dom.volume(), rel=1e-14)


@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_annulus_of_inverse_radius(eps):
    dom = DomainSpec(((-1, 1), (-1, 1)), eps)

    def f(x):
        r = np.hypot(x[:, 0], x[:, 1])
        return np.where(r < 1, 1 / r, 0.0)

    iv = integrate(f, dom, QuadratureSpec(max_refinement_depth=6, rel_tol=1e-6, max_cells=70000))
    exact = 2 * math.pi * (1 - eps)
    assert abs(iv.value - exact) <= iv.err_estimate
    assert iv.err_estimate <= 5e-3


@pytest.mark.parametrize("seed", range(4))
def test_polynomial_matches_oracle(seed):
    dom = DomainSpec(((-1, 1),) * 3)
    f = random_poly(3, seed)
    iv = integrate(f, dom, QuadratureSpec(order=5))
    # the midpoint error of a polynomial is a series in h^2; two Richardson
    # steps over three grids leave an O(h^6) remainder
    a, b, c = (oracle_integrate(f, dom, k) for k in (32, 64, 128))
    r1, r2 = (4 * b - a) / 3, (4 * c - b) / 3
    assert iv.value == pytest.approx((16 * r2 - r1) / 15, abs=1e-8)


def test_gaussian_line():
    iv = integrate(lambda x: np.exp(-x[:, 0] ** 2), DomainSpec(((-8, 8),)), QuadratureSpec(rel_tol=1e-12))
    assert iv.value == pytest.approx(math.sqrt(math.pi), abs=1e-10)
    v = oracle_integrate(lambda x: np.exp(-x[:, 0] ** 2), DomainSpec(((-8, 8),)), 200000)
    assert v == pytest.approx(math.sqrt(math.pi), abs=1e-10)


def test_oracle_constant_and_vector():
    dom = DomainSpec(((0, 2), (0, 3)))
    assert oracle_integrate(lambda x: np.ones(len(x)), dom, 7) == pytest.approx(6.0)
    out = oracle_integrate(lambda x: np.stack([np.ones(len(x)), x[:, 0]], axis=1), dom, [20, 5])
    np.testing.assert_allclose(out, [6.0, 6.0])


def smooth_field(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    M = A @ A.T / n + np.eye(n)
    c = rng.uniform(-0.3, 0.3, size=n)
    k = rng.normal(size=n)
    return lambda x: np.exp(-0.5 * np.einsum("mi,ij,mj->m", x - c, M, x - c)) * np.cos(x @ k)


@given(st.integers(2, 5), st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_linearity(n, seed, a, b):
    dom = DomainSpec(((-1, 1),) * n)
    q = QuadratureSpec(order=5, base_cells_per_axis=2, max_refinement_depth=0)
    f, g = smooth_field(n, seed), smooth_field(n, seed + 1)
    If, Ig = integrate(f, dom, q), integrate(g, dom, q)
    Ih = integrate(lambda x: a * f(x) + b * g(x), dom, q)
    bound = 2 * (Ih.err_estimate + abs(a) * If.err_estimate + abs(b) * Ig.err_estimate) + 1e-13
    assert abs(Ih.value - (a * If.value + b * Ig.value)) <= bound


@pytest.mark.parametrize("seed", range(3))
def test_deeper_refinement_does_not_increase_estimate(seed):
    dom = DomainSpec(((-1, 1),) * 2)
    f = smooth_field(2, seed)
    errs = [
        integrate(f, dom, QuadratureSpec(order=4, base_cells_per_axis=1, max_refinement_depth=d, rel_tol=1e-14)).err_estimate
        for d in range(5)
    ]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_vector_integrand_columns_are_independent():
    dom = DomainSpec(((0, 1),) * 2)
    out = integrate_many(lambda x: np.stack([x[:, 0], x[:, 1] ** 2], axis=1), dom, QuadratureSpec())
    assert [iv.value for iv in out] == pytest.approx([0.5, 1 / 3])


def test_integrate_rejects_vector_and_bad_values():
    dom = DomainSpec(((0, 1),))
    with pytest.raises(IntegrationError):
        integrate(lambda x: np.stack([x[:, 0], x[:, 0]], axis=1), dom, QuadratureSpec())
    with pytest.raises(IntegrationError):
        integrate(lambda x: np.full(len(x), np.nan), dom, QuadratureSpec())


@pytest.mark.parametrize(
    "kwargs",
    [dict(box=((1, 0),)), dict(box=((0, np.inf),)), dict(box=((-1, 1),), excision=2.0), dict(box=((-1, 1),), excision=-1)],
)
def test_domain_validation(kwargs):
    with pytest.raises(ConfigurationError):
        DomainSpec(**kwargs)


def test_quadrature_spec_validation():
    for kw in (dict(order=1), dict(base_cells_per_axis=0), dict(rel_tol=0), dict(workers=0)):
        with pytest.raises(ConfigurationError):
            QuadratureSpec(**kw)
    q = QuadratureSpec(order=6)
    assert QuadratureSpec.from_dict(q.to_dict()) == q


def test_workers_do_not_change_results():
    dom = DomainSpec(((-1, 1),) * 3)
    f = smooth_field(3, 4)
    q = QuadratureSpec(order=5, chunk_points=500, rel_tol=1e-10)
    a, b = integrate(f, dom, q), integrate(f, dom, q.with_workers(3))
    assert (a.value, a.err_estimate, a.cells_used) == (b.value, b.err_estimate, b.cells_used)


# -- weighted norms -------------------------------------------------------------

def radial_bump_1d(r):
    """The radial profile of bump(0.2, 1.0) with ramp 1, as a plain function."""
    return np.asarray(bump(BumpSpec(0.2, 1.0, 1, ramp=1.0))(np.atleast_2d(r).T))


def test_weighted_norm_radial_oracle():
    G = abelian(2)
    f = bump(BumpSpec(0.2, 1.0, 2, ramp=1.0))
    dom = DomainSpec(((-1, 1),) * 2)
    q = QuadratureSpec(order=7, max_refinement_depth=5, rel_tol=1e-9)
    got = weighted_lp_integral(G, f, 2.0, 2.0, dom, q)
    ref, _ = spi.quad(lambda r: float(radial_bump_1d(np.array([r]))[0]) ** 2 / r, 0.2, 1.0, epsabs=1e-13, limit=200)
    assert got.value == pytest.approx(2 * math.pi * ref, rel=1e-7)


def test_weighted_norm_unweighted_and_homogeneous():
    G = heisenberg(1)
    f = bump(BumpSpec(0.2, 1.0, 2, ((-0.5, 0.5),)))
    dom = DomainSpec(((-1, 1), (-1, 1), (-0.5, 0.5)), 0.0, 2)
    q = QuadratureSpec(order=6, max_refinement_depth=2)
    plain = weighted_lp_norm(G, f, 2.0, 0.0, dom, q)
    ref = math.sqrt(integrate(lambda x: f(x) ** 2, dom, q).value)
    assert plain == pytest.approx(ref, rel=1e-12)
    assert weighted_lp_norm(G, 2.0 * f, 3.0, 1.0, dom, q) == pytest.approx(2 * weighted_lp_norm(G, f, 3.0, 1.0, dom, q), rel=1e-12)


def test_weighted_norm_guards_singular_weight():
    G = abelian(2)
    one = ScalarField(lambda x, o: jets.constant(1.0, x.shape[0], 2, o), 2)
    with pytest.raises(ConfigurationError):
        weighted_lp_integral(G, one, 2.0, 1.0, DomainSpec(((-1, 1),) * 2), QuadratureSpec())
    with pytest.raises(ConfigurationError):
        weighted_lp_integral(G, one, 0.5, 0.0, DomainSpec(((-1, 1),) * 2), QuadratureSpec())

