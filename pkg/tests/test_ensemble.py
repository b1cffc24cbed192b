import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kawasaki_lab.ensemble import (ConfigFunction, Configuration, StateSpace, SupportError,
                                   affine, bernoulli, canonical, chi, constant, covariance,
                                   dirichlet_form, exchange, expect, generator, glauber,
                                   glauber_exchange, gradient_field, kawasaki, occupation,
                                   spectral_glauber, spectral_gradient, translate, variance)
from kawasaki_lab.lattice import make_cube
from kawasaki_lab.rates import speed_change, ssep

densities = st.floats(0.05, 0.95)


def line(n, start=0):
    return StateSpace([(x,) for x in range(start, start + n)])


def test_exchange_examples():
    eta = Configuration(((0,), (1,)), (1, 0))
    assert exchange(eta, ((0,), 0)).values == (0, 1)
    full = Configuration(((0,), (1,)), (1, 1))
    assert exchange(full, ((0,), 0)).values == (1, 1)
    with pytest.raises(SupportError):
        exchange(eta, ((1,), 0))


def test_exchange_involution_exhaustive():
    sp = line(4)
    for idx in range(sp.size):
        eta = sp.decode(idx)
        for x in range(3):
            b = ((x,), 0)
            assert exchange(exchange(eta, b), b) == eta


def test_kawasaki_examples():
    sp = line(2)
    f = occupation(sp, (0,))
    g = kawasaki(f, ((0,), 0))
    assert np.array_equal(g.values, sp.occ((1,)) - sp.occ((0,)))
    assert np.allclose(kawasaki(constant(sp, 3.0), ((0,), 0)).values, 0)


def test_kawasaki_on_affine():
    sp = StateSpace(make_cube(3, 2).sites)
    p = np.array([0.7, -1.3])
    ell = affine(sp, p)
    for x in [(-1, -1), (0, 0), (0, -1)]:
        for i in range(2):
            y = tuple(x[k] + (k == i) for k in range(2))
            got = kawasaki(ell, (x, i)).values
            assert np.allclose(got, p[i] * (sp.occ(x) - sp.occ(y)))


@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16))
def test_kawasaki_twice(vals):
    f = ConfigFunction(line(4), np.array(vals))
    b = ((1,), 0)
    assert np.allclose(kawasaki(kawasaki(f, b), b).values, -2 * kawasaki(f, b).values)


def test_glauber_and_translate():
    sp = line(2)
    f = occupation(sp, (0,))
    assert np.array_equal(glauber(f, (0,)).values, 1 - 2 * sp.occ((0,)))
    g = translate(ConfigFunction(StateSpace([(0,)]), np.array([0.0, 1.0])), (1,), target=sp)
    assert np.array_equal(g.values, sp.occ((1,)).astype(float))


def test_translation_commutes_with_exchange(rng):
    small = line(3)
    big = line(4)
    f = ConfigFunction(small, rng.normal(size=small.size))
    for x in range(2):
        lhs = kawasaki(translate(f, (1,), target=big), ((x + 1,), 0))
        rhs = translate(kawasaki(f, ((x,), 0)), (1,), target=big)
        assert np.allclose(lhs.values, rhs.values)


def test_expectations():
    sp = line(3, -1)
    mu = bernoulli(sp, 0.3)
    assert expect(occupation(sp, (0,)), mu) == pytest.approx(0.3)
    assert variance(occupation(sp, (0,)), mu) == pytest.approx(chi(0.3))
    assert chi(0.5) == 0.25
    can = canonical(sp, make_cube(3, 1), 2)
    assert expect(occupation(sp, (0,)), can) == pytest.approx(2 / 3)
    with pytest.raises(SupportError):
        canonical(line(4, -1), make_cube(3, 1), 1)


def test_canonical_weights_uniform_on_sector():
    sp = line(4)
    mu = canonical(sp, [(0,), (1,), (2,)], 1, {(3,): 1})
    support = np.flatnonzero(mu.weights)
    assert len(support) == 3
    assert np.allclose(mu.weights[support], 1 / 3)


def test_dirichlet_form_ssep_affine():
    dom = make_cube(3, 1)
    sp = StateSpace(dom.structure.enlarged.sites)
    rho, p = 0.3, 1.7
    ell = affine(sp, [p])
    val = dirichlet_form(ell, ell, dom.structure.enlarged_bonds, ssep(), bernoulli(sp, rho))
    # ⟨(π_b ℓ_p)²⟩ = 2χ p² per bond, and the form carries ½
    assert val == pytest.approx(chi(rho) * len(dom) * p**2)
    assert dirichlet_form(constant(sp), ell, dom.structure.enlarged_bonds, ssep(),
                          bernoulli(sp, rho)) == 0


def test_dirichlet_equals_generator_pairing(rng):
    model = speed_change(0.5)
    sites = [(x,) for x in range(-3, 5)]
    sp = StateSpace(sites)
    bonds = [((x,), 0) for x in range(-1, 2)]
    mu = bernoulli(sp, 0.37)
    u = ConfigFunction(sp, rng.normal(size=sp.size))
    v = ConfigFunction(sp, rng.normal(size=sp.size))
    lhs = dirichlet_form(u, v, bonds, model, mu)
    rhs = -expect(v * generator(u, bonds, model), mu)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs == pytest.approx(dirichlet_form(v, u, bonds, model, mu), rel=1e-12)


def test_gradient_field_of_affine():
    sp = line(3)
    ell = affine(sp, [1.0])
    g = gradient_field(ell, (0,), 0)
    # (π ℓ_e)(π ℓ_e) is a square, so the sign is +
    assert np.allclose(g.values, (sp.occ((1,)) - sp.occ((0,))) ** 2)
    assert np.allclose(gradient_field(constant(sp), (0,), 0).values, 0)


@given(st.integers(0, 2**31 - 1), densities)
def test_stokes_identity(seed, rho):
    rng = np.random.default_rng(seed)
    dom = make_cube(5, 1)
    inner = StateSpace(dom.structure.interior.sites)
    sp = StateSpace(dom.structure.enlarged.sites)
    u = ConfigFunction(inner, rng.normal(size=inner.size)).lift(sp)
    mu = bernoulli(sp, rho)
    total = sum(expect(gradient_field(u, x, 0), mu) for x in dom.sites)
    assert abs(total) < 1e-12


@given(st.integers(0, 2**31 - 1), densities)
def test_detailed_balance_exchange_symmetry(seed, rho):
    rng = np.random.default_rng(seed)
    model = speed_change(0.5)
    sp = StateSpace([(x,) for x in range(-1, 3)])
    b = ((0,), 0)
    from kawasaki_lab.ensemble import rate_values
    c = rate_values(model, b, sp)
    u = rng.normal(size=sp.size)
    v = rng.normal(size=sp.size)
    perm = sp.exchange_index((0,), (1,))
    integrand = c * (u[perm] - u) * (v[perm] - v)
    w = bernoulli(sp, rho).weights
    assert np.dot(w, integrand) == pytest.approx(np.dot(w, integrand[perm]), rel=1e-12, abs=1e-14)


@given(st.integers(0, 2**31 - 1), densities)
def test_spectral_inequalities(seed, rho):
    rng = np.random.default_rng(seed)
    f = ConfigFunction(line(4), rng.normal(size=16))
    var, rhs = spectral_glauber(f, rho)
    assert var <= rhs + 1e-12
    lhs, rhs = glauber_exchange(f, (0,), (3,), rho)
    assert lhs <= rhs + 1e-12
    dom = make_cube(5, 1)
    g = ConfigFunction(StateSpace(dom.structure.interior.sites), rng.normal(size=8))
    var, rhs = spectral_gradient(g.lift(StateSpace(dom.sites)), dom, rho)
    assert var <= rhs + 1e-12


def test_covariance_bilinear(rng):
    sp = line(3)
    mu = bernoulli(sp, 0.4)
    f = ConfigFunction(sp, rng.normal(size=8))
    g = ConfigFunction(sp, rng.normal(size=8))
    assert covariance(f, g, mu) == pytest.approx(covariance(g, f, mu))
    assert covariance(f + g, f + g, mu) == pytest.approx(
        variance(f, mu) + 2 * covariance(f, g, mu) + variance(g, mu))
