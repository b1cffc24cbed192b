import numpy as np
import pytest
from hypothesis import given, strategies as st

from kawasaki_lab.ensemble import ConfigFunction, StateSpace, chi
from kawasaki_lab.lattice import CapExceeded, make_triadic
from kawasaki_lab.lifting import (FreeConfiguration, FreeSpace, PoissonMeasure, alpha_of,
                                  bounded_table_function, canonical_gradient_coupling,
                                  canonical_mecke, change_of_variable, closed_form_case, flip,
                                  gradient_coupling, lift, lifting_gap, mecke_check, mecke_kawasaki,
                                  occupied_count_law, project, run_lifting_suite,
                                  truncation_level, weighted_poincare_probe)

SITES3 = [(0,), (1,), (2,)]


def eta(x, sites=((0,),)):
    sp = StateSpace(list(sites))
    return ConfigFunction(sp, sp.occ(x).astype(float))


def test_project_example():
    assert project([[3, 0, 1]]).tolist() == [[1, 0, 1]]
    fc = FreeConfiguration(tuple(SITES3), (3, 0, 1), 5)
    assert fc.project().values == (1, 0, 1)
    with pytest.raises(ValueError):
        FreeConfiguration(tuple(SITES3), (6, 0, 1), 5)


def test_adding_a_particle_commutes_with_projection():
    fs = FreeSpace(SITES3, 0.8, K=4)
    for x in SITES3:
        c = fs.column(x)
        expected = project(fs.counts).copy()
        expected[:, c] = 1
        assert np.array_equal(project(fs.shifted(x)), expected)


def test_poisson_coupling():
    a = alpha_of(1 - np.exp(-1))
    assert a == pytest.approx(1.0)
    m = PoissonMeasure(a, truncation_level(a))
    assert 1 - m.weights[0] == pytest.approx(1 - np.exp(-1), abs=1e-14)
    assert m.weights.sum() == pytest.approx(1.0)
    assert m.tail < 1e-15
    with pytest.raises(ValueError):
        alpha_of(1.0)


@pytest.mark.parametrize("rho", np.arange(1, 16) / 16)
def test_lifting_expectation_identity(rho):
    rng = np.random.default_rng(int(rho * 1000))
    u = ConfigFunction(StateSpace(SITES3), rng.normal(size=8))
    lhs, rhs, budget = lifting_gap(u, rho)
    assert abs(lhs - rhs) <= budget + 1e-14


def test_lifting_gap_k20():
    u = ConfigFunction(StateSpace(SITES3), np.random.default_rng(7).normal(size=8))
    lhs, rhs, budget = lifting_gap(u, 0.6, K=20)
    assert abs(lhs - rhs) < 1e-12
    assert budget < 1e-11


def test_lifted_function_reads_projection():
    u = eta((1,), SITES3)
    F = lift(u, SITES3)
    assert F(np.array([[0, 2, 0], [5, 0, 7]])).tolist() == [1.0, 0.0]


def test_mecke_trivial_cases():
    a = 0.9
    one = mecke_check(lambda c: np.ones(len(c)), (0,), a, [(0,)])
    assert one.lhs == pytest.approx(a) and one.rhs == pytest.approx(a)
    second = mecke_check(lambda c: np.asarray(c)[:, 0].astype(float), (0,), a, [(0,)], sup=40)
    assert second.lhs == pytest.approx(a * (a + 1), abs=1e-12)
    assert second.rhs == pytest.approx(a * (a + 1), abs=1e-12)


def test_mecke_random_two_sites():
    F = bounded_table_function(np.random.default_rng(2), 2)
    chk = mecke_check(F, (1,), 0.7, [(0,), (1,)], K=25)
    assert chk.gap < 1e-12 and chk.holds


@pytest.mark.parametrize("alpha", [0.7, 2.0, 3.0])
def test_mecke_gap_decays_with_K(alpha):
    F = bounded_table_function(np.random.default_rng(5), 2)
    checks = [mecke_check(F, (0,), alpha, [(0,), (1,)], K=K) for K in (10, 20, 30)]
    assert all(c.holds for c in checks)
    budgets = [c.budget for c in checks]
    assert budgets[0] > budgets[1] > budgets[2]
    assert checks[2].gap <= 1e-15 + checks[0].gap


@pytest.mark.parametrize("rho", [0.5, 0.9, 0.95])
def test_gradient_coupling_gap_decays_with_K(rho):
    u = ConfigFunction(StateSpace(SITES3), np.random.default_rng(6).normal(size=8))
    checks = [gradient_coupling(u, [(0,), (1,)], 0, rho, K=K) for K in (10, 20, 30)]
    assert all(c.holds for c in checks)
    assert checks[0].budget > checks[1].budget > checks[2].budget
    assert checks[2].gap < 1e-15 + checks[0].gap


@given(st.floats(0.0, 1.0))
def test_mecke_kawasaki_occupation(rho):
    chk = mecke_kawasaki(eta((0,)), (0,), 0, rho)
    assert chk.lhs == pytest.approx(-2 * chi(rho), abs=1e-12)
    assert chk.holds


def test_mecke_kawasaki_constant():
    u = ConfigFunction(StateSpace(SITES3), np.full(8, 3.0))
    chk = mecke_kawasaki(u, (1,), 0, 0.4)
    assert chk.lhs == 0 and chk.rhs == 0


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_mecke_kawasaki_random(seed, rho):
    u = ConfigFunction(StateSpace(SITES3), np.random.default_rng(seed).normal(size=8))
    assert mecke_kawasaki(u, (0,), 0, rho).holds


def test_canonical_mecke_lambda3_one_particle():
    dom = make_triadic(1, 1)
    plus = dom.structure.enlarged.sites
    u = ConfigFunction(StateSpace(plus), np.random.default_rng(3).normal(size=2 ** len(plus)))
    for x in dom.sites:
        assert canonical_mecke(u, dom, x, 0, 1).holds
    with pytest.raises(ValueError):
        canonical_mecke(u, dom, plus[-1], 0, 1)


def test_gradient_coupling_closed_form():
    chk = closed_form_case()
    assert chk.lhs == pytest.approx(-np.exp(-1), abs=1e-12)
    assert chk.rhs == pytest.approx(-np.exp(-1), abs=1e-12)


def test_gradient_coupling_constant():
    u = ConfigFunction(StateSpace(SITES3), np.ones(8))
    chk = gradient_coupling(u, [(0,), (1,)], 0, 0.3)
    assert chk.lhs == pytest.approx(0, abs=1e-15) and chk.rhs == 0


def test_occupied_count_law_is_distribution():
    P = occupied_count_law(4, 3)
    assert P.sum() == pytest.approx(1.0)
    assert P[0] == 0 and P[4] > 0
    P = occupied_count_law(5, 2)
    assert np.all(P[4:] == 0) and P[3] > 0


@pytest.mark.parametrize("M", [1, 2, 4])
def test_canonical_gradient_coupling(M):
    dom = make_triadic(1, 1)
    plus = dom.structure.enlarged.sites
    u = ConfigFunction(StateSpace(plus), np.random.default_rng(M).normal(size=2 ** len(plus)))
    assert canonical_gradient_coupling(u, dom, 0, M).holds


@pytest.mark.parametrize("rho", [0.2, 0.5, 0.8])
def test_change_of_variable(rho):
    free, excl, budget = change_of_variable(rho, SITES3, (0,), (2,))
    for key in set(free) | set(excl):
        assert abs(free.get(key, 0) - excl.get(key, 0)) <= budget + 1e-14


def test_free_space_cap():
    with pytest.raises(CapExceeded):
        FreeSpace([(x,) for x in range(7)], 0.5, K=2)


def test_poincare_zero():
    z = ConfigFunction(StateSpace([(0,)]), np.zeros(2))
    assert weighted_poincare_probe(z, 1, 0.5).ratio == 0.0


def test_poincare_finite_ratio():
    p = weighted_poincare_probe(eta((0,)), 1, 0.5)
    assert 0 < p.ratio < np.inf
    assert len(p.terms) == 2
    assert p.ratio < 5


# at ρ = ½ both sides count particles, so the symmetry is only claimed off ½
@pytest.mark.parametrize("rho", [0.2, 0.3, 0.7])
def test_poincare_flip_invariance(rho):
    rng = np.random.default_rng(11)
    u = ConfigFunction(StateSpace(SITES3), rng.normal(size=8))
    a = weighted_poincare_probe(u, 1, rho)
    b = weighted_poincare_probe(flip(u), 1, 1 - rho)
    assert a.lhs == pytest.approx(b.lhs, rel=1e-12)
    assert a.rhs == pytest.approx(b.rhs, rel=1e-12)


def test_lifting_suite_all_within_budget():
    res = run_lifting_suite(n_cases=10, seed=4)
    for name, checks in res.items():
        assert len(checks) == 10
        assert all(c.holds for c in checks), name
        assert max(c.budget for c in checks) < 1e-10
