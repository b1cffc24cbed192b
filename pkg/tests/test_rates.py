import numpy as np
import pytest

from kawasaki_lab.ensemble import StateSpace, bernoulli, chi, expect, rate_values
from kawasaki_lab.lattice import make_cube
from kawasaki_lab.rates import (cooperative, custom, disordered, from_config, sample_disorder,
                                speed_change, ssep, validate)
from kawasaki_lab.variational import PrimalProblem


def test_ssep_constant_and_valid():
    model = ssep()
    sites, rates = model.table(((0,), 0), 1)
    assert sites == [] and np.all(rates == 1)
    rep = validate(model)
    assert rep.passed and rep.lam == 1
    assert rep.summary() == "pass, λ=1"


def test_speed_change_formula():
    model = speed_change(0.5)
    sites, rates = model.table(((0,), 0), 1)
    assert sites == [(-1,), (2,)]
    assert rates[0b11] == 2.0 and rates[0] == 1.0 and rates[0b01] == 1.5
    assert model.lam == 2.0


def test_speed_change_zero_is_ssep():
    sites, rates = speed_change(0.0).table(((0,), 0), 1)
    assert np.all(rates == 1.0)


def test_negative_parameter_rejected():
    with pytest.raises(ValueError):
        speed_change(-0.1)
    with pytest.raises(ValueError):
        sample_disorder(-1.0, 0, [((0,), 0)])


@pytest.mark.parametrize("model", [ssep(), speed_change(0.5), cooperative(1.0)])
@pytest.mark.parametrize("d", [1, 2])
def test_shipped_models_validate(model, d):
    rep = validate(model, d)
    assert rep.passed, rep.witness
    assert 1.0 <= rep.min_rate and rep.lam <= model.lam + 1e-12


def test_speed_change_lambda_from_scan():
    assert validate(speed_change(0.5)).lam == pytest.approx(2.0)


def test_validate_reports_endpoint_dependence():
    def rule(i, s, d, bond):
        return [(0,)], lambda occ: 1.0 + occ[:, 0]
    rep = validate(custom("reads_endpoint", 1, 2.0, rule))
    assert not rep.passed
    assert not rep.checks["endpoint_independence"]
    assert rep.witness is not None


def test_validate_reports_bound_violation():
    def rule(i, s, d, bond):
        return [tuple(-s * v for v in (1,)), tuple(2 * s * v for v in (1,))], \
            lambda occ: 0.5 + occ[:, 0] * 0
    rep = validate(custom("too_slow", 2, 2.0, rule))
    assert not rep.checks["bounds"]
    assert rep.witness["check"] == "bounds"


@pytest.mark.parametrize("rho", [0.1, 0.5, 0.8])
def test_speed_change_mean_conductance(rho):
    a = 0.5
    model = speed_change(a)
    sp = StateSpace([(x,) for x in range(-1, 3)])
    b = ((0,), 0)
    c = rate_values(model, b, sp)
    val = expect(c * (sp.occ((1,)) - sp.occ((0,))) ** 2, bernoulli(sp, rho))
    assert val == pytest.approx(2 * chi(rho) * (1 + 2 * a * rho), rel=1e-13)


def test_disorder_determinism_and_zero():
    bonds = [((x,), 0) for x in range(-4, 5)]
    m1 = sample_disorder(0.5, 7, bonds)
    m2 = sample_disorder(0.5, 7, bonds)
    m3 = sample_disorder(0.5, 8, bonds)
    assert m1.field_ == m2.field_
    assert m1.field_ != m3.field_
    assert all(0 <= v <= 0.5 for v in m1.field_.values())
    assert sample_disorder(0.0, 3, bonds).kind == "ssep"
    rep = validate(m1)
    assert rep.passed and rep.lam <= 2.0


def test_disorder_varies_but_stays_in_bounds():
    bonds = [((x,), 0) for x in range(-5, 6)]
    rho = 0.5
    vals = []
    for seed in (0, 1):
        model = sample_disorder(0.5, seed, bonds)
        vals.append(2 * chi(rho) * PrimalProblem(make_cube(3, 1), model).matrix(rho)[0, 0])
    assert vals[0] != pytest.approx(vals[1])
    for v in vals:
        assert 2 * chi(rho) - 1e-12 <= v <= 2 * chi(rho) * 2.0 + 1e-12


def test_disorder_missing_bond():
    model = disordered({((0,), 0): 0.3})
    with pytest.raises(KeyError):
        model.window(((5,), 0), 1)


def test_from_config():
    assert from_config("ssep").kind == "ssep"
    assert from_config("speed_change", a=0.25).params == (0.25,)
    with pytest.raises(ValueError):
        from_config("glauber")
    with pytest.raises(ValueError):
        from_config("disordered", a_max=0.5)
