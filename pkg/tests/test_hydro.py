import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kawasaki_lab.dynamics import SineProfile, default_profile
from kawasaki_lab.hydro import (DiffusivityTable, cell_modes, constant_table,
                                convergence_experiment, fit_mode_decay, h_minus_alpha,
                                heat_solution, initial_cells, mode_weights, solve_pde,
                                table_from_model, tail_weight)
from kawasaki_lab.rates import cooperative, speed_change, ssep


def heat_error(G, T=0.02):
    sol = solve_pde(default_profile, constant_table(1.0), T, G, [T])
    exact = initial_cells(lambda v: heat_solution(0.25, T, v[:, 0]), G)
    return np.max(np.abs(sol.at(T).values - exact))


def test_heat_equation_matches_eigenfunction():
    assert heat_error(256) < 1e-4


def test_heat_equation_second_order():
    e = [heat_error(G) for G in (32, 64, 128)]
    for a, b in zip(e, e[1:]):
        assert 3.5 < a / b < 4.5


def test_constant_profile_stays_constant():
    sol = solve_pde(lambda v: np.full(len(v), 0.3), table_from_model(speed_change(0.5), L=3), 0.05,
                    64, [0.01, 0.05])
    for f in sol.fields:
        assert np.allclose(f.values, 0.3, atol=1e-15)


def test_mass_conserved_speed_change_table():
    table = table_from_model(speed_change(0.5), L=5)
    sol = solve_pde(SineProfile(0.4), table, 0.1, 128, [0.05, 0.1])
    m0 = initial_cells(SineProfile(0.4), 128).mean()
    for f in sol.fields:
        assert abs(f.mass - m0) < 1e-12
    assert sol.mass_drift < 1e-12 * sol.steps
    assert sol.table_ref_L == 5


def test_pde_preconditions():
    with pytest.raises(ValueError):
        solve_pde(default_profile, constant_table(), 0.01, G=8)
    with pytest.raises(ValueError):
        solve_pde(lambda v: np.ones(len(v)), constant_table(), 0.01, G=32)


def test_checkpoint_landing():
    sol = solve_pde(default_profile, constant_table(), 0.01, 64, [0.003, 0.01])
    assert [f.t for f in sol.fields] == [0.003, 0.01]
    with pytest.raises(KeyError):
        sol.at(0.005)


@pytest.mark.parametrize("a", [0.25, 0.5])
def test_speed_change_table_bounds(a):
    t = table_from_model(speed_change(a), L=5)
    assert np.all(t.values >= 1 - 1e-9)
    assert np.all(t.values <= 1 + 2 * a * t.rho + 1e-9)
    assert t.reference_L == 5


def test_table_flat_extension_and_monotone_interpolant():
    t = DiffusivityTable([0.25, 0.5, 0.75], [1.0, 1.5, 2.0])
    assert t(0.0) == pytest.approx(1.0) and t(1.0) == pytest.approx(2.0)
    xs = np.linspace(0.25, 0.75, 51)
    assert np.all(np.diff(t(xs)) >= -1e-15)
    assert t.min <= t(0.4) <= t.max
    assert t.integral(1.0) == pytest.approx(1.5, abs=1e-3)
    with pytest.raises(ValueError):
        DiffusivityTable([0.5, 0.25], [1.0, 1.0])


def test_cooperative_table_between_bounds():
    t = table_from_model(cooperative(1.0), L=5)
    assert np.all((t.values >= 1 - 1e-9) & (t.values <= 2 + 1e-9))


def test_h_norm_examples():
    z = np.zeros(7, dtype=complex)
    f = np.random.default_rng(0).normal(size=7) + 0j
    assert h_minus_alpha(f, f).squared == 0
    unit = z.copy()
    unit[3 + 2] = 1
    assert h_minus_alpha(unit, z).squared == pytest.approx(1 / (16 * np.pi**2 + 1))
    sine = cell_modes(initial_cells(lambda v: 0.25 * np.sin(2 * np.pi * v[:, 0]), 512), 3)
    expected = (1 / 32) / (4 * np.pi**2 + 1)
    assert h_minus_alpha(sine, z).squared == pytest.approx(expected, rel=1e-4)


def test_h_norm_errors_and_remainder():
    z = np.zeros(5)
    with pytest.raises(ValueError):
        h_minus_alpha(z, z, alpha=0.5)
    with pytest.raises(ValueError):
        h_minus_alpha(z, np.zeros(7))
    r2, r4 = h_minus_alpha(z, z).remainder_bound, h_minus_alpha(np.zeros(9), np.zeros(9)).remainder_bound
    assert 0 < r4 < r2


@given(st.integers(1, 20), st.floats(0.55, 3.0))
def test_tail_weight_brackets_truncated_sum(n, alpha):
    m = np.arange(n + 1, 20001, dtype=float)
    omitted = float(np.sum(2 * (4 * np.pi**2 * m**2 + 1) ** (-alpha)))
    assert tail_weight(n, alpha) >= omitted * (1 - 1e-12)


def test_fit_mode_decay_recovers_rate():
    rng = np.random.default_rng(0)
    dt, lam = 0.001, 40.0
    X = np.empty((200, 60), dtype=complex)
    X[:, 0] = 0.1j
    for j in range(1, 60):
        X[:, j] = np.exp(-lam * dt) * X[:, j - 1] + 0.002 * rng.normal(size=200)
    fit = fit_mode_decay(X, dt)
    assert abs(fit.rate - lam) < 4 * fit.stderr


def test_time_zero_noise_scales_as_inverse_n():
    res = convergence_experiment(ssep(), T=0.0, Ns=(16, 32, 64), replicas=200, seed=2)
    assert [r.t for r in res.rows] == [0.0] * 3
    errs = [res.sup_error[N][0] for N in (16, 32, 64)]
    for a, b in zip(errs, errs[1:]):
        assert 1.6 < a / b < 2.5
    assert res.slope == pytest.approx(-1.0, abs=0.2)


def test_single_replica_low_power(tmp_path):
    res = convergence_experiment(ssep(), T=0.01, Ns=(16, 32), replicas=1, seed=0, G=64)
    assert res.low_power
    assert np.isnan(res.rows[0].stderr)
    path = tmp_path / "hydro.csv"
    res.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["N", "t", "mean_sq_error", "stderr", "replicas", "alpha", "table_ref_L"]
    assert len(rows) == 1 + 2 * 4


def test_ns_must_increase():
    with pytest.raises(ValueError):
        convergence_experiment(ssep(), Ns=(64, 32), replicas=2)


def test_error_stable_under_doubling_grid():
    kw = dict(T=0.02, Ns=(32,), replicas=16, seed=1, table=table_from_model(speed_change(0.5), L=5))
    a = convergence_experiment(speed_change(0.5), G=128, **kw)
    b = convergence_experiment(speed_change(0.5), G=256, **kw)
    ea, sa = a.sup_error[32]
    eb, _ = b.sup_error[32]
    assert abs(ea - eb) < 0.05 * sa
