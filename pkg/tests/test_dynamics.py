import io
import json

import numpy as np
import pytest
from scipy.stats import chisquare

from kawasaki_lab.dynamics import (SineProfile, TorusState, advance, default_profile, empirical,
                                   encode, exact_law, fourier_modes, generator_matrix, gillespie,
                                   replica_modes, run_trajectory, sample_initial, torus_system)
from kawasaki_lab.rates import cooperative, speed_change, ssep

COOP = cooperative(1.0)


def test_sample_initial_binomial_band():
    means = np.array([sample_initial(0.5, 64, seed=s).occ.mean() for s in range(100)])
    sigma = np.sqrt(0.25 / 64)
    assert np.all(np.abs(means - 0.5) < 4 * sigma)
    assert abs(means.mean() - 0.5) < 3 * sigma / 10


def test_sample_initial_refusals_and_default():
    with pytest.raises(ValueError):
        sample_initial(1.0, 16, seed=0)
    with pytest.raises(ValueError):
        sample_initial(lambda v: np.zeros(len(v)), 16, seed=0)
    with pytest.raises(ValueError):
        SineProfile(0.5)
    s = sample_initial(default_profile, 64, seed=1)
    assert s.occ.shape == (64,) and s.t == 0.0


def test_sample_initial_deterministic():
    a = sample_initial(default_profile, 32, seed=9).occ
    b = sample_initial(default_profile, 32, seed=9).occ
    assert np.array_equal(a, b)


def test_zero_step_and_negative_step():
    s = sample_initial(0.5, 16, seed=2)
    before = s.occ.copy()
    advance(s, 0.0, COOP)
    assert np.array_equal(s.occ, before) and s.t == 0.0
    with pytest.raises(ValueError):
        advance(s, -1.0, COOP)


def test_full_state_never_moves():
    s = TorusState(8, 1, np.ones(8, dtype=np.uint8), 0.0, np.random.default_rng(0))
    advance(s, 5.0, speed_change(0.5))
    assert s.jumps == 0 and s.count == 8 and s.t == 5.0


@pytest.mark.parametrize("model", [ssep(), speed_change(0.5), COOP])
def test_mass_conserved_and_clock_advances(model):
    s = sample_initial(default_profile, 32, seed=4)
    n0 = s.count
    times = []
    for _ in range(5):
        advance(s, 0.01, model)
        assert s.count == n0
        times.append(s.t)
    assert np.all(np.diff(times) > 0)
    assert s.jumps > 0


def test_mass_conserved_d2():
    s = sample_initial(0.4, 8, seed=5, d=2)
    n0 = s.count
    advance(s, 0.05, speed_change(0.5))
    assert s.count == n0


def test_generator_rows_sum_to_zero_and_conserve_sector():
    Q = generator_matrix(5, COOP)
    assert np.allclose(Q.sum(axis=1), 0)
    pop = np.array([bin(s).count("1") for s in range(32)])
    rows, cols = np.nonzero(Q)
    assert np.all(pop[rows] == pop[cols])
    assert np.allclose(Q, Q.T)


def _tv(counts, p):
    return 0.5 * np.abs(counts / counts.sum() - p).sum()


def test_kmc_matches_exact_law_n4():
    eta0 = np.array([1, 1, 0, 0], dtype=np.uint8)
    T = 0.02
    p = exact_law(4, ssep(), eta0, T)
    rng = np.random.default_rng(0)
    system = torus_system(4, 1, ssep())
    counts = np.zeros(16)
    for _ in range(20000):
        s = TorusState(4, 1, eta0.copy(), 0.0, rng)
        advance(s, T, ssep(), system)
        counts[encode(s.occ)] += 1
    assert _tv(counts, p) < 0.02


@pytest.mark.parametrize("step", [advance, gillespie])
def test_kmc_and_direct_method_share_the_law(step):
    eta0 = np.array([1, 0, 1, 1, 0, 0], dtype=np.uint8)
    T = 0.01
    p = exact_law(6, COOP, eta0, T)
    rng = np.random.default_rng(1)
    system = torus_system(6, 1, COOP)
    counts = np.zeros(64)
    for _ in range(3000):
        s = TorusState(6, 1, eta0.copy(), 0.0, rng)
        step(s, T, COOP, system)
        counts[encode(s.occ)] += 1
    mask = p > 1e-4
    assert counts[~mask].sum() <= 3
    stat = chisquare(counts[mask], p[mask] / p[mask].sum() * counts[mask].sum())
    assert stat.pvalue > 0.001


def test_stationary_law_uniform_on_sector():
    eta0 = np.array([1, 1, 1, 0, 0, 0], dtype=np.uint8)
    rng = np.random.default_rng(2)
    system = torus_system(6, 1, COOP)
    sector = [s for s in range(64) if bin(s).count("1") == 3]
    counts = dict.fromkeys(sector, 0)
    for _ in range(4000):
        s = TorusState(6, 1, eta0.copy(), 0.0, rng)
        advance(s, 0.5, COOP, system)
        counts[encode(s.occ)] += 1
    assert sum(counts.values()) == 4000
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_empirical_measure_mass():
    s = sample_initial(0.3, 20, seed=3)
    mu = empirical(s)
    assert mu.mass == pytest.approx(s.count / 20)
    assert mu.integrate(lambda v: np.ones(len(v))) == pytest.approx(mu.mass)


def test_modes_empty_and_full():
    assert np.all(fourier_modes(np.zeros(16), 4) == 0)
    full = fourier_modes(np.ones(16), 4)
    assert full[4] == pytest.approx(1.0)
    assert np.allclose(np.delete(full, 4), 0, atol=1e-14)


def test_modes_comb():
    comb = (np.arange(8) % 2 == 0).astype(np.uint8)
    m = fourier_modes(comb, 4)
    expected = [0.5 if k % 4 == 0 else 0.0 for k in range(-4, 5)]
    assert np.allclose(m, expected, atol=1e-14)


def test_modes_agree_with_empirical_measure():
    s = sample_initial(default_profile, 16, seed=8)
    m = fourier_modes(s, 2)
    mu = empirical(s)
    for k in range(-2, 3):
        z = mu.integrate(lambda v: np.exp(-2j * np.pi * k * v[:, 0]))
        assert m[k + 2] == pytest.approx(z, abs=1e-13)


def test_modes_d2_shape():
    s = sample_initial(0.5, 8, seed=1, d=2)
    m = fourier_modes(s, 2)
    assert m.shape == (5, 5)
    assert m[2, 2] == pytest.approx(s.count / 64)


def test_n_max_too_large():
    with pytest.raises(ValueError):
        fourier_modes(np.zeros(8), 5)


def test_run_trajectory_streams_jsonl():
    s = sample_initial(default_profile, 16, seed=3)
    buf = io.StringIO()
    recs = run_trajectory(s, COOP, [0.0, 0.01, 0.02], n_max=1, stream=buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert lines == json.loads(json.dumps(recs))
    assert [r["t"] for r in lines] == [0.0, 0.01, 0.02]
    assert len({r["particle_count"] for r in lines}) == 1
    assert len(lines[0]["modes"]) == 3
    with pytest.raises(ValueError):
        run_trajectory(s, COOP, [0.01])


def test_ssep_mean_mode_decays_at_discrete_rate():
    N, t = 16, 0.02
    modes = replica_modes(default_profile, N, ssep(), [0.0, t], 1, replicas=400, seed=3)
    z = modes[:, :, 2]
    rate = N**2 * 2 * (1 - np.cos(2 * np.pi / N))
    # the mean mode of the sine profile is exactly -i/8 at t = 0
    target = -0.125j * np.exp(-rate * t)
    mean = z[:, 1].mean()
    se = z[:, 1].imag.std(ddof=1) / np.sqrt(len(z))
    assert abs(mean.imag - target.imag) < 4 * se
    assert abs(z[:, 0].mean().imag + 0.125) < 4 * z[:, 0].imag.std(ddof=1) / np.sqrt(len(z))


def test_replicas_reproducible():
    a = replica_modes(default_profile, 16, COOP, [0.01], 1, replicas=3, seed=5)
    b = replica_modes(default_profile, 16, COOP, [0.01], 1, replicas=3, seed=5)
    assert np.array_equal(a, b)
