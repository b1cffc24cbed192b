import numpy as np
import pytest
from hypothesis import given, strategies as st

from kawasaki_lab.variational.solvers import (EdgeSystem, SolverError, conjugate_gradient,
                                              dense_minimize)


def random_system(rng, n, m):
    src = rng.integers(0, n, size=m)
    dst = (src + rng.integers(1, n, size=m)) % n
    return EdgeSystem(n, src, dst, rng.uniform(0.1, 2.0, size=m))


@given(st.integers(0, 2**31 - 1), st.integers(3, 30))
def test_minimize_matches_dense_oracle(seed, n):
    rng = np.random.default_rng(seed)
    sysm = random_system(rng, n, 3 * n)
    s = rng.normal(size=3 * n)
    w = sysm.minimize(s).x
    w_ref = dense_minimize(sysm, s)
    assert sysm.energy(w, s) == pytest.approx(sysm.energy(w_ref, s), rel=1e-9, abs=1e-12)
    assert np.allclose(sysm.project(w - w_ref), 0, atol=1e-7)


def test_cg_on_spd_matrix(rng):
    A = rng.normal(size=(20, 20))
    A = A @ A.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    res = conjugate_gradient(lambda v: A @ v, b, tol=1e-12)
    assert res.converged
    assert np.allclose(A @ res.x, b, atol=1e-9)


def test_cg_zero_rhs():
    res = conjugate_gradient(lambda v: v, np.zeros(5))
    assert res.iterations == 0 and np.all(res.x == 0)


def test_disconnected_components_projected(rng):
    # two components: {0,1,2} and {3,4}
    sysm = EdgeSystem(5, [0, 1, 3], [1, 2, 4], [1.0, 2.0, 0.5])
    s = np.array([1.0, -1.0, 2.0])
    w = sysm.minimize(s).x
    assert sysm.components[0] == 2
    # perfect fit: every edge residual vanishes
    assert sysm.energy(w, s) == pytest.approx(0, abs=1e-18)


def test_iteration_cap_raises(rng):
    sysm = random_system(rng, 40, 120)
    with pytest.raises(SolverError):
        sysm.solve(sysm.load(rng.normal(size=120)), tol=1e-14, maxiter=1)
