"""Bias factors, density regularity of correctors, and a randomized inequality suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ensemble import (ConfigFunction, StateSpace, glauber_exchange, spectral_glauber,
                        spectral_gradient)
from ..lattice import make_cube
from ..rates import cooperative, speed_change
from .canonical import ensemble_equivalence
from .grand import PrimalProblem, bernoulli_factor


def theta(rho_p: float, rho: float) -> float:
    """One-sided bias factor Θ_{ρ',ρ} = max{ρ'/ρ, (1−ρ')/(1−ρ)}."""
    return max(rho_p / rho, (1 - rho_p) / (1 - rho))


def theta_tilde(rho_p: float, rho: float) -> float:
    """Two-sided factor max{Θ_{ρ',ρ}, Θ_{ρ,ρ'}}."""
    return max(theta(rho_p, rho), theta(rho, rho_p))


@dataclass
class BiasCheck:
    gap: float
    bound: float
    bound_one_sided: float

    @property
    def holds(self) -> bool:
        return self.gap <= self.bound * (1 + 1e-12) + 1e-14

    @property
    def holds_one_sided(self) -> bool:
        return self.gap <= self.bound_one_sided * (1 + 1e-12) + 1e-14


def bias_check(f: ConfigFunction, rho_p: float, rho: float) -> BiasCheck:
    """|⟨f⟩_{ρ'} − ⟨f⟩_ρ| against (Θ̃^{|Λ|} − 1)⟨|f|⟩_ρ.

    The one-sided bound with Θ_{ρ',ρ} is also reported; it can fail, e.g.
    ρ = 0.1, ρ' = 0.05 and f = η_0.
    """
    sp = f.space
    p = bernoulli_factor(rho, sp.counts, sp.n)
    pp = bernoulli_factor(rho_p, sp.counts, sp.n)
    gap = abs(float(np.dot(pp - p, f.values)))
    absf = float(np.dot(p, np.abs(f.values)))
    n = sp.n
    return BiasCheck(gap, (theta_tilde(rho_p, rho) ** n - 1) * absf,
                     (theta(rho_p, rho) ** n - 1) * absf)


# --- regularity in the density -----------------------------------------------


@dataclass
class RegularityReport:
    exponent: int
    theta: float                 # Θ_{ρ',ρ}^k
    theta_tilde: float           # Θ̃_{ρ',ρ}^k
    c_lhs: float                 # max eigenvalue of c̄(ρ') − Θ^k c̄(ρ)
    c_diff: float                # ‖c̄(ρ) − c̄(ρ')‖
    c_diff_bound: float
    mean_lhs: float
    mean_rhs: float
    mean_rhs_two_sided: float
    l2_lhs: float
    l2_rhs: float
    l2_precondition: bool
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _norm(c: np.ndarray) -> float:
    return float(np.linalg.norm(c, 2))


def regularity_suite(rho, rho_p, rho_pp, dom, xi, model, primal: PrimalProblem | None = None,
                     rtol: float = 1e-9) -> RegularityReport:
    """Evaluate the four density-regularity inequalities for the correctors on ``dom``.

    All four are asserted; the mean bound with the two-sided factor
    is reported alongside.
    """
    primal = primal or PrimalProblem(dom, model)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.linalg.norm(xi) > 1 + 1e-12:
        raise ValueError("ξ must lie in the closed unit ball")
    size, L, d = len(dom), dom.side, dom.dim
    k = (L + 2 * model.r) ** d
    cb = {r: 2 * r * (1 - r) * primal.matrix(r) for r in {rho, rho_p, rho_pp}}
    th = theta(rho_p, rho) ** k
    tt = theta_tilde(rho_p, rho) ** k

    c_lhs = float(np.max(np.linalg.eigvalsh(cb[rho_p] - th * cb[rho])))
    c_diff = _norm(cb[rho] - cb[rho_p])
    c_diff_bound = (tt - 1) * max(_norm(cb[rho]), _norm(cb[rho_p]))

    w = {r: primal.corrector_values(r, xi)[0] for r in {rho, rho_p}}
    p_at = {r: primal.node_prob(r) for r in {rho, rho_p, rho_pp}}
    mean = float(np.dot(p_at[rho_p], w[rho]))
    mean_lhs = mean**2 / size
    mean_rhs = L**2 * (th - 1) ** 2 * _norm(cb[rho])
    mean_rhs2 = L**2 * (tt - 1) ** 2 * _norm(cb[rho])

    t1 = theta_tilde(rho, rho_pp) ** k
    t2 = theta_tilde(rho_p, rho_pp) ** k
    pre = bool(t1 <= 2 and t2 <= 2)
    diff = w[rho_p] - w[rho]
    l2_lhs = (float(np.dot(p_at[rho_pp], diff**2)) / (size * L**2)
              + primal.dirichlet(rho_pp, diff) / size)
    l2_rhs = 10 * (max(t1, t2) - 1) * max(_norm(c) for c in cb.values())

    scale = max(_norm(c) for c in cb.values())
    tol = rtol * max(scale, 1.0)
    checks = {
        "conductivity_one_sided": c_lhs <= tol,
        "conductivity_two_sided": c_diff <= c_diff_bound + tol,
        "mean": mean_lhs <= mean_rhs + tol,
        "l2": (not pre) or l2_lhs <= l2_rhs + tol,
    }
    return RegularityReport(k, th, tt, c_lhs, c_diff, c_diff_bound, mean_lhs, mean_rhs, mean_rhs2,
                            l2_lhs, l2_rhs, pre, checks)


# --- randomized suite --------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    cases: int
    checked: int
    violations: int
    worst_margin: float            # max of lhs − rhs over checked cases
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def random_function(rng, sites, nonneg: bool = False) -> ConfigFunction:
    sp = StateSpace(sorted(sites))
    vals = rng.normal(size=sp.size)
    return ConfigFunction(sp, np.abs(vals) if nonneg else vals)


def _density(rng, lo=0.05, hi=0.95):
    return float(rng.uniform(lo, hi))


class _Tally:
    def __init__(self, name):
        self.name, self.cases, self.checked, self.viol, self.worst = name, 0, 0, 0, -np.inf
        self.notes = {}

    def add(self, lhs, rhs, check=True, tol=1e-10):
        self.cases += 1
        if not check:
            return
        self.checked += 1
        margin = lhs - rhs
        self.worst = max(self.worst, margin)
        if margin > tol * max(1.0, abs(rhs)):
            self.viol += 1

    def result(self):
        return SuiteResult(self.name, self.cases, self.checked, self.viol, float(self.worst),
                           self.notes)


def run_inequality_suite(n_cases: int = 200, seed: int = 0, models=None) -> dict:
    """Randomized checks of the functional inequalities; returns name → SuiteResult."""
    rng = np.random.default_rng(seed)
    models = models or [speed_change(0.5), cooperative(1.0)]
    out = {}

    t = _Tally("spectral_glauber")
    for _ in range(n_cases):
        k = int(rng.integers(1, 6))
        f = random_function(rng, [(x,) for x in range(k)])
        lhs, rhs = spectral_glauber(f, _density(rng))
        t.add(lhs, rhs)
    out[t.name] = t.result()

    t = _Tally("spectral_gradient")
    for _ in range(n_cases):
        L = int(rng.choice([3, 5, 7]))
        dom = make_cube(L, 1)
        f = random_function(rng, dom.structure.interior.sites).lift(StateSpace(dom.sites))
        lhs, rhs = spectral_gradient(f, dom, _density(rng))
        t.add(lhs, rhs)
    out[t.name] = t.result()

    t = _Tally("glauber_exchange")
    for _ in range(n_cases):
        k = int(rng.integers(2, 6))
        f = random_function(rng, [(x,) for x in range(k)])
        x, y = rng.choice(k, size=2, replace=False)
        lhs, rhs = glauber_exchange(f, (int(x),), (int(y),), _density(rng))
        t.add(lhs, rhs)
    out[t.name] = t.result()

    t = _Tally("bias")
    literal = 0
    for _ in range(n_cases):
        k = int(rng.integers(1, 6))
        f = random_function(rng, [(x,) for x in range(k)])
        rho = _density(rng)
        rho_p = float(np.clip(rho + rng.normal(scale=0.1), 0.02, 0.98))
        b = bias_check(f, rho_p, rho)
        t.add(b.gap, b.bound)
        literal += not b.holds_one_sided
    t.notes["one_sided_failures"] = literal
    out[t.name] = t.result()

    t1, t2 = _Tally("local_equivalence_1"), _Tally("local_equivalence_2")
    for _ in range(n_cases):
        ell = int(rng.choice([1, 3]))
        L = int(rng.choice([91, 151, 201, 301, 501, 1001]))
        M = int(rng.integers(1, L))
        nonneg = bool(rng.integers(2))
        f = random_function(rng, make_cube(ell, 1).sites, nonneg=nonneg)
        rep = ensemble_equivalence(L, M, f, ell=ell)
        t1.add(rep.canonical, rep.bound1, rep.precondition1 and rep.nonneg_sectors)
        t2.add(abs(rep.gap), rep.bound2, rep.precondition2)
    out[t1.name], out[t2.name] = t1.result(), t2.result()

    t = _Tally("regularity")
    primals = {}
    for _ in range(n_cases):
        model = models[int(rng.integers(len(models)))]
        L = int(rng.choice([3, 5]))
        key = (model.name, L)
        if key not in primals:
            primals[key] = PrimalProblem(make_cube(L, 1), model)
        rho = _density(rng, 0.1, 0.9)
        rho_p = float(np.clip(rho + rng.normal(scale=0.02), 0.05, 0.95))
        rho_pp = float(np.clip(rho + rng.normal(scale=0.02), 0.05, 0.95))
        xi = np.array([rng.uniform(-1, 1)])
        rep = regularity_suite(rho, rho_p, rho_pp, primals[key].dom, xi, model, primals[key])
        t.add(0.0 if rep.passed else 1.0, 0.0)
    out[t.name] = t.result()
    return out
