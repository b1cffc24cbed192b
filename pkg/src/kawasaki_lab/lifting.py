"""Coarse-grained lifting of exclusion configurations to independent particles.

Free configurations are count vectors η̃ ∈ {0, …, K}^S under a product of
truncated Poisson(α) laws.  A function on the free space is any vectorised
callable ``F(counts) -> values`` with ``counts`` of shape ``(n_states, |S|)``;
it may be evaluated at counts up to ``K + 1`` (Mecke shifts add one particle).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .ensemble import (ConfigFunction, StateSpace, bernoulli_weights, canonical, expect,
                       gradient_field)
from .lattice import CapExceeded, Domain, bond_endpoints, make_triadic, shift, triadic_partition

TRUNCATION_BUDGET = 1e-15
MAX_FREE_SITES = 6
MAX_FREE_STATES = 2_000_000


def alpha_of(rho: float) -> float:
    """α(ρ) = −log(1 − ρ), so that P(Poi(α) ≥ 1) = ρ."""
    if not 0.0 < rho < 1.0:
        raise ValueError("ρ must lie in (0, 1)")
    return float(-np.log1p(-rho))


def truncation_level(alpha: float, budget: float = TRUNCATION_BUDGET) -> int:
    """Smallest K with P(Poi(α) ≥ K) < budget."""
    K = 1
    while poisson.sf(K - 1, alpha) >= budget:
        K += 1
    return K


@dataclass(frozen=True)
class FreeConfiguration:
    sites: tuple
    counts: tuple
    K: int

    def __post_init__(self):
        if any(c < 0 or c > self.K for c in self.counts):
            raise ValueError("counts must lie in [0, K]")
        if len(self.counts) != len(self.sites):
            raise ValueError("one count per site")

    def project(self):
        """[η̃]_x = 1{η̃_x ≥ 1}."""
        from .ensemble import Configuration
        return Configuration(self.sites, tuple(int(c >= 1) for c in self.counts))

    def add(self, x) -> "FreeConfiguration":
        c = list(self.counts)
        c[self.sites.index(tuple(x))] += 1
        return FreeConfiguration(self.sites, tuple(c), max(self.K, max(c)))


@dataclass(frozen=True)
class PoissonMeasure:
    """Truncated, renormalised Poi(α) on {0, …, K}."""

    alpha: float
    K: int

    @cached_property
    def weights(self) -> np.ndarray:
        w = poisson.pmf(np.arange(self.K + 1), self.alpha)
        return w / w.sum()

    @property
    def tail(self) -> float:
        return float(poisson.sf(self.K, self.alpha))


class FreeSpace:
    """All count vectors in {0, …, K}^S with product truncated-Poisson weights."""

    def __init__(self, sites, alpha: float, K: int | None = None,
                 budget: float = TRUNCATION_BUDGET):
        self.sites = tuple(sorted(set(tuple(s) for s in sites)))
        self.n = len(self.sites)
        if self.n > MAX_FREE_SITES:
            raise CapExceeded(f"free space with {self.n} sites, above {MAX_FREE_SITES}")
        self.alpha = float(alpha)
        self.K = truncation_level(alpha, budget) if K is None else int(K)
        if (self.K + 1) ** self.n > MAX_FREE_STATES:
            raise CapExceeded(f"{(self.K + 1) ** self.n} free states")
        self.pos = {s: k for k, s in enumerate(self.sites)}
        self.measure = PoissonMeasure(self.alpha, self.K)

    @cached_property
    def counts(self) -> np.ndarray:
        grid = np.indices((self.K + 1,) * self.n).reshape(self.n, -1).T
        return grid.astype(np.int64)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.prod(self.measure.weights[self.counts], axis=1)

    @property
    def budget(self) -> float:
        """Bound on truncation effects: n · P(Poi(α) ≥ K), per unit sup-norm."""
        return self.n * float(poisson.sf(self.K - 1, self.alpha))

    def column(self, x) -> int:
        return self.pos[tuple(x)]

    def shifted(self, x) -> np.ndarray:
        """Counts of η̃ + δ_x."""
        c = self.counts.copy()
        c[:, self.column(x)] += 1
        return c

    def jumped(self, x, y) -> np.ndarray:
        """Counts of η̃^{x,y} = η̃ − δ_x + δ_y (only meaningful where η̃_x ≥ 1)."""
        c = self.counts.copy()
        c[:, self.column(x)] = np.maximum(c[:, self.column(x)] - 1, 0)
        c[:, self.column(y)] += 1
        return c

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))


def project(counts) -> np.ndarray:
    """[η̃] for an array of count vectors."""
    return (np.asarray(counts) >= 1).astype(np.int8)


def lift(u: ConfigFunction, free_sites):
    """[u](η̃) = u([η̃]) as a vectorised function of count arrays over ``free_sites``."""
    free_sites = tuple(sorted(set(tuple(s) for s in free_sites)))
    cols = [free_sites.index(s) for s in u.space.sites]

    def F(counts):
        occ = project(np.asarray(counts)[:, cols])
        idx = (occ.astype(np.int64) << np.arange(len(cols))).sum(axis=1)
        return u.values[idx]

    return F


def lifting_gap(u: ConfigFunction, rho: float, K: int | None = None) -> tuple:
    """(⟨[u]⟩_{α(ρ)}, ⟨u⟩_ρ, budget)."""
    fs = FreeSpace(u.space.sites, alpha_of(rho), K)
    lhs = fs.expect(lift(u, fs.sites)(fs.counts))
    rhs = float(np.dot(bernoulli_weights(u.space, rho), u.values))
    return lhs, rhs, fs.budget * float(np.max(np.abs(u.values), initial=0.0))


def bounded_table_function(rng, n_sites: int, levels: int = 3):
    """Random bounded F(η̃) = T[min(η̃, levels)] on n sites."""
    table = rng.normal(size=(levels + 1,) * n_sites)

    def F(counts):
        c = np.minimum(np.asarray(counts), levels)
        return table[tuple(c.T)]

    F.sup = float(np.max(np.abs(table)))
    return F


@dataclass
class IdentityCheck:
    lhs: float
    rhs: float
    budget: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def holds(self) -> bool:
        return self.gap <= self.budget + 1e-15


def mecke_check(F, x, alpha: float, sites, K: int | None = None, sup: float | None = None):
    """⟨η̃_x F(η̃)⟩_α against α⟨F(η̃ + δ_x)⟩_α."""
    fs = FreeSpace(sites, alpha, K)
    col = fs.column(x)
    lhs = fs.expect(fs.counts[:, col] * F(fs.counts))
    rhs = alpha * fs.expect(F(fs.shifted(x)))
    if sup is None:
        sup = getattr(F, "sup", None)
    if sup is None:
        big = np.concatenate([F(fs.counts), F(fs.shifted(x))])
        sup = float(np.max(np.abs(big)))
    budget = 4 * (1 + alpha) * (fs.K + 1) * fs.budget * sup
    return IdentityCheck(lhs, rhs, budget)


def _or_delta(space: StateSpace, y) -> np.ndarray:
    """Index map η ↦ η ∨ δ_y."""
    return space.index | (1 << space.bit(y))


def _with_sites(u: ConfigFunction, sites) -> ConfigFunction:
    missing = [tuple(s) for s in sites if tuple(s) not in u.space]
    if not missing:
        return u
    return u.lift(StateSpace(set(u.space.sites) | set(missing), cap=None))


def mecke_kawasaki(u: ConfigFunction, x, i: int, rho: float) -> IdentityCheck:
    """⟨∇_{x,e_i}u⟩_ρ against 2ρ(⟨u | η_{x+e_i}=1⟩_ρ − ⟨u | η_x=1⟩_ρ).

    The conditional expectations are computed as ⟨u(η ∨ δ_y)⟩_ρ, which is
    also well defined at ρ ∈ {0, 1}.
    """
    x = tuple(x)
    _, y = bond_endpoints((x, i))
    u = _with_sites(u, [x, y])
    w = bernoulli_weights(u.space, rho)
    lhs = float(np.dot(w, gradient_field(u, x, i).values))
    rhs = 2 * rho * float(np.dot(w, u.values[_or_delta(u.space, y)] - u.values[_or_delta(u.space, x)]))
    return IdentityCheck(lhs, rhs, 1e-12 * max(1.0, float(np.max(np.abs(u.values)))))


def canonical_mecke(u: ConfigFunction, dom: Domain, x, i: int, N: int) -> IdentityCheck:
    """Canonical analogue on Λ⁺ with N particles and factor 2N/|Λ⁺|."""
    plus = dom.structure.enlarged.sites
    x = tuple(x)
    _, y = bond_endpoints((x, i))
    if x not in plus or y not in plus:
        raise ValueError("the bond must lie in Λ⁺")
    sp = StateSpace(plus)
    u = u.lift(sp)
    mu = canonical(sp, plus, N)
    lhs = expect(gradient_field(u, x, i), mu)
    if N == 0:
        return IdentityCheck(lhs, 0.0, 1e-12)
    cond = []
    for s in (y, x):
        sel = mu.weights * sp.occ(s)
        cond.append(float(np.dot(sel, u.values)) / sel.sum())
    rhs = 2 * N / len(plus) * (cond[0] - cond[1])
    return IdentityCheck(lhs, rhs, 1e-12 * max(1.0, float(np.max(np.abs(u.values)))))


def gradient_coupling(u: ConfigFunction, sites, i: int, rho: float,
                      K: int | None = None) -> IdentityCheck:
    """Σ_{x∈Λ}⟨η̃_x π̃_{x,x+e_i}[u]⟩_{α(ρ)} against (α/2ρ) Σ_{x∈Λ}⟨∇_{x,e_i}u⟩_ρ."""
    sites = [tuple(s) for s in sites]
    ends = [bond_endpoints((x, i))[1] for x in sites]
    u = _with_sites(u, sites + ends)
    alpha = alpha_of(rho)
    fs = FreeSpace(u.space.sites, alpha, K)
    F = lift(u, fs.sites)
    base = F(fs.counts)
    lhs = 0.0
    for x, y in zip(sites, ends):
        lhs += fs.expect(fs.counts[:, fs.column(x)] * (F(fs.jumped(x, y)) - base))
    w = bernoulli_weights(u.space, rho)
    grad = sum(float(np.dot(w, gradient_field(u, x, i).values)) for x in sites)
    rhs = alpha / (2 * rho) * grad
    sup = float(np.max(np.abs(u.values), initial=0.0))
    budget = 8 * (1 + alpha) * (fs.K + 1) * len(sites) * fs.budget * sup
    return IdentityCheck(lhs, rhs, budget)


def change_of_variable(rho: float, sites, x, y, K: int | None = None) -> tuple:
    """Joint laws of ([η̃+δ_x], [η̃+δ_y]) and (η∨δ_x, η∨δ_y) as dicts over index pairs."""
    sp = StateSpace(sites)
    fs = FreeSpace(sp.sites, alpha_of(rho), K)
    pows = 1 << np.arange(sp.n)
    ax = (project(fs.shifted(x)) * pows).sum(axis=1)
    ay = (project(fs.shifted(y)) * pows).sum(axis=1)
    free = {}
    for a, b, w in zip(ax, ay, fs.weights):
        free[(int(a), int(b))] = free.get((int(a), int(b)), 0.0) + w
    w = bernoulli_weights(sp, rho)
    excl = {}
    for a, b, p in zip(_or_delta(sp, x), _or_delta(sp, y), w):
        excl[(int(a), int(b))] = excl.get((int(a), int(b)), 0.0) + p
    return free, excl, fs.budget


# --- canonical gradient coupling ---------------------------------------------


def _multinomial_states(k: int, M: int):
    """All count vectors of M labelled-free particles in k boxes, with uniform-placement weights."""
    states, weights = [], []
    logk = M * np.log(k)
    for combo in itertools.combinations_with_replacement(range(k), M):
        c = np.bincount(np.array(combo, dtype=np.int64), minlength=k) if M else np.zeros(k, int)
        states.append(c)
        weights.append(np.exp(gammaln(M + 1) - gammaln(c + 1).sum() - logk))
    return np.array(states, dtype=np.int64).reshape(-1, k), np.array(weights)


def occupied_count_law(k: int, M: int) -> np.ndarray:
    """P_{Λ,M,N} for N = 0..k: P(#occupied among k−1 fixed boxes = N − 1)."""
    states, w = _multinomial_states(k, M)
    occ = (states[:, 1:] >= 1).sum(axis=1)
    out = np.zeros(k + 1)
    np.add.at(out, occ + 1, w)
    return out


def canonical_gradient_coupling(u: ConfigFunction, dom: Domain, i: int, M: int) -> IdentityCheck:
    """Σ_{x∈Λ}⟨∂_i[u](η̃,x)⟩_{Λ⁺,M} against Σ_N |Λ⁺|P_{Λ,M,N}/(2N) Σ_{x∈Λ}⟨∇_{x,e_i}u⟩_{Λ⁺,N}.

    ``∂_i[u](η̃, x) = [u](η̃ + δ_{x+e_i}) − [u](η̃ + δ_x)``; the left side is an
    exact multinomial sum, so the identity holds to rounding.
    """
    plus = dom.structure.enlarged.sites
    k = len(plus)
    sp = StateSpace(plus)
    u = u.lift(sp)
    states, w = _multinomial_states(k, M)
    F = lift(u, plus)
    lhs = 0.0
    for x in dom.sites:
        _, y = bond_endpoints((x, i))
        sx, sy = states.copy(), states.copy()
        sx[:, plus.index(x)] += 1
        sy[:, plus.index(y)] += 1
        lhs += float(np.dot(w, F(sy) - F(sx)))
    P = occupied_count_law(k, M)
    rhs = 0.0
    for N in range(1, k + 1):
        if P[N] == 0:
            continue
        mu = canonical(sp, plus, N)
        grad = sum(expect(gradient_field(u, x, i), mu) for x in dom.sites)
        rhs += k * P[N] / (2 * N) * grad
    return IdentityCheck(lhs, rhs, 1e-11 * max(1.0, float(np.max(np.abs(u.values)))))


# --- weighted multiscale Poincaré probe --------------------------------------


@dataclass
class PoincareProbe:
    lhs: float
    rhs: float
    terms: list          # per-scale contributions before the square root

    @property
    def ratio(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        return np.inf if self.rhs == 0.0 else self.lhs / self.rhs


def _conditional(values, weights, key) -> np.ndarray:
    num = np.bincount(key, weights * values)
    den = np.bincount(key, weights)
    avg = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return avg[key]


def _g_key(space: StateSpace, region) -> np.ndarray:
    outside = [s for s in space.sites if s not in set(region)]
    rest = space.sub_index(outside) if outside else np.zeros(space.size, dtype=np.int64)
    return space.count(region) * (1 << len(outside)) + rest


def recenter(u: ConfigFunction, region, rho: float) -> ConfigFunction:
    """u − ⟨u | G_region⟩_ρ."""
    w = bernoulli_weights(u.space, rho)
    return ConfigFunction(u.space, u.values - _conditional(u.values, w, _g_key(u.space, region)))


def weighted_poincare_probe(u: ConfigFunction, m: int, rho: float, d: int = 1) -> PoincareProbe:
    """Both sides of the weighted multiscale Poincaré inequality, without the constant C(d).

    ``u`` is recentred so that ⟨u | G_{□_m⁺}⟩ = 0.  The weight |□_n⁺|/(2N*) is
    set to zero where N* = 0.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("ρ must lie in (0, 1)")
    big = make_triadic(m, d)
    plus = big.structure.enlarged.sites
    sp = StateSpace(plus)
    u = recenter(u.lift(sp), plus, rho)
    w = bernoulli_weights(sp, rho)
    lhs = np.sqrt(float(np.dot(w, u.values**2)) / len(big))
    grads = {(x, i): gradient_field(u, x, i).values for x in big.sites for i in range(d)}
    rhs, terms = 0.0, []
    for n in range(m + 1):
        cube = make_triadic(n, d)
        centers = triadic_partition(m, n, d, allow_equal=True)
        acc = 0.0
        for z in centers:
            block = [shift(x, z) for x in cube.sites]
            bplus = [shift(x, z) for x in cube.structure.enlarged.sites]
            key = _g_key(sp, bplus)
            count = sp.count(bplus)
            nstar = count if rho <= 0.5 else len(bplus) - count
            sq = np.zeros(sp.size)
            for i in range(d):
                avg = sum(_conditional(grads[(x, i)], w, key) for x in block) / len(block)
                sq += avg**2
            weight = np.divide(len(bplus), 2.0 * nstar, out=np.zeros(sp.size), where=nstar > 0)
            acc += float(np.dot(w, weight * sq))
        term = acc / len(centers)
        terms.append(term)
        rhs += 3**n * np.sqrt(term)
    return PoincareProbe(float(lhs), float(rhs), terms)


def flip(u: ConfigFunction) -> ConfigFunction:
    """ǔ(η) = u(1 − η)."""
    return ConfigFunction(u.space, u.values[u.space.index ^ (u.space.size - 1)])


# --- randomized identity suite -----------------------------------------------


def closed_form_case() -> IdentityCheck:
    """u = η_0 at α = 1: both sides of the gradient coupling equal −e^{-1}."""
    rho = 1 - np.exp(-1.0)
    u = ConfigFunction(StateSpace([(0,)]), np.array([0.0, 1.0]))
    return gradient_coupling(u, [(0,)], 0, rho)


def run_lifting_suite(n_cases: int = 10, seed: int = 0) -> dict:
    """Random local functions through each lifting identity; name → list of IdentityCheck."""
    rng = np.random.default_rng(seed)
    out = {"mecke": [], "mecke_kawasaki": [], "canonical_mecke": [], "gradient_coupling": [],
           "canonical_gradient_coupling": []}
    dom = make_triadic(1, 1)
    plus = dom.structure.enlarged.sites
    for _ in range(n_cases):
        n = int(rng.integers(1, 4))
        sites = [(x,) for x in range(n)]
        rho = float(rng.uniform(0.05, 0.95))
        alpha = alpha_of(rho)
        F = bounded_table_function(rng, n)
        out["mecke"].append(mecke_check(F, sites[int(rng.integers(n))], alpha, sites))
        u = ConfigFunction(StateSpace(sites), rng.normal(size=2**n))
        out["mecke_kawasaki"].append(mecke_kawasaki(u, (int(rng.integers(-1, n)),), 0, rho))
        out["gradient_coupling"].append(gradient_coupling(u, sites[:max(1, n - 1)], 0, rho))
        v = ConfigFunction(StateSpace(plus), rng.normal(size=2 ** len(plus)))
        N = int(rng.integers(0, len(plus) + 1))
        out["canonical_mecke"].append(canonical_mecke(v, dom, dom.sites[0], 0, N))
        M = int(rng.integers(1, 5))
        out["canonical_gradient_coupling"].append(canonical_gradient_coupling(v, dom, 0, M))
    return out
