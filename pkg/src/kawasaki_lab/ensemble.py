"""Exact configuration-space algebra on {0,1}^S.

A configuration of the ordered site list ``S`` is encoded by the integer
``Σ_k η_{S[k]} 2^k``.  Functions are dense vectors over all ``2^|S|``
configurations; measures are weight vectors over the same index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import DEFAULT_SITE_CAP, Domain, bond_endpoints, check_cap, diam, shift


class SupportError(ValueError):
    """A site needed by an operation lies outside the state space."""


class StateSpace:
    """All configurations of an ordered site list."""

    def __init__(self, sites, cap: int | None = DEFAULT_SITE_CAP):
        if isinstance(sites, Domain):
            sites = sites.sites
        sites = tuple(sorted(set(tuple(s) for s in sites)))
        check_cap(len(sites), cap, "state space")
        self.sites = sites
        self.n = len(sites)
        self.size = 1 << self.n
        self.pos = {s: k for k, s in enumerate(sites)}

    def __repr__(self):
        return f"StateSpace({self.n} sites)"

    def __eq__(self, other):
        return isinstance(other, StateSpace) and self.sites == other.sites

    def __hash__(self):
        return hash(self.sites)

    def __contains__(self, x):
        return tuple(x) in self.pos

    @cached_property
    def index(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.int64)

    @cached_property
    def bits(self) -> np.ndarray:
        """``(size, n)`` array of occupations."""
        return ((self.index[:, None] >> np.arange(self.n)) & 1).astype(np.int8)

    @cached_property
    def counts(self) -> np.ndarray:
        return self.bits.sum(axis=1).astype(np.int64)

    def bit(self, x) -> int:
        try:
            return self.pos[tuple(x)]
        except KeyError:
            raise SupportError(f"site {x} outside the state space") from None

    def occ(self, x) -> np.ndarray:
        return ((self.index >> self.bit(x)) & 1).astype(np.int8)

    def count(self, sites) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int64)
        for x in sites:
            out += self.occ(x)
        return out

    def sub_index(self, subsites) -> np.ndarray:
        """Index of the restriction η|_sub for each configuration (sub in its own sorted order)."""
        sub = sorted(set(tuple(s) for s in subsites))
        out = np.zeros(self.size, dtype=np.int64)
        for j, s in enumerate(sub):
            out |= ((self.index >> self.bit(s)) & 1) << j
        return out

    def exchange_index(self, x, y) -> np.ndarray:
        bx, by = self.bit(x), self.bit(y)
        diff = ((self.index >> bx) ^ (self.index >> by)) & 1
        return self.index ^ (diff * ((1 << bx) | (1 << by)))

    def flip_index(self, x) -> np.ndarray:
        return self.index ^ (1 << self.bit(x))

    def encode(self, config) -> int:
        if isinstance(config, Configuration):
            config = config.as_dict()
        if isinstance(config, dict):
            return sum(int(config[s]) << k for k, s in enumerate(self.sites))
        return sum(int(v) << k for k, v in enumerate(config))

    def decode(self, idx: int) -> "Configuration":
        return Configuration(self.sites, tuple((idx >> k) & 1 for k in range(self.n)))


@dataclass(frozen=True)
class Configuration:
    sites: tuple
    values: tuple

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.values):
            raise ValueError("occupations must be 0 or 1")

    def as_dict(self) -> dict:
        return dict(zip(self.sites, self.values))

    def __getitem__(self, x):
        return self.as_dict()[tuple(x)]


def exchange(eta: Configuration, b) -> Configuration:
    """η^b: swap the occupations at the endpoints of ``b``."""
    x, y = bond_endpoints(b) if not isinstance(b[1], tuple) else b
    vals = eta.as_dict()
    if x not in vals or y not in vals:
        raise SupportError(f"bond {b} leaves the configuration support")
    vals[x], vals[y] = vals[y], vals[x]
    return Configuration(eta.sites, tuple(vals[s] for s in eta.sites))


@dataclass
class ConfigFunction:
    """A real function on a state space; ``support`` is the declared measurability set."""

    space: StateSpace
    values: np.ndarray
    support: tuple | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.size,):
            raise ValueError("value vector does not match the state space")

    def _wrap(self, values):
        return ConfigFunction(self.space, values, self.support)

    def _other(self, g):
        if isinstance(g, ConfigFunction):
            if g.space != self.space:
                g = g.lift(self.space)
            return g.values
        return g

    def __add__(self, g):
        return self._wrap(self.values + self._other(g))

    __radd__ = __add__

    def __sub__(self, g):
        return self._wrap(self.values - self._other(g))

    def __rsub__(self, g):
        return self._wrap(self._other(g) - self.values)

    def __mul__(self, g):
        return self._wrap(self.values * self._other(g))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)

    def __call__(self, config) -> float:
        return float(self.values[self.space.encode(config)])

    def lift(self, space: StateSpace) -> "ConfigFunction":
        """The same function viewed on a larger state space."""
        missing = [s for s in self.space.sites if s not in space]
        if missing:
            raise SupportError(f"sites {missing} missing from the target space")
        return ConfigFunction(space, self.values[space.sub_index(self.space.sites)], self.support)

    def is_measurable(self, sites, atol: float = 1e-12) -> bool:
        """True if the value only depends on η restricted to ``sites``."""
        for s in self.space.sites:
            if s in set(map(tuple, sites)):
                continue
            flipped = self.values[self.space.flip_index(s)]
            if np.max(np.abs(flipped - self.values), initial=0.0) > atol:
                return False
        return True


def constant(space: StateSpace, value: float = 1.0) -> ConfigFunction:
    return ConfigFunction(space, np.full(space.size, float(value)))


def occupation(space: StateSpace, x) -> ConfigFunction:
    return ConfigFunction(space, space.occ(x).astype(float), (tuple(x),))


def affine(space: StateSpace, p, sites=None) -> ConfigFunction:
    """ℓ_{p,A}(η) = Σ_{x∈A} (p·x) η_x; ``A`` defaults to the whole space."""
    sites = space.sites if sites is None else [tuple(s) for s in sites]
    p = np.atleast_1d(np.asarray(p, dtype=float))
    vals = np.zeros(space.size)
    for x in sites:
        vals += float(np.dot(p, x)) * space.occ(x)
    return ConfigFunction(space, vals, tuple(sites))


def kawasaki(f: ConfigFunction, b) -> ConfigFunction:
    """π_b f = f(η^b) − f(η)."""
    x, y = bond_endpoints(b) if not isinstance(b[1], tuple) else b
    perm = f.space.exchange_index(x, y)
    return ConfigFunction(f.space, f.values[perm] - f.values)


def glauber(f: ConfigFunction, x) -> ConfigFunction:
    """π_x f = f(η^x) − f(η)."""
    return ConfigFunction(f.space, f.values[f.space.flip_index(x)] - f.values)


def translate(f: ConfigFunction, z, target: StateSpace | None = None) -> ConfigFunction:
    """(τ_z f)(η) = f(τ_z η), a function of the sites z + supp f."""
    z = tuple(z)
    moved = StateSpace([shift(s, z) for s in f.space.sites], cap=None)
    # Translation preserves lexicographic order, so the bit layout is unchanged.
    g = ConfigFunction(moved, f.values.copy(),
                       None if f.support is None else tuple(shift(s, z) for s in f.support))
    return g if target is None else g.lift(target)


def gradient_field(u: ConfigFunction, x, i: int) -> ConfigFunction:
    """∇_{x,e_i} u = (π_{x,x+e_i} u)(η_x − η_{x+e_i})."""
    b = (tuple(x), i)
    xs, y = bond_endpoints(b)
    return ConfigFunction(u.space, kawasaki(u, b).values * (u.space.occ(xs) - u.space.occ(y)))


@dataclass
class Measure:
    """Probability weights over a state space."""

    space: StateSpace
    weights: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -1e-15):
            raise ValueError("negative weights")
        total = w.sum()
        if total <= 0:
            raise ValueError("empty measure")
        self.weights = w / total


def bernoulli_weights(space: StateSpace, rho: float) -> np.ndarray:
    k = space.counts
    if rho == 0.0:
        return (k == 0).astype(float)
    if rho == 1.0:
        return (k == space.n).astype(float)
    return rho**k * (1.0 - rho) ** (space.n - k)


def bernoulli(space: StateSpace, rho: float) -> Measure:
    if not 0.0 <= rho <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    return Measure(space, bernoulli_weights(space, rho), "bernoulli", {"rho": rho})


def canonical(space: StateSpace, region, M: int, zeta: dict | None = None) -> Measure:
    """Uniform measure on {Σ_{x∈Λ} η_x = M, η = ζ outside Λ}."""
    region = [tuple(s) for s in (region.sites if isinstance(region, Domain) else region)]
    zeta = {tuple(k): int(v) for k, v in (zeta or {}).items()}
    outside = [s for s in space.sites if s not in set(region)]
    if set(outside) != set(zeta):
        raise SupportError("the exterior configuration must fix every site outside Λ")
    if not 0 <= M <= len(region):
        raise ValueError("M out of range")
    mask = space.count(region) == M
    for s, v in zeta.items():
        mask &= space.occ(s) == v
    return Measure(space, mask.astype(float), "canonical", {"M": M, "zeta": zeta})


def _values(f, mu: Measure) -> np.ndarray:
    if isinstance(f, ConfigFunction):
        if f.space != mu.space:
            f = f.lift(mu.space)
        return f.values
    return np.asarray(f, dtype=float)


def expect(f, mu: Measure) -> float:
    return float(np.dot(mu.weights, _values(f, mu)))


def covariance(f, g, mu: Measure) -> float:
    fv, gv = _values(f, mu), _values(g, mu)
    return float(np.dot(mu.weights, fv * gv) - np.dot(mu.weights, fv) * np.dot(mu.weights, gv))


def variance(f, mu: Measure) -> float:
    return covariance(f, f, mu)


def chi(rho: float) -> float:
    """Compressibility ρ(1−ρ)."""
    return rho * (1.0 - rho)


def rate_values(model, b, space: StateSpace, d: int | None = None) -> np.ndarray:
    d = len(space.sites[0]) if d is None else d
    sites = model.window(b, d)
    if not sites:
        return model.rates(b, np.zeros((space.size, 0), dtype=np.int8), d)
    occ = np.stack([space.occ(s) for s in sites], axis=1)
    return model.rates(b, occ, d)


def _bond_list(bonds):
    return list(getattr(bonds, "bonds", bonds))


def generator(u: ConfigFunction, bonds, model) -> ConfigFunction:
    """L u = Σ_b c_b π_b u."""
    out = np.zeros(u.space.size)
    for b in _bond_list(bonds):
        out += rate_values(model, b, u.space) * kawasaki(u, b).values
    return ConfigFunction(u.space, out)


def dirichlet_form(u: ConfigFunction, v: ConfigFunction, bonds, model, mu: Measure) -> float:
    """½ Σ_b ⟨c_b (π_b u)(π_b v)⟩_μ."""
    total = 0.0
    for b in _bond_list(bonds):
        c = rate_values(model, b, mu.space)
        total += np.dot(mu.weights, c * _values(kawasaki(u, b), mu) * _values(kawasaki(v, b), mu))
    return 0.5 * float(total)


def conditional_expectation(f, mu: Measure, region) -> ConfigFunction:
    """E_μ[f | G_A]: average over configurations with the same count in A and the same exterior."""
    space = mu.space
    region = [tuple(s) for s in (region.sites if isinstance(region, Domain) else region)]
    outside = [s for s in space.sites if s not in set(region)]
    key = space.count(region) * (1 << len(outside)) + (space.sub_index(outside) if outside else 0)
    fv = _values(f, mu)
    num = np.bincount(key, weights=mu.weights * fv)
    den = np.bincount(key, weights=mu.weights)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return ConfigFunction(space, avg[key])


# --- spectral and exchange inequalities ------------------------------------


def spectral_glauber(f: ConfigFunction, rho: float, sites=None) -> tuple:
    """(Var_ρ f, χ Σ_x ⟨(π_x f)²⟩_ρ)."""
    mu = bernoulli(f.space, rho)
    sites = f.space.sites if sites is None else sites
    rhs = chi(rho) * sum(expect(glauber(f, x).values ** 2, mu) for x in sites)
    return variance(f, mu), rhs


def spectral_gradient(f: ConfigFunction, dom: Domain, rho: float) -> tuple:
    """(Var_ρ f, diam(Λ)² Σ_{b∈Λ*} ⟨(π_b f)²⟩_ρ) for f measurable w.r.t. Λ⁻."""
    st = dom.structure
    if not f.is_measurable(st.interior.sites):
        raise ValueError("f must only depend on the interior of the domain")
    mu = bernoulli(f.space, rho)
    rhs = diam(dom.sites) ** 2 * sum(expect(kawasaki(f, b).values ** 2, mu)
                                     for b in st.interior_bonds)
    return variance(f, mu), rhs


def glauber_exchange(f: ConfigFunction, x, y, rho: float) -> tuple:
    """(‖π_x f‖, ‖π_y f‖ + (2χ)^{-1/2} ‖π_{x,y} f‖) in L²(P_ρ)."""
    mu = bernoulli(f.space, rho)
    nx = np.sqrt(expect(glauber(f, x).values ** 2, mu))
    ny = np.sqrt(expect(glauber(f, y).values ** 2, mu))
    nxy = np.sqrt(expect(kawasaki(f, (tuple(x), tuple(y))).values ** 2, mu))
    return float(nx), float(ny + nxy / np.sqrt(2.0 * chi(rho)))


def canonical_gap_ratio(f: ConfigFunction, dom: Domain, N: int) -> float:
    """Var_{Λ,N} f / (L² Σ_{b∈Λ*} ⟨(π_b f)²⟩_{Λ,N}); 0 when the denominator vanishes.

    ``f`` must live on exactly the sites of ``dom``.
    """
    if set(f.space.sites) != set(dom.sites):
        raise SupportError("f must be defined on the domain itself")
    mu = canonical(f.space, dom, N)
    den = sum(expect(kawasaki(f, b).values ** 2, mu) for b in dom.structure.interior_bonds)
    L = dom.side if dom.side is not None else diam(dom.sites) + 1
    den *= L**2
    var = variance(f, mu)
    return 0.0 if den <= 1e-300 else var / den
