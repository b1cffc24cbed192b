"""Grand-canonical variational problems: ν, ν*, J and the matrices D̄, D̄*.

Every expectation is an exact enumeration.  For a bond ``b = {x, y}`` only
configurations with ``η_x ≠ η_y`` contribute, so each problem is stored as a
list of directed edges ``σ → σ^b`` between configurations together with the
rate ``c_b(σ)``, the sign ``η_x − η_y`` and the number of occupied sites of
``σ`` (which is all that the Bernoulli weight needs).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..ensemble import ConfigFunction, StateSpace, chi, rate_values
from ..lattice import DEFAULT_SITE_CAP, Domain, bond_endpoints, check_cap
from .solvers import DEFAULT_TOL, EdgeSystem


def check_density(rho: float):
    if not 0.0 < rho < 1.0:
        raise ValueError("density must lie strictly inside (0, 1); endpoints follow the zero convention")


def bernoulli_factor(rho: float, ones, n) -> np.ndarray:
    ones = np.asarray(ones)
    return rho**ones * (1.0 - rho) ** (np.asarray(n) - ones)


@dataclass
class EdgeList:
    """Directed edges ``σ → σ^b`` of a state space, restricted to ``η_x ≠ η_y``."""

    space: StateSpace
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    sign: np.ndarray
    direction: np.ndarray
    bond: np.ndarray
    ones: np.ndarray

    def offsets(self, p) -> np.ndarray:
        """π_b ℓ_p = p_i (η_x − η_{x+e_i}) along each edge."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return p[self.direction] * self.sign

    def prob(self, rho: float) -> np.ndarray:
        return bernoulli_factor(rho, self.ones, self.space.n)

    def delta(self, values) -> np.ndarray:
        return values[self.dst] - values[self.src]


def edge_list(space: StateSpace, bonds, model, d: int) -> EdgeList:
    parts = []
    for bid, b in enumerate(bonds):
        x, y = bond_endpoints(b)
        ox, oy = space.occ(x), space.occ(y)
        sel = np.flatnonzero(ox != oy)
        c = rate_values(model, b, space, d)[sel]
        parts.append((sel, space.exchange_index(x, y)[sel], c, (ox - oy)[sel].astype(float),
                      np.full(sel.size, b[1]), np.full(sel.size, bid), space.counts[sel]))
    if not parts:
        z = np.zeros(0, dtype=np.int64)
        return EdgeList(space, z, z, z.astype(float), z.astype(float), z, z, z)
    cols = [np.concatenate(c) for c in zip(*parts)]
    return EdgeList(space, *cols)


def needed_sites(dom: Domain, bonds, model) -> list:
    d = dom.dim
    sites = set()
    for b in bonds:
        sites.update(bond_endpoints(b))
        sites.update(model.window(b, d))
    return sorted(sites)


# --- primal problem ν ------------------------------------------------------


@dataclass
class PrimalTerms:
    """Edges projected onto the interior: ``k → kb`` are indices of η|Λ⁻."""

    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    sign: np.ndarray
    direction: np.ndarray
    ones: np.ndarray
    nsites: np.ndarray

    def weights(self, rho) -> np.ndarray:
        return self.rate * bernoulli_factor(rho, self.ones, self.nsites)

    def offsets(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return p[self.direction] * self.sign


def primal_terms(interior, bonds, model, d: int, cap=DEFAULT_SITE_CAP) -> PrimalTerms:
    interior = list(interior)
    iset = set(interior)
    parts = []
    for b in bonds:
        x, y = bond_endpoints(b)
        sites = sorted(iset | {x, y} | set(model.window(b, d)))
        check_cap(len(sites), cap, f"bond {b} support")
        sp = StateSpace(sites, cap=cap)
        ox, oy = sp.occ(x), sp.occ(y)
        sel = np.flatnonzero(ox != oy)
        sub = sp.sub_index(interior) if interior else np.zeros(sp.size, dtype=np.int64)
        parts.append((sub[sel], sub[sp.exchange_index(x, y)[sel]],
                      rate_values(model, b, sp, d)[sel], (ox - oy)[sel].astype(float),
                      np.full(sel.size, b[1]), sp.counts[sel], np.full(sel.size, sp.n)))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return PrimalTerms(*cols)


@dataclass
class NuResult:
    value: float
    v: ConfigFunction          # ℓ_{p,Λ⁺} + corrector, on Λ⁺
    corrector: ConfigFunction  # on Λ⁻, mean zero under P_ρ
    residual: float
    iterations: int


class PrimalProblem:
    """ν(ρ, Λ, p) = inf over ℓ_{p,Λ⁺} + F_0(Λ⁻) of the enlarged-bond Dirichlet energy."""

    def __init__(self, dom: Domain, model, cap=DEFAULT_SITE_CAP, bonds=None):
        self.dom = dom
        self.model = model
        self.d = dom.dim
        st = dom.structure
        self.interior = st.interior.sites
        check_cap(len(self.interior), cap, "interior")
        self.bonds = list(st.enlarged_bonds if bonds is None else bonds)
        self.terms = primal_terms(self.interior, self.bonds, model, self.d, cap)
        self.n_nodes = 1 << len(self.interior)
        self.interior_space = StateSpace(self.interior, cap=cap)
        self.cap = cap

    def system(self, weights) -> EdgeSystem:
        t = self.terms
        return EdgeSystem(self.n_nodes, t.src, t.dst, weights)

    def node_prob(self, rho) -> np.ndarray:
        sp = self.interior_space
        return bernoulli_factor(rho, sp.counts, sp.n)

    def _solve(self, weights, s, gauge_prob, tol):
        if self.n_nodes == 1:
            return np.zeros(1), 0.0, 0
        res = self.system(weights).minimize(s, tol=tol)
        w = res.x - np.dot(gauge_prob, res.x) / gauge_prob.sum()
        return w, res.residual, res.iterations

    def corrector_values(self, rho, p, tol=DEFAULT_TOL):
        check_density(rho)
        return self._solve(self.terms.weights(rho), self.terms.offsets(p), self.node_prob(rho), tol)

    def mixture_corrector(self, rhos, lams, p, tol=DEFAULT_TOL):
        """Minimiser of Σ_k λ_k E_{ρ_k}(ℓ_p + w), gauged to the λ-mixture mean zero."""
        weights = sum(l * self.terms.weights(r) for r, l in zip(rhos, lams))
        gauge = sum(l * self.node_prob(r) for r, l in zip(rhos, lams))
        return self._solve(weights, self.terms.offsets(p), gauge, tol)

    def energy(self, rho, p, w) -> float:
        """Σ_b ⟨½ c_b (π_b(ℓ_p + w))²⟩_ρ (no normalisation)."""
        t = self.terms
        return 0.5 * float(np.sum(t.weights(rho) * (t.offsets(p) + w[t.dst] - w[t.src]) ** 2))

    def dirichlet(self, rho, w) -> float:
        """Σ_b ⟨c_b (π_b w)²⟩_ρ for w on Λ⁻."""
        t = self.terms
        return float(np.sum(t.weights(rho) * (w[t.dst] - w[t.src]) ** 2))

    def solve(self, rho, p, tol=DEFAULT_TOL) -> NuResult:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        w, res, it = self.corrector_values(rho, p, tol)
        value = self.energy(rho, p, w) / (2.0 * chi(rho) * len(self.dom))
        corr = ConfigFunction(self.interior_space, w, self.interior)
        return NuResult(value, self.lift(p, w), corr, res, it)

    def lift(self, p, w, space: StateSpace | None = None) -> ConfigFunction:
        """ℓ_{p,Λ⁺} + w as a function on ``space`` (default Λ⁺)."""
        plus = self.dom.structure.enlarged.sites
        space = StateSpace(plus, cap=self.cap) if space is None else space
        vals = np.zeros(space.size)
        p = np.atleast_1d(np.asarray(p, dtype=float))
        for x in plus:
            vals += float(np.dot(p, x)) * space.occ(x)
        if self.interior:
            vals += w[space.sub_index(self.interior)]
        else:
            vals += w[0]
        return ConfigFunction(space, vals)

    def matrix(self, rho, tol=DEFAULT_TOL) -> np.ndarray:
        """D̄(ρ, Λ) from d basis solves."""
        check_density(rho)
        d, t = self.d, self.terms
        weights = t.weights(rho)
        grads = []
        for j in range(d):
            e = np.eye(d)[j]
            w, _, _ = self._solve(weights, t.offsets(e), self.node_prob(rho), tol)
            grads.append(t.offsets(e) + w[t.dst] - w[t.src])
        G = np.array([[np.sum(weights * gi * gj) for gj in grads] for gi in grads])
        D = G / (2.0 * chi(rho) * len(self.dom))
        return 0.5 * (D + D.T)

    def residual(self, rho, p, w) -> float:
        """Max-norm of the first-order condition tested against every Λ⁻ indicator."""
        t = self.terms
        sysm = self.system(t.weights(rho))
        return float(np.max(np.abs(sysm.apply(w) - sysm.load(t.offsets(p))), initial=0.0))


# --- dual problem ν* ---------------------------------------------------------


@dataclass
class NuStarResult:
    u: list                 # ConfigFunction maximisers for q = e_1, ..., e_d
    q: np.ndarray
    problem: "DualProblem"
    residual: float

    def value(self, rho) -> float:
        return 0.5 * float(self.q @ self.problem.inverse_matrix(rho) @ self.q)

    def maximizer(self) -> ConfigFunction:
        vals = sum(qi * u.values for qi, u in zip(self.q, self.u))
        return ConfigFunction(self.u[0].space, vals)


class DualProblem:
    """ν*(ρ, Λ, q) solved once per sector (particle number in Λ⁺, exterior window).

    The maximisers do not depend on ρ; ρ enters only through the sector
    weights, so ``inverse_matrix(ρ)`` is a polynomial evaluation.
    """

    def __init__(self, dom: Domain, model, cap=DEFAULT_SITE_CAP, tol=DEFAULT_TOL):
        self.dom = dom
        self.model = model
        self.d = dom.dim
        st = dom.structure
        self.bonds = list(st.enlarged_bonds)
        self.plus = st.enlarged.sites
        sites = sorted(set(needed_sites(dom, self.bonds, model)) | set(self.plus))
        check_cap(len(sites), cap, "dual support")
        self.space = StateSpace(sites, cap=cap)
        self.exterior = [s for s in sites if s not in set(self.plus)]
        self.edges = edge_list(self.space, self.bonds, model, self.d)
        self.tol = tol

    @cached_property
    def system(self) -> EdgeSystem:
        e = self.edges
        return EdgeSystem(self.space.size, e.src, e.dst, e.rate)

    @cached_property
    def _solutions(self):
        e, d = self.edges, self.d
        us, res = [], 0.0
        for j in range(d):
            s = e.offsets(np.eye(d)[j])
            out = self.system.minimize(-s / e.rate, tol=self.tol)
            us.append(out.x)
            res = max(res, out.residual)
        return us, res

    @property
    def maximizers(self) -> list:
        return self._solutions[0]

    @property
    def residual(self) -> float:
        return self._solutions[1]

    @cached_property
    def _moments(self):
        """H_k[i, j] = Σ over edges with k occupied sites of (π ℓ_{e_i})(π u_j)."""
        e, d = self.edges, self.d
        n = self.space.n
        H = np.zeros((n + 1, d, d))
        offs = [e.offsets(np.eye(d)[i]) for i in range(d)]
        for j, u in enumerate(self.maximizers):
            du = e.delta(u)
            for i in range(d):
                H[:, i, j] = np.bincount(e.ones, offs[i] * du, n + 1)
        return H

    def inverse_matrix(self, rho) -> np.ndarray:
        """D̄*^{-1}(ρ, Λ)."""
        check_density(rho)
        n = self.space.n
        k = np.arange(n + 1)
        w = bernoulli_factor(rho, k, n)
        M = np.tensordot(w, self._moments, axes=1) / (2.0 * chi(rho) * len(self.dom))
        return 0.5 * (M + M.T)

    def matrix(self, rho) -> np.ndarray:
        return np.linalg.inv(self.inverse_matrix(rho))

    def solve(self, q) -> NuStarResult:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        us = [ConfigFunction(self.space, u) for u in self.maximizers]
        return NuStarResult(us, q, self, self.residual)

    def sector_keys(self) -> np.ndarray:
        sp = self.space
        n_plus = sp.count(self.plus)
        ext = sp.sub_index(self.exterior) if self.exterior else np.zeros(sp.size, dtype=np.int64)
        return n_plus * (1 << len(self.exterior)) + ext

    def sector_mean(self, values) -> np.ndarray:
        """E[f | G_{Λ⁺}]: uniform average inside each sector."""
        key = self.sector_keys()
        num = np.bincount(key, values)
        den = np.bincount(key)
        return (num / np.maximum(den, 1))[key]


# --- convenience front ends -------------------------------------------------


def solve_nu(rho, dom: Domain, p, model, cap=DEFAULT_SITE_CAP) -> NuResult:
    return PrimalProblem(dom, model, cap).solve(rho, p)


def solve_nu_star(dom: Domain, q, model, cap=DEFAULT_SITE_CAP) -> NuStarResult:
    return DualProblem(dom, model, cap).solve(q)


@dataclass
class Matrices:
    D: np.ndarray
    D_star: np.ndarray
    c: np.ndarray
    c_star: np.ndarray
    rho: float


def convention_matrices(d: int, rho: float) -> Matrices:
    """The ρ ∈ {0, 1} convention: conductivities vanish."""
    z = np.zeros((d, d))
    nan = np.full((d, d), np.nan)
    return Matrices(nan, nan, z, z, rho)


def diffusion_matrices(rho, dom: Domain, model, cap=DEFAULT_SITE_CAP,
                       primal: PrimalProblem | None = None,
                       dual: DualProblem | None = None) -> Matrices:
    """(D̄, D̄*, c̄, c̄*) at density ρ on Λ."""
    if rho in (0.0, 1.0):
        return convention_matrices(dom.dim, rho)
    primal = primal or PrimalProblem(dom, model, cap)
    dual = dual or DualProblem(dom, model, cap)
    D = primal.matrix(rho)
    Ds = dual.matrix(rho)
    Ds = 0.5 * (Ds + Ds.T)
    return Matrices(D, Ds, 2 * chi(rho) * D, 2 * chi(rho) * Ds, rho)


# --- master quantity J -------------------------------------------------------


@dataclass
class MasterQuantityReport:
    rho: float
    p: np.ndarray
    q: np.ndarray
    nu: float
    nu_star: float
    J: float
    J_quadratic: float
    slope: np.ndarray
    slope_expected: np.ndarray
    v_J: ConfigFunction
    v_p: ConfigFunction
    u_q: ConfigFunction
    residual: float
    extras: dict = field(default_factory=dict)


class MasterQuantity:
    """J(ρ, Λ, p, q) and its optimiser, all evaluated on the dual state space."""

    def __init__(self, rho, dom: Domain, model, cap=DEFAULT_SITE_CAP,
                 primal: PrimalProblem | None = None, dual: DualProblem | None = None):
        check_density(rho)
        self.rho = rho
        self.dom = dom
        self.primal = primal or PrimalProblem(dom, model, cap)
        self.dual = dual or DualProblem(dom, model, cap)
        self.space = self.dual.space
        self.edges = self.dual.edges
        self.weight = self.edges.prob(rho) * self.edges.rate
        self.prob_edges = self.edges.prob(rho)
        self.norm = 2.0 * chi(rho) * len(dom)
        self.interior = self.primal.interior

    def v_p(self, p) -> ConfigFunction:
        w, _, _ = self.primal.corrector_values(self.rho, p)
        return self.primal.lift(p, w, self.space)

    def u_q(self, q) -> ConfigFunction:
        return self.dual.solve(q).maximizer()

    def v_J(self, p, q) -> ConfigFunction:
        vals = self.u_q(q).values - self.v_p(p).values
        vals = vals - self.dual.sector_mean(vals)
        return ConfigFunction(self.space, vals)

    def functional(self, p, q, w) -> float:
        """J(ρ, Λ, p, q; w)."""
        e = self.edges
        dw = e.delta(w.values if isinstance(w, ConfigFunction) else w)
        terms = (-0.5 * self.weight * dw**2 - self.weight * e.offsets(p) * dw
                 + self.prob_edges * e.offsets(q) * dw)
        return float(terms.sum()) / self.norm

    def quadratic(self, w) -> float:
        """(1/(4χ|Λ|)) Σ_b ⟨c_b (π_b w)²⟩_ρ."""
        dw = self.edges.delta(w.values if isinstance(w, ConfigFunction) else w)
        return float(np.sum(self.weight * dw**2)) / (2.0 * self.norm)

    def slope(self, w) -> np.ndarray:
        """(1/(2χ|Λ|)) Σ_{x∈Λ} ⟨∇_{x,e_i} w⟩_ρ for each i."""
        e = self.edges
        dw = e.delta(w.values if isinstance(w, ConfigFunction) else w)
        return np.array([np.sum(self.prob_edges * dw * e.sign * (e.direction == i))
                         for i in range(self.dom.dim)]) / self.norm

    def harmonic_projection(self, f) -> ConfigFunction:
        """f + h with h ∈ F_0(Λ⁻) minimising Σ_b ⟨c_b (π_b(f + h))²⟩_ρ."""
        vals = f.values if isinstance(f, ConfigFunction) else np.asarray(f, dtype=float)
        e = self.edges
        if not self.interior:
            return ConfigFunction(self.space, vals.copy())
        sub = self.space.sub_index(self.interior)
        sysm = EdgeSystem(1 << len(self.interior), sub[e.src], sub[e.dst], self.weight)
        h = sysm.minimize(e.delta(vals)).x
        return ConfigFunction(self.space, vals + h[sub])

    def is_harmonic(self, w, atol=1e-9) -> float:
        """Max violation of Σ_b ⟨c π_b w π_b g⟩ = 0 over indicators g of Λ⁻ configurations."""
        vals = w.values if isinstance(w, ConfigFunction) else w
        e = self.edges
        sub = self.space.sub_index(self.interior) if self.interior else np.zeros(self.space.size, int)
        sysm = EdgeSystem(1 << len(self.interior), sub[e.src], sub[e.dst], self.weight)
        return float(np.max(np.abs(sysm.load(e.delta(vals)))))

    def report(self, p, q) -> MasterQuantityReport:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        nu_res = self.primal.solve(self.rho, p)
        dual = self.dual.solve(q)
        nu_star = dual.value(self.rho)
        vj = self.v_J(p, q)
        D_star_inv = self.dual.inverse_matrix(self.rho)
        return MasterQuantityReport(
            rho=self.rho, p=p, q=q, nu=nu_res.value, nu_star=nu_star,
            J=nu_res.value + nu_star - float(p @ q), J_quadratic=self.quadratic(vj),
            slope=self.slope(vj), slope_expected=D_star_inv @ q - p,
            v_J=vj, v_p=self.v_p(p), u_q=dual.maximizer(),
            residual=max(nu_res.residual, dual.residual),
        )


def master_J(rho, dom: Domain, p, q, model, cap=DEFAULT_SITE_CAP) -> MasterQuantityReport:
    return MasterQuantity(rho, dom, model, cap).report(p, q)
