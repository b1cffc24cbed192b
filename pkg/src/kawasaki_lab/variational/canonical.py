"""Canonical-ensemble quantities: D̂, D̂*, CLT variances and local equivalence of ensembles.

Canonical problems use the interior bonds Λ* by default, so that exchanges
never leave the sector {Σ_{x∈Λ} η_x = M, η = ζ outside Λ}.  The primal
quantity can also be evaluated on the enlarged bonds; then the sites of
Λ⁺ \\ Λ are part of the frozen exterior ζ.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import comb
from scipy.stats import hypergeom

from ..ensemble import ConfigFunction, StateSpace, chi, rate_values, translate
from ..lattice import DEFAULT_SITE_CAP, Domain, bond_endpoints, make_cube, shift
from .grand import needed_sites
from .solvers import DEFAULT_TOL, EdgeSystem


class EmptySector(ValueError):
    pass


@dataclass
class CanonicalMatrices:
    D: np.ndarray
    D_star: np.ndarray
    c: np.ndarray
    c_star: np.ndarray
    M: int
    rho_hat: float


class CanonicalProblem:
    """The sector (Λ, M, ζ) with exchange edges along a bond set."""

    def __init__(self, dom: Domain, M: int, model, zeta: dict | None = None,
                 bonds: str = "interior", cap=DEFAULT_SITE_CAP):
        if not 0 <= M <= len(dom):
            raise EmptySector(f"M={M} outside [0, {len(dom)}]")
        if bonds not in ("interior", "enlarged"):
            raise ValueError("bonds must be 'interior' or 'enlarged'")
        st = dom.structure
        self.dom, self.M, self.model, self.d = dom, M, model, dom.dim
        self.bond_flavor = bonds
        self.bonds = list(st.interior_bonds if bonds == "interior" else st.enlarged_bonds)
        region = set(dom.sites)
        sites = sorted(region | set(needed_sites(dom, self.bonds, model)))
        self.space = StateSpace(sites, cap=cap)
        self.exterior = [s for s in sites if s not in region]
        zeta = {tuple(k): int(v) for k, v in (zeta or {}).items()}
        unknown = set(zeta) - set(self.exterior)
        if unknown:
            raise ValueError(f"ζ fixes sites {sorted(unknown)} that are not exterior window sites")
        self.zeta = {s: zeta.get(s, 0) for s in self.exterior}
        mask = self.space.count(dom.sites) == M
        for s, v in self.zeta.items():
            mask &= self.space.occ(s) == v
        self.configs = np.flatnonzero(mask)
        if self.configs.size == 0:
            raise EmptySector("empty sector")
        self.rho_hat = M / len(dom)
        self.interior = st.interior.sites
        self._build_edges()

    def _build_edges(self):
        sp, sec = self.space, self.configs
        src, dst, rate, sign, direc, kin, kout = [], [], [], [], [], [], []
        sub = sp.sub_index(self.interior) if self.interior else np.zeros(sp.size, dtype=np.int64)
        for b in self.bonds:
            x, y = bond_endpoints(b)
            ox, oy = sp.occ(x)[sec], sp.occ(y)[sec]
            sel = np.flatnonzero(ox != oy)
            moved = sp.exchange_index(x, y)[sec[sel]]
            src.append(sel)
            dst.append(np.searchsorted(sec, moved))
            rate.append(rate_values(self.model, b, sp, self.d)[sec[sel]])
            sign.append((ox - oy)[sel].astype(float))
            direc.append(np.full(sel.size, b[1]))
            kin.append(sub[sec[sel]])
            kout.append(sub[moved])
        cat = np.concatenate
        self.src, self.rate, self.sign, self.direction = cat(src), cat(rate), cat(sign), cat(direc)
        self.interior_src, self.interior_dst = cat(kin), cat(kout)
        if self.bond_flavor == "interior":
            self.dst = cat(dst)

    @property
    def size(self) -> int:
        return int(self.configs.size)

    @property
    def norm(self) -> float:
        return 2.0 * chi(self.rho_hat) * len(self.dom)

    def offsets(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return p[self.direction] * self.sign

    @cached_property
    def system(self) -> EdgeSystem:
        """Sector Hessian; equals 2(−L_{Λ,ζ}) as a matrix on the sector."""
        if self.bond_flavor != "interior":
            raise ValueError("sector dynamics need interior bonds")
        return EdgeSystem(self.size, self.src, self.dst, self.rate)

    # -- D̂ -----------------------------------------------------------------
    def primal_matrix(self, tol=DEFAULT_TOL) -> np.ndarray:
        d = self.d
        if chi(self.rho_hat) == 0:
            return np.full((d, d), np.nan)
        n_nodes = 1 << len(self.interior)
        weight = self.rate / self.size
        sysm = EdgeSystem(n_nodes, self.interior_src, self.interior_dst, weight)
        grads = []
        for j in range(d):
            s = self.offsets(np.eye(d)[j])
            w = sysm.minimize(s, tol=tol).x if n_nodes > 1 else np.zeros(1)
            grads.append(s + w[self.interior_dst] - w[self.interior_src])
        G = np.array([[np.sum(weight * gi * gj) for gj in grads] for gi in grads])
        D = G / self.norm
        return 0.5 * (D + D.T)

    # -- D̂* ----------------------------------------------------------------
    @cached_property
    def dual_maximizers(self) -> list:
        return [self.system.minimize(-self.offsets(np.eye(self.d)[j]) / self.rate).x
                for j in range(self.d)]

    def dual_inverse_matrix(self) -> np.ndarray:
        d = self.d
        if chi(self.rho_hat) == 0:
            return np.full((d, d), np.nan)
        offs = [self.offsets(np.eye(d)[i]) for i in range(d)]
        G = np.array([[np.sum(offs[i] * (u[self.dst] - u[self.src])) for u in self.dual_maximizers]
                      for i in range(d)])
        M = G / self.size / self.norm
        return 0.5 * (M + M.T)

    def matrices(self) -> CanonicalMatrices:
        D = self.primal_matrix()
        if self.bond_flavor == "interior":
            inv = self.dual_inverse_matrix()
            Ds = np.linalg.inv(inv) if np.all(np.isfinite(inv)) else inv
        else:
            Ds = np.full_like(D, np.nan)
        x = chi(self.rho_hat)
        return CanonicalMatrices(D, Ds, 2 * x * np.nan_to_num(D), 2 * x * np.nan_to_num(Ds),
                                 self.M, self.rho_hat)

    # -- functions on the sector ----------------------------------------------
    def restrict(self, f) -> np.ndarray:
        if isinstance(f, ConfigFunction):
            if f.space != self.space:
                f = f.lift(self.space)
            return f.values[self.configs]
        f = np.asarray(f, dtype=float)
        return f if f.size == self.size else f[self.configs]

    def generator(self, values) -> np.ndarray:
        """L_{Λ,ζ} f on the sector."""
        return -0.5 * self.system.apply(np.asarray(values, dtype=float))

    def minus_generator_dense(self) -> np.ndarray:
        return 0.5 * self.system.dense()


def canonical_matrices(dom: Domain, M: int, model, zeta=None, bonds="interior",
                       cap=DEFAULT_SITE_CAP) -> CanonicalMatrices:
    return CanonicalProblem(dom, M, model, zeta, bonds, cap).matrices()


# --- CLT variance --------------------------------------------------------------


def clt_variance(problem: CanonicalProblem, f, g=None, tol=DEFAULT_TOL, atol=1e-10) -> float:
    """Δ[f, g] = ⟨f (−L_{Λ,ζ})^{-1} g⟩_{Λ,M,ζ} for mean-zero f, g."""
    fv = problem.restrict(f)
    gv = fv if g is None else problem.restrict(g)
    scale = max(1.0, np.abs(fv).max(initial=0), np.abs(gv).max(initial=0))
    if abs(fv.mean()) > atol * scale or abs(gv.mean()) > atol * scale:
        raise ValueError("f and g must have zero canonical mean")
    if not np.any(gv) or not np.any(fv):
        return 0.0
    if problem.size == 1:
        raise ValueError("the sector only carries constants")
    h = problem.system.solve(2.0 * gv, tol=tol).x
    return float(np.mean(fv * h))


@dataclass
class SpecialFunctions:
    A: list   # microscopic currents, one sector vector per direction
    B: list
    H: list | None
    r_F: int | None


def support_radius(sites) -> int:
    """r(F): the smallest r with supp F ⊂ Λ_r."""
    m = max((max(abs(c) for c in s) for s in sites), default=0)
    return 2 * m + 1


def special_functions(problem: CanonicalProblem, F=None) -> SpecialFunctions:
    """A_L = −Σ_{b∈Λ*} π_b ℓ, B = −L_{Λ,ζ} ℓ and H = L_{Λ,ζ}(Σ_{x∈Λ_{L−r(F)−1}} τ_x F)."""
    d, sp = problem.d, problem.space
    A, B = [], []
    for i in range(d):
        a = np.zeros(sp.size)
        bvec = np.zeros(sp.size)
        for b in problem.bonds:
            if b[1] != i:
                continue
            x, y = bond_endpoints(b)
            cur = (sp.occ(y) - sp.occ(x)).astype(float)
            a += cur
            bvec += rate_values(problem.model, b, sp, d) * cur
        A.append(a[problem.configs])
        B.append(bvec[problem.configs])
    H, rF = None, None
    if F is not None:
        F = list(F)
        if len(F) != d:
            raise ValueError("F needs one component per direction")
        rF = max(support_radius(f.space.sites) for f in F)
        L = problem.dom.side
        if L is None:
            raise ValueError("special functions need a cube domain")
        inner = make_cube(L - rF - 1, d).sites if L - rF - 1 >= 1 else ()
        region = set(problem.dom.sites)
        H = []
        for f in F:
            total = np.zeros(sp.size)
            for x in inner:
                moved = [shift(s, x) for s in f.space.sites]
                if any(m not in region for m in moved):
                    raise ValueError(f"translate by {x} leaves Λ")
                total += translate(f, x, target=sp).values
            H.append(problem.generator(total[problem.configs]))
    return SpecialFunctions(A, B, H, rF)


def clt_identity(problem: CanonicalProblem, q) -> tuple:
    """(|Λ|^{-1} Δ[q·A_L], χ(M/|Λ|) q·D̂*^{-1} q)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    sf = special_functions(problem)
    qa = sum(qi * a for qi, a in zip(q, sf.A))
    lhs = clt_variance(problem, qa) / len(problem.dom)
    rhs = chi(problem.rho_hat) * float(q @ problem.dual_inverse_matrix() @ q)
    return lhs, rhs


# --- local equivalence of ensembles ------------------------------------------


@dataclass
class EquivalenceReport:
    canonical: float
    grand: float
    gap: float
    abs_grand: float
    bound1: float
    precondition1: bool
    nonneg_sectors: bool
    holds1: bool
    bound2: float
    precondition2: bool
    holds2: bool
    eps: float

    @property
    def status2(self) -> str:
        if not self.precondition2:
            return "not guaranteed"
        return "holds" if self.holds2 else "violated"

    @property
    def status1(self) -> str:
        if not (self.precondition1 and self.nonneg_sectors):
            return "not guaranteed"
        return "holds" if self.holds1 else "violated"


def canonical_marginal(n: int, M: int, k: int) -> np.ndarray:
    """P_{Λ,M}(σ) of a fixed configuration σ on k sites, indexed by |σ| = 0..k."""
    j = np.arange(k + 1)
    return hypergeom.pmf(j, n, M, k) / comb(k, j)


def ensemble_equivalence(L: int, M: int, f: ConfigFunction, d: int = 1, ell: int | None = None,
                         eps: float | None = None) -> EquivalenceReport:
    """Compare ⟨f⟩_{Λ_L,M} with ⟨f⟩_{M/|Λ_L|} for f depending on sites of Λ_ℓ."""
    big = make_cube(L, d)
    n = len(big)
    if not 0 <= M <= n:
        raise ValueError("M out of range")
    ell = support_radius(f.space.sites) if ell is None else ell
    box = make_cube(ell, d)
    if any(s not in box for s in f.space.sites):
        raise ValueError("f is not supported in Λ_ℓ")
    k = f.space.n
    counts = f.space.counts
    rho = M / n
    can = float(np.dot(canonical_marginal(n, M, k)[counts], f.values))
    p_grand = rho**counts * (1 - rho) ** (k - counts)
    grand = float(np.dot(p_grand, f.values))
    absg = float(np.dot(p_grand, np.abs(f.values)))
    # sector means of f over Λ_ℓ
    lifted = f.lift(StateSpace(box.sites))
    nb = lifted.space.counts
    sector_means = np.bincount(nb, lifted.values) / np.bincount(nb)
    nonneg = bool(np.all(sector_means >= -1e-14))
    bound1 = (1 + 4 * (ell**2 / L) ** d) * grand
    pre1 = 10 * ell**2 <= L
    eps_max = min(rho, 1 - rho)
    eps = eps_max if eps is None else eps
    in_M = M >= 1 and eps > 0 and eps <= rho <= 1 - eps
    pre2 = bool(in_M and 10 * ell ** (2 * d) <= eps * L**d)
    bound2 = (ell**2 / L) ** d * absg / eps if eps > 0 else np.inf
    gap = can - grand
    return EquivalenceReport(can, grand, gap, absg, bound1, pre1, nonneg,
                             bool(can <= bound1 + 1e-12), bound2, pre2,
                             bool(abs(gap) <= bound2 + 1e-12), eps)
