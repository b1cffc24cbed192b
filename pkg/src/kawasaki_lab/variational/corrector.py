"""Correctors, the stationary quadratic form c(ρ; F), μ(Λ, ξ) and the density-free corrector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..ensemble import ConfigFunction, StateSpace, chi, rate_values
from ..lattice import (DEFAULT_SITE_CAP, Domain, check_cap, make_cube, make_triadic, set_dist,
                       shift, translate, triadic_partition, unit)
from .grand import DualProblem, PrimalProblem, bernoulli_factor

DEFAULT_GRID = np.arange(1, 64) / 64.0


@dataclass
class Corrector:
    """φ_{ρ,Λ,ξ} ∈ F_0(Λ⁻), mean zero under P_ρ."""

    phi: ConfigFunction
    xi: np.ndarray
    rho: float
    dom: Domain
    residual: float


def corrector(rho, dom: Domain, xi, model, primal: PrimalProblem | None = None) -> Corrector:
    primal = primal or PrimalProblem(dom, model)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    w, res, _ = primal.corrector_values(rho, xi)
    return Corrector(ConfigFunction(primal.interior_space, w, primal.interior), xi, rho, dom, res)


def corrector_field(rho, dom: Domain, model, primal: PrimalProblem | None = None,
                    scale: float | None = None) -> list:
    """(φ_{e_1}, ..., φ_{e_d}) scaled by ``scale`` (default 1/|Λ|), i.e. Φ_L."""
    primal = primal or PrimalProblem(dom, model)
    scale = 1.0 / len(dom) if scale is None else scale
    out = []
    for j in range(dom.dim):
        c = corrector(rho, dom, np.eye(dom.dim)[j], model, primal)
        out.append(ConfigFunction(c.phi.space, scale * c.phi.values, c.phi.support))
    return out


def quadratic_c(rho, F, model, d: int | None = None, cap=DEFAULT_SITE_CAP) -> np.ndarray:
    """c(ρ; F)_{jk} = Σ_i ⟨c_{0,e_i} T^i_j T^i_k⟩_ρ with T^i_j = π_{0,e_i}(ℓ_{e_j} + Σ_y τ_y F_j).

    ``F`` is a sequence of d local functions; ``None`` stands for F = 0.
    """
    if F is None:
        if d is None:
            raise ValueError("dimension needed when F is None")
        F = [None] * d
    F = list(F)
    d = len(F) if d is None else d
    if rho in (0.0, 1.0):
        return np.zeros((d, d))
    origin = (0,) * d
    out = np.zeros((d, d))
    for i in range(d):
        e = unit(i, d)
        bond = (origin, i)
        sites = {origin, e} | set(model.window(bond, d))
        shifts = []
        for j, f in enumerate(F):
            ys = set()
            if f is not None:
                for t in f.space.sites:
                    for s in (origin, e):
                        ys.add(tuple(a - b for a, b in zip(s, t)))
                for y in ys:
                    sites.update(shift(t, y) for t in f.space.sites)
            shifts.append(sorted(ys))
        check_cap(len(sites), cap, "translate window")
        sp = StateSpace(sorted(sites), cap=cap)
        perm = sp.exchange_index(origin, e)
        prob = bernoulli_factor(rho, sp.counts, sp.n)
        rate = rate_values(model, bond, sp, d)
        T = []
        for j, f in enumerate(F):
            g = np.zeros(sp.size)
            if f is not None:
                for y in shifts[j]:
                    g += f.values[sp.sub_index([shift(t, y) for t in f.space.sites])]
            t = g[perm] - g
            if i == j:
                t = t + (sp.occ(origin) - sp.occ(e))
            T.append(t)
        for j in range(d):
            for k in range(d):
                out[j, k] += np.sum(prob * rate * T[j] * T[k])
    return 0.5 * (out + out.T)


@dataclass
class RReport:
    R: np.ndarray
    c_F: np.ndarray
    c_ref: np.ndarray
    c_star_ref: np.ndarray
    reference_side: int
    finite_box_reference: bool = True


def R_of_F(rho, F, model, reference: Domain | None = None, d: int | None = None) -> RReport:
    """R(ρ; F) = c(ρ; F) − c̄(ρ, Λ_ref); the limit c(ρ) is replaced by a finite box."""
    d = len(F) if F is not None else (d or 1)
    reference = reference or make_cube(9, d)
    cF = quadratic_c(rho, F, model, d)
    if rho in (0.0, 1.0):
        z = np.zeros((d, d))
        return RReport(cF, cF, z, z, reference.side)
    D = PrimalProblem(reference, model).matrix(rho)
    Ds = DualProblem(reference, model).matrix(rho)
    c_ref = 2 * chi(rho) * D
    return RReport(cF - c_ref, cF, c_ref, 2 * chi(rho) * Ds, reference.side)


def sublinearity_ratio(rho, dom: Domain, xi, model) -> float:
    """⟨φ²⟩_ρ / (|Λ| L²)."""
    c = corrector(rho, dom, xi, model)
    p = bernoulli_factor(rho, c.phi.space.counts, c.phi.space.n)
    return float(np.dot(p, c.phi.values**2)) / (len(dom) * dom.side**2)


@dataclass
class SupNormFit:
    sides: list
    sup_norms: list
    constant: float


def optimizer_sup_norms(rho, sides, xi, model, d: int = 1) -> SupNormFit:
    """‖φ_{ρ,Λ_L,ξ}‖_∞ against the shape L^{d+2} log L; the constant is fitted, not asserted."""
    norms = []
    for L in sides:
        c = corrector(rho, make_cube(L, d), xi, model)
        norms.append(float(np.max(np.abs(c.phi.values))))
    shape = [L ** (d + 2) * np.log(L) for L in sides]
    ratios = [n / s for n, s in zip(norms, shape) if s > 0]
    return SupNormFit(list(sides), norms, max(ratios, default=0.0))


# --- the Dirichlet functional and μ ------------------------------------------------


def dirichlet_functional(primal: PrimalProblem, rho, xi, w=None) -> float:
    """(1/|Λ|) Σ_b ⟨½ c_b (π_b(ℓ_ξ + w))²⟩_ρ; zero at the endpoint densities."""
    if rho in (0.0, 1.0):
        return 0.0
    w = np.zeros(primal.n_nodes) if w is None else np.asarray(getattr(w, "values", w), dtype=float)
    return primal.energy(rho, xi, w) / len(primal.dom)


@dataclass
class MuResult:
    value: float
    dual_value: float
    w: np.ndarray
    rho_argmax: float
    grid: np.ndarray
    excess: np.ndarray
    reference_side: int
    finite_box_reference: bool = True
    info: dict = field(default_factory=dict)


def mu(dom: Domain, xi, model, grid=None, reference: Domain | None = None,
       primal: PrimalProblem | None = None) -> MuResult:
    """μ(Λ, ξ) = inf_v sup_ρ [(1/|Λ|)Σ⟨½c(π(ℓ_ξ+v))²⟩_ρ − ½ξ·c̄_ref(ρ)ξ] over the ρ-grid.

    Solved through its concave dual over mixtures of the grid densities; the
    reported value is the primal objective at the recovered minimiser, so it
    upper-bounds the true grid minimax by at most ``value − dual_value``.
    The endpoints ρ ∈ {0, 1} contribute 0 by convention.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    primal = primal or PrimalProblem(dom, model)
    reference = reference or dom
    ref = primal if reference == dom else PrimalProblem(reference, model)
    target = np.array([0.5 * chi(r) * 2 * float(xi @ ref.matrix(r) @ xi) for r in grid])
    size = len(dom)

    def inner(lams):
        lams = np.clip(lams, 0, None)
        if lams.sum() <= 0:
            lams = np.full(len(grid), 1.0 / len(grid))
        w, _, _ = primal.mixture_corrector(grid, lams / lams.sum(), xi)
        vals = np.array([primal.energy(r, xi, w) / size for r in grid]) - target
        return w, vals

    def objective(lams):
        _, vals = inner(lams)
        return -float(np.dot(lams, vals)), -vals

    k = len(grid)
    x0 = np.full(k, 1.0 / k)
    out = minimize(objective, x0, jac=True, method="SLSQP", bounds=[(0, 1)] * k,
                   constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0,
                                 "jac": lambda x: np.ones_like(x)}],
                   options={"maxiter": 200, "ftol": 1e-14})
    lams = np.clip(out.x, 0, None)
    lams /= lams.sum()
    w, vals = inner(lams)
    dual_value = float(np.dot(lams, vals))
    excess = np.concatenate([[0.0], vals, [0.0]])
    value = float(excess.max())
    arg = int(np.argmax(vals))
    return MuResult(value, dual_value, w, float(grid[arg]), grid, vals, reference.side,
                    info={"iterations": out.nit, "success": bool(out.success)})


# --- density-free corrector ------------------------------------------------------


@dataclass
class DensityFreeCorrector:
    phi: ConfigFunction          # on □_m⁻
    centers: list
    densities: dict              # particle count in □_m⁻ -> truncated density used
    primal: PrimalProblem        # the □_m primal problem, for evaluating functionals


def truncated_counts(n_sites: int, eps: float) -> tuple:
    """(M_*, M^*): the extreme elements of M_ε = {M ≥ 1 : ε ≤ M/n ≤ 1 − ε}."""
    admissible = [M for M in range(1, n_sites + 1) if eps <= M / n_sites <= 1 - eps]
    if not admissible:
        raise ValueError(f"M_ε is empty for ε={eps} and {n_sites} sites")
    return admissible[0], admissible[-1]


def density_free_corrector(m: int, n: int, eps: float, xi, model, d: int = 1,
                           cap=DEFAULT_SITE_CAP) -> DensityFreeCorrector:
    """φ̂ = Σ_z φ_{ρ̂, z+□_n, ξ} with ρ̂ the empirical density of □_m⁻ clipped to M_ε.

    Only subcubes z + □_n with dist(z, ∂□_m) > 3^n contribute. At ε = 1/2 the
    truncation collapses to the ρ = 1/2 corrector for every configuration.
    """
    if not 0 < eps <= 0.5:
        raise ValueError("ε must lie in (0, 1/2]")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    big = make_triadic(m, d)
    small = make_triadic(n, d)
    primal_big = PrimalProblem(big, model, cap)
    U = primal_big.interior
    space = primal_big.interior_space
    boundary = big.structure.boundary.sites
    centers = [z for z in triadic_partition(m, n, d) if set_dist([z], boundary) > 3**n]
    counts = space.counts
    primal_small = PrimalProblem(small, model, cap)
    small_int = primal_small.interior
    values = np.zeros(space.size)
    if eps >= 0.5:
        densities = {int(M): 0.5 for M in np.unique(counts)}
    else:
        lo, hi = truncated_counts(len(U), eps)
        densities = {int(M): min(max(int(M), lo), hi) / len(U) for M in np.unique(counts)}
    cache = {}
    for rho in set(densities.values()):
        cache[rho], _, _ = primal_small.corrector_values(rho, xi)
    rho_of = np.array([densities[int(M)] for M in counts])
    for z in centers:
        moved = translate(Domain(d, small_int), z).sites if small_int else ()
        if any(s not in set(U) for s in moved):
            raise ValueError("subcube interior leaves □_m⁻")
        idx = space.sub_index(moved) if moved else np.zeros(space.size, dtype=np.int64)
        for rho, w in cache.items():
            sel = rho_of == rho
            values[sel] += w[idx[sel]]
    return DensityFreeCorrector(ConfigFunction(space, values, U), centers, densities, primal_big)
