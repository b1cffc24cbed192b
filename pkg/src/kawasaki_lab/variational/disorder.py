"""Quenched conductivities of bond-disordered models on triadic cubes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lattice import make_cube
from ..rates import sample_disorder
from .grand import PrimalProblem


def disorder_bonds(m_max: int, d: int = 1, r: int = 2) -> list:
    """Every bond (x, i) whose rate window can touch □_{m_max}."""
    half = (3**m_max) // 2 + r + 1
    coords = np.arange(-half, half + 1)
    grids = np.meshgrid(*([coords] * d), indexing="ij")
    sites = [tuple(int(c) for c in p) for p in zip(*(g.ravel() for g in grids))]
    return [(x, i) for x in sites for i in range(d)]


@dataclass
class DisorderResult:
    rho: float
    a_max: float
    seeds: list
    values: dict                   # m -> array of c̄(ω, ρ, □_m)[0, 0], one per seed
    lam: float
    info: dict = field(default_factory=dict)

    @property
    def chi(self) -> float:
        return self.rho * (1 - self.rho)

    def mean(self, m: int) -> float:
        return float(np.mean(self.values[m]))

    def stderr(self, m: int) -> float:
        v = self.values[m]
        return float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else float("nan")

    def within_bounds(self, tol: float = 1e-9) -> bool:
        lo, hi = 2 * self.chi, 2 * self.chi * self.lam
        return all(np.all(v >= lo - tol) and np.all(v <= hi + tol) for v in self.values.values())

    def mean_non_increasing(self, z: float = 2.0) -> bool:
        """Sample mean does not grow with m beyond z standard errors of the paired difference."""
        ms = sorted(self.values)
        for a, b in zip(ms, ms[1:]):
            diff = np.asarray(self.values[b]) - np.asarray(self.values[a])
            se = np.std(diff, ddof=1) / np.sqrt(len(diff)) if len(diff) > 1 else 0.0
            if diff.mean() > z * se:
                return False
        return True


def quenched_conductivity(a_max: float, seeds, rho: float = 0.5, ms=(0, 1), d: int = 1,
                          cap=None) -> DisorderResult:
    """c̄(ω, ρ, □_m) for each seed; the same sample ω is shared across m."""
    bonds = disorder_bonds(max(ms), d)
    vals = {m: [] for m in ms}
    lam = 1.0
    for s in seeds:
        model = sample_disorder(a_max, int(s), bonds)
        lam = max(lam, 1.0 + 2.0 * a_max)
        for m in ms:
            kw = {} if cap is None else {"cap": cap}
            pr = PrimalProblem(make_cube(3**m, d), model, **kw)
            vals[m].append(2 * rho * (1 - rho) * pr.matrix(rho)[0, 0])
    return DisorderResult(rho, a_max, list(seeds), {m: np.array(v) for m, v in vals.items()}, lam)
