"""Jump-rate models c_b(η) for speed-change Kawasaki dynamics.

A model is a local rule: for the bond seen from a base site ``x`` in the
direction ``s * e_i`` (``s = ±1``) it lists the offsets of the sites it reads
and a vectorised function of their occupations.  Rates of the unordered bond
``{x, x + e_i}`` are always computed from the ``(x, i, +1)`` view; the
``validate`` routine checks that the ``-1`` view from the other endpoint
agrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import BondSet, bond_endpoints, shift, unit

Rule = Callable[[int, int, int, object], tuple]


def _bits(n_configs: int, k: int) -> np.ndarray:
    idx = np.arange(n_configs)
    return ((idx[:, None] >> np.arange(k)) & 1).astype(np.int8)


@dataclass(frozen=True)
class RateModel:
    """Jump-rate law with range ``r`` and ellipticity bound ``lam``.

    ``rule(i, s, d, bond)`` returns ``(offsets, func)`` where ``offsets`` are
    relative to the base site and ``func`` maps an ``(n, k)`` occupation array
    to ``n`` rates.  ``bond`` is the canonical ``(x, i)`` pair and is only
    used by disordered models.
    """

    kind: str
    r: int
    lam: float
    rule: Rule = field(repr=False, compare=False)
    params: tuple = ()
    field_: dict | None = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}({', '.join(f'{p:g}' for p in self.params)})"

    @property
    def disordered(self) -> bool:
        return self.field_ is not None

    def local(self, x, i: int, s: int, d: int):
        """Absolute window sites and evaluator for the bond seen from ``x`` along ``s e_i``."""
        x = tuple(x)
        if s == 1:
            bond = (x, i)
        else:
            bond = (shift(x, tuple(-v for v in unit(i, d))), i)
        offsets, func = self.rule(i, s, d, bond)
        return [shift(x, o) for o in offsets], func

    def window(self, b, d: int) -> list:
        x, i = b
        sites, _ = self.local(x, i, 1, d)
        return sites

    def rates(self, b, occ: np.ndarray, d: int) -> np.ndarray:
        """Rates of bond ``b`` for window occupations ``occ`` (shape ``(n, k)``)."""
        x, i = b
        _, func = self.local(x, i, 1, d)
        occ = np.asarray(occ)
        return np.asarray(func(occ), dtype=float) * np.ones(occ.shape[0])

    def table(self, b, d: int):
        """Window sites and the rate for every window configuration (bit j ↔ site j)."""
        sites = self.window(b, d)
        occ = _bits(2 ** len(sites), len(sites))
        return sites, self.rates(b, occ, d)


def ssep() -> RateModel:
    """Symmetric simple exclusion: c ≡ 1."""

    def rule(i, s, d, bond):
        return [], lambda occ: np.ones(occ.shape[0])

    return RateModel("ssep", 0, 1.0, rule)


def _witness_offsets(i, s, d):
    e = unit(i, d)
    back = tuple(-s * v for v in e)
    ahead = tuple(2 * s * v for v in e)
    return [back, ahead]


def speed_change(a: float) -> RateModel:
    """c_{x,x+e_i} = 1 + a(η_{x-e_i} + η_{x+2e_i})."""
    if a < 0:
        raise ValueError("speed_change needs a >= 0")
    if a == 0:
        return ssep()

    def rule(i, s, d, bond):
        return _witness_offsets(i, s, d), lambda occ: 1.0 + a * (occ[:, 0] + occ[:, 1])

    return RateModel("speed_change", 2, 1.0 + 2.0 * a, rule, (float(a),))


def cooperative(a: float) -> RateModel:
    """c_{x,x+e_i} = 1 + a η_{x-e_i} η_{x+2e_i}."""
    if a < 0:
        raise ValueError("cooperative needs a >= 0")
    if a == 0:
        return ssep()

    def rule(i, s, d, bond):
        return _witness_offsets(i, s, d), lambda occ: 1.0 + a * occ[:, 0] * occ[:, 1]

    return RateModel("cooperative", 2, 1.0 + a, rule, (float(a),))


def disordered(field_: dict, base: str = "speed_change") -> RateModel:
    """Bond-disordered speed change: c_b = 1 + a_b(η_{x-e_i} + η_{x+2e_i})."""
    if base != "speed_change":
        raise ValueError("only speed_change disorder is supported")
    fld = {tuple(k): float(v) for k, v in field_.items()}
    if any(v < 0 for v in fld.values()):
        raise ValueError("disorder coefficients must be >= 0")
    amax = max(fld.values(), default=0.0)

    def rule(i, s, d, bond):
        try:
            ab = fld[bond]
        except KeyError:
            raise KeyError(f"bond {bond} has no disorder coefficient") from None
        return _witness_offsets(i, s, d), lambda occ: 1.0 + ab * (occ[:, 0] + occ[:, 1])

    return RateModel("disordered", 2, 1.0 + 2.0 * amax, rule, (amax,), fld)


def sample_disorder(a_max: float, seed: int, bonds) -> RateModel:
    """I.i.d. uniform[0, a_max] coefficients on the given bonds."""
    if a_max < 0:
        raise ValueError("a_max must be >= 0")
    if a_max == 0:
        return ssep()
    bonds = list(bonds.bonds if isinstance(bonds, BondSet) else bonds)
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.0, a_max, size=len(bonds))
    model = disordered(dict(zip(bonds, vals)))
    return RateModel("disordered", 2, 1.0 + 2.0 * a_max, model.rule, (float(a_max),), model.field_)


def custom(name: str, r: int, lam: float, rule: Rule, params: tuple = ()) -> RateModel:
    return RateModel(name, r, lam, rule, params)


def from_config(kind: str, a: float = 0.0, a_max: float = 0.0, seed: int = 0, bonds=None) -> RateModel:
    if kind == "ssep":
        return ssep()
    if kind == "speed_change":
        return speed_change(a)
    if kind == "cooperative":
        return cooperative(a)
    if kind == "disordered":
        if bonds is None:
            raise ValueError("disordered models need a bond set")
        return sample_disorder(a_max, seed, bonds)
    raise ValueError(f"unknown rate kind {kind!r}")


@dataclass
class ValidationReport:
    passed: bool
    lam: float
    min_rate: float
    checks: dict
    witness: dict | None = None

    def summary(self) -> str:
        status = "pass" if self.passed else "fail"
        return f"{status}, λ={self.lam:g}"


def validate(model: RateModel, d: int = 1, bonds=None) -> ValidationReport:
    """Exhaustive check of bounds, locality, endpoint independence and bond symmetry."""
    if bonds is None:
        bonds = [((0,) * d, i) for i in range(d)]
        if model.disordered:
            bonds = [b for b in model.field_ if len(b[0]) == d]
    checks = {"bounds": True, "locality": True, "endpoint_independence": True, "symmetry": True}
    witness = None
    lo, hi = np.inf, -np.inf

    def fail(check, **info):
        nonlocal witness
        checks[check] = False
        if witness is None:
            witness = {"check": check, **info}

    for b in bonds:
        x, i = b
        xs, y = bond_endpoints(b)
        wa, fa = model.local(x, i, 1, d)
        wb, fb = model.local(y, i, -1, d)
        for site in wa:
            if max(abs(u - v) for u, v in zip(site, x)) > model.r:
                fail("locality", bond=b, site=site)
        union = sorted(set(wa) | set(wb) | {x, y})
        occ = _bits(2 ** len(union), len(union))
        pos = {s: k for k, s in enumerate(union)}
        ca = np.asarray(fa(occ[:, [pos[s] for s in wa]]), dtype=float) * np.ones(len(occ))
        cb = np.asarray(fb(occ[:, [pos[s] for s in wb]]), dtype=float) * np.ones(len(occ))
        lo, hi = min(lo, ca.min()), max(hi, ca.max())
        bad = np.flatnonzero((ca < 1 - 1e-12) | (ca > model.lam + 1e-12))
        if bad.size:
            fail("bounds", bond=b, config=dict(zip(union, occ[bad[0]].tolist())), rate=float(ca[bad[0]]))
        bad = np.flatnonzero(np.abs(ca - cb) > 1e-12)
        if bad.size:
            fail("symmetry", bond=b, config=dict(zip(union, occ[bad[0]].tolist())))
        for site in (x, y):
            flipped = occ.copy()
            flipped[:, pos[site]] ^= 1
            cf = np.asarray(fa(flipped[:, [pos[s] for s in wa]]), dtype=float) * np.ones(len(occ))
            bad = np.flatnonzero(np.abs(cf - ca) > 1e-12)
            if bad.size:
                fail("endpoint_independence", bond=b, site=site,
                     config=dict(zip(union, occ[bad[0]].tolist())))
    if not model.disordered:
        checks["homogeneity"] = True
        z = (3,) * d
        for i in range(d):
            base = model.table(((0,) * d, i), d)[1]
            moved = model.table((z, i), d)[1]
            if not np.allclose(base, moved, atol=1e-12):
                fail("homogeneity", bond=((0,) * d, i))
    passed = all(checks.values())
    return ValidationReport(passed, float(hi), float(lo), checks, witness)


def bond_window_union(model: RateModel, bonds, d: int) -> set:
    out = set()
    for b in bonds:
        out.update(bond_endpoints(b))
        out.update(model.window(b, d))
    return out
