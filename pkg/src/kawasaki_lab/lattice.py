"""Finite lattice geometry: cubes, translates, bonds, boundaries and triadic partitions.

Sites are integer tuples.  A bond is stored as ``(x, i)`` and stands for the
unordered pair ``{x, x + e_i}``.  Every site list is kept in lexicographic
order, which fixes the bit order of configurations everywhere else.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_SITE_CAP = 24


class CapExceeded(ValueError):
    """Raised when an exact enumeration would exceed the site cap."""


Site = tuple
Bond = tuple  # (x, i): the pair {x, x + e_i}


def unit(i: int, d: int) -> tuple:
    e = [0] * d
    e[i] = 1
    return tuple(e)


def shift(x, z) -> tuple:
    return tuple(a + b for a, b in zip(x, z))


def bond_endpoints(b: Bond) -> tuple:
    x, i = b
    y = list(x)
    y[i] += 1
    return x, tuple(y)


def bond_from_pair(x, y) -> Bond:
    """Canonical ``(x, i)`` form of a nearest-neighbour pair given in any order."""
    diff = [b - a for a, b in zip(x, y)]
    if sorted(map(abs, diff)) != [0] * (len(x) - 1) + [1]:
        raise ValueError(f"{x} and {y} are not nearest neighbours")
    i = next(k for k, v in enumerate(diff) if v != 0)
    return (tuple(x), i) if diff[i] == 1 else (tuple(y), i)


def cube_coordinates(L: int) -> list[int]:
    """Integers k with -L/2 < k < L/2."""
    if L < 1:
        raise ValueError("side length must be >= 1")
    return [k for k in range(-L, L + 1) if -L < 2 * k < L]


@dataclass(frozen=True)
class Domain:
    """A finite set of lattice sites with a kind tag.

    ``kind`` is one of ``cube``, ``triadic``, ``translate`` or ``torus``.
    ``side`` is the nominal side length for cube-like kinds and ``center``
    the translation vector.
    """

    dim: int
    sites: tuple
    kind: str = "set"
    side: int | None = None
    center: tuple | None = None
    torus: bool = False
    _index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        sites = tuple(sorted(set(tuple(int(c) for c in s) for s in self.sites)))
        if len(sites) != len(self.sites):
            raise ValueError("sites must be distinct")
        if any(len(s) != self.dim for s in sites):
            raise ValueError("site dimension mismatch")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(sites)})

    def __len__(self):
        return len(self.sites)

    def __contains__(self, x):
        return tuple(x) in self._index

    def __iter__(self):
        return iter(self.sites)

    def position(self, x) -> int:
        return self._index[tuple(x)]

    @property
    def siteset(self) -> frozenset:
        return frozenset(self.sites)

    def as_array(self) -> np.ndarray:
        return np.array(self.sites, dtype=int).reshape(len(self.sites), self.dim)

    @cached_property
    def structure(self) -> "Structure":
        return derive_structure(self)


def make_cube(L: int, d: int = 1, cap: int | None = None) -> Domain:
    """The cube Λ_L = (-L/2, L/2)^d ∩ Z^d.

    Even side lengths collapse onto the next smaller odd cube
    (Λ_4 = Λ_3), as the open-interval convention dictates.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    coords = cube_coordinates(L)
    n = len(coords) ** d
    if cap is not None and n > cap:
        raise CapExceeded(f"|Λ_{L}| = {n} exceeds the site cap {cap}")
    sites = tuple(itertools.product(coords, repeat=d))
    return Domain(d, sites, kind="cube", side=L, center=(0,) * d)


def make_triadic(m: int, d: int = 1, cap: int | None = None) -> Domain:
    """The triadic cube □_m = Λ_{3^m}."""
    if m < 0:
        raise ValueError("m must be >= 0")
    dom = make_cube(3**m, d, cap)
    return Domain(d, dom.sites, kind="triadic", side=3**m, center=(0,) * d)


def translate(dom: Domain, z) -> Domain:
    z = tuple(z)
    center = shift(dom.center or (0,) * dom.dim, z)
    return Domain(dom.dim, tuple(shift(x, z) for x in dom.sites), kind="translate",
                  side=dom.side, center=center)


def make_domain(sites, d: int | None = None) -> Domain:
    sites = [tuple(s) for s in sites]
    if d is None:
        if not sites:
            raise ValueError("dimension needed for an empty domain")
        d = len(sites[0])
    return Domain(d, tuple(sites))


@dataclass(frozen=True)
class BondSet:
    """Unordered nearest-neighbour pairs, stored as ``(x, i)``."""

    bonds: tuple
    flavor: str

    def __len__(self):
        return len(self.bonds)

    def __iter__(self):
        return iter(self.bonds)

    def __contains__(self, b):
        return b in set(self.bonds)

    def pairs(self):
        return [bond_endpoints(b) for b in self.bonds]


def neighbours(x, d: int):
    for i in range(d):
        for s in (1, -1):
            y = list(x)
            y[i] += s
            yield tuple(y)


def dist(x, y) -> int:
    """Sup-norm distance between two sites."""
    return max(abs(a - b) for a, b in zip(x, y))


def set_dist(A, B) -> float:
    A, B = list(A), list(B)
    if not A or not B:
        return float("inf")
    a = np.array(A)
    b = np.array(B)
    return float(np.abs(a[:, None, :] - b[None, :, :]).max(axis=2).min())


def diam(A) -> float:
    """Euclidean diameter of a site set."""
    a = np.array(list(A), dtype=float)
    if len(a) < 2:
        return 0.0
    diff = a[:, None, :] - a[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


@dataclass(frozen=True)
class Structure:
    interior: Domain       # Λ⁻
    boundary: Domain       # ∂Λ
    enlarged: Domain       # Λ⁺
    interior_bonds: BondSet   # Λ*
    enlarged_bonds: BondSet   # bonds {x, x+e_i} with x ∈ Λ
    cut_bonds: BondSet        # (Λ, Λ^c)*

    def neighborhood(self, r: int) -> Domain:
        """N_r(Λ⁺) in the sup-distance."""
        return neighborhood(self.enlarged, r)


def neighborhood(dom: Domain, r: int) -> Domain:
    if r < 0:
        raise ValueError("r must be >= 0")
    offsets = list(itertools.product(range(-r, r + 1), repeat=dom.dim))
    sites = {shift(x, o) for x in dom.sites for o in offsets}
    return Domain(dom.dim, tuple(sites))


def derive_structure(dom: Domain) -> Structure:
    d = dom.dim
    S = dom.siteset
    boundary = [x for x in dom.sites if any(y not in S for y in neighbours(x, d))]
    bset = set(boundary)
    interior = [x for x in dom.sites if x not in bset]
    plus = set(S)
    for x in dom.sites:
        for i in range(d):
            plus.add(shift(x, unit(i, d)))
    inner, enl, cut = [], [], []
    for x in dom.sites:
        for i in range(d):
            y = shift(x, unit(i, d))
            enl.append((x, i))
            if y in S:
                inner.append((x, i))
    for x in dom.sites:
        for y in neighbours(x, d):
            if y not in S:
                cut.append(bond_from_pair(x, y))
    return Structure(
        interior=Domain(d, tuple(interior)),
        boundary=Domain(d, tuple(boundary)),
        enlarged=Domain(d, tuple(plus)),
        interior_bonds=BondSet(tuple(inner), "interior"),
        enlarged_bonds=BondSet(tuple(enl), "enlarged"),
        cut_bonds=BondSet(tuple(sorted(set(cut))), "cut"),
    )


def triadic_partition(m: int, n: int, d: int = 1, *, allow_equal: bool = False) -> list:
    """Centers Z_{m,n} = 3^n Z^d ∩ □_m of the partition of □_m into z + □_n."""
    if n < 0 or m < 0:
        raise ValueError("m, n must be >= 0")
    if n > m or (n == m and not allow_equal):
        raise ValueError("triadic partition needs n < m")
    half = (3 ** (m - n) - 1) // 2
    step = 3**n
    coords = [step * k for k in range(-half, half + 1)]
    return [tuple(z) for z in itertools.product(coords, repeat=d)]


def check_cap(n_sites: int, cap: int | None = DEFAULT_SITE_CAP, what: str = "support"):
    if cap is not None and n_sites > cap:
        raise CapExceeded(f"{what} has {n_sites} sites, above the cap {cap}")
