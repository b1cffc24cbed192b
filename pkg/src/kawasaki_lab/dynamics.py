"""Kinetic Monte Carlo for Kawasaki dynamics on the torus T_N^d with generator N² L.

Time is macroscopic throughout: a bond with distinct endpoint occupations
fires at rate N² c_b(η).  The simulator thins a uniform bound: candidate
events arrive at rate N²λ per active bond, a uniformly chosen active bond is
proposed and accepted with probability c_b/λ.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import expm

from .lattice import unit
from .rates import RateModel


# --- geometry and rate tables ------------------------------------------------


class TorusSystem:
    """Bond geometry and per-bond rate tables for a model on T_N^d.

    Sites are flattened in C order of their coordinates in ``[0, N)^d``.
    Bond ``b = i * N^d + x`` joins ``x`` and ``x + e_i``.
    """

    def __init__(self, N: int, d: int, model: RateModel):
        if N < 2:
            raise ValueError("N must be at least 2")
        self.N, self.d, self.model = int(N), int(d), model
        self.shape = (self.N,) * self.d
        self.volume = self.N**self.d
        coords = np.array(np.unravel_index(np.arange(self.volume), self.shape)).T
        self.coords = coords
        a, c, win, tab_id, tables = [], [], [], [], []
        table_index = {}
        for i in range(self.d):
            e = np.array(unit(i, self.d))
            for x in range(self.volume):
                xc = coords[x]
                bond = (tuple(int(v) for v in xc), i)
                if model.disordered:
                    sites, rates = model.table(bond, self.d)
                    key = ("bond", bond)
                else:
                    sites, rates = model.table(((0,) * self.d, i), self.d)
                    sites = [tuple(int(v) + int(w) for v, w in zip(s, xc)) for s in sites]
                    key = ("dir", i)
                if key not in table_index:
                    table_index[key] = len(tables)
                    tables.append(np.asarray(rates, dtype=float))
                a.append(x)
                c.append(self.flat(xc + e))
                w = [self.flat(np.array(s)) for s in sites]
                if len(set(w) | {x, c[-1]}) != len(w) + 2:
                    raise ValueError(f"torus side {N} too small for the range of {model.name}")
                win.append(w)
                tab_id.append(table_index[key])
        self.ends_a = np.array(a, dtype=np.int64)
        self.ends_b = np.array(c, dtype=np.int64)
        k = len(win[0]) if win else 0
        self.windows = np.array(win, dtype=np.int64).reshape(len(a), k)
        self.tab_id = np.array(tab_id, dtype=np.int64)
        self.tables = np.array(tables, dtype=float)
        self.lam = float(model.lam)
        if self.tables.max() > self.lam * (1 + 1e-12) or self.tables.min() < 1.0 - 1e-12:
            raise ValueError("rates leave the interval [1, λ]")
        # bonds touching each site: 2d per site
        sb = [[] for _ in range(self.volume)]
        for b in range(len(a)):
            sb[a[b]].append(b)
            sb[c[b]].append(b)
        self.site_bonds = np.array(sb, dtype=np.int64)

    @property
    def n_bonds(self) -> int:
        return len(self.ends_a)

    def flat(self, x) -> int:
        return int(np.ravel_multi_index(tuple(np.mod(np.asarray(x), self.N)), self.shape))

    def rate(self, occ: np.ndarray, b: int) -> float:
        idx = 0
        for m, s in enumerate(self.windows[b]):
            idx |= int(occ[s]) << m
        return float(self.tables[self.tab_id[b], idx])

    def active(self, occ: np.ndarray) -> np.ndarray:
        return occ[self.ends_a] != occ[self.ends_b]


_SYSTEMS: dict = {}


def torus_system(N: int, d: int, model: RateModel) -> TorusSystem:
    """Cached ``TorusSystem``; disordered models are not cached."""
    if model.disordered:
        return TorusSystem(N, d, model)
    key = (N, d, model.kind, model.params)
    if key not in _SYSTEMS:
        _SYSTEMS[key] = TorusSystem(N, d, model)
    return _SYSTEMS[key]


# --- state -------------------------------------------------------------------


@dataclass
class TorusState:
    N: int
    d: int
    occ: np.ndarray
    t: float = 0.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    jumps: int = 0

    @property
    def count(self) -> int:
        return int(self.occ.sum())

    def copy(self) -> "TorusState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return TorusState(self.N, self.d, self.occ.copy(), self.t, rng, self.jumps)

    def grid(self) -> np.ndarray:
        return self.occ.reshape((self.N,) * self.d)


@dataclass(frozen=True)
class SineProfile:
    """ρ₀(v) = ½ + A sin(2π v_1); picklable so replicas can run in worker processes."""

    amplitude: float = 0.25

    def __post_init__(self):
        if not 0 < self.amplitude < 0.5:
            raise ValueError("amplitude must lie in (0, 1/2)")

    def __call__(self, v):
        v = np.atleast_2d(v)
        return 0.5 + self.amplitude * np.sin(2 * np.pi * v[:, 0])


default_profile = SineProfile(0.25)


def sample_initial(profile, N: int, seed=None, d: int = 1) -> TorusState:
    """Independent Bernoulli(ρ₀(x/N)) occupations; ``profile`` maps (n, d) points to densities."""
    if callable(profile):
        coords = np.array(np.unravel_index(np.arange(N**d), (N,) * d)).T / N
        rho = np.asarray(profile(coords), dtype=float).reshape(-1)
    else:
        rho = np.full(N**d, float(profile))
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValueError("the initial profile must take values in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    occ = (rng.random(N**d) < rho).astype(np.uint8)
    return TorusState(N, d, occ, 0.0, rng)


# --- kernel ------------------------------------------------------------------


@njit(cache=True)
def _kmc(occ, ends_a, ends_b, windows, tab_id, tables, site_bonds, lam, rate_unit, t0, t_end,
         seed, active_list, pos, n_active):
    np.random.seed(seed)
    t = t0
    k = windows.shape[1]
    jumps = 0
    while n_active > 0:
        t += np.random.exponential(1.0 / (rate_unit * n_active))
        if t > t_end:
            break
        b = active_list[np.random.randint(0, n_active)]
        idx = 0
        for m in range(k):
            idx |= np.int64(occ[windows[b, m]]) << m
        if np.random.random() * lam >= tables[tab_id[b], idx]:
            continue
        xa = ends_a[b]
        xb = ends_b[b]
        tmp = occ[xa]
        occ[xa] = occ[xb]
        occ[xb] = tmp
        jumps += 1
        for s in (xa, xb):
            for j in range(site_bonds.shape[1]):
                bb = site_bonds[s, j]
                on = occ[ends_a[bb]] != occ[ends_b[bb]]
                if on and pos[bb] < 0:
                    pos[bb] = n_active
                    active_list[n_active] = bb
                    n_active += 1
                elif (not on) and pos[bb] >= 0:
                    last = active_list[n_active - 1]
                    active_list[pos[bb]] = last
                    pos[last] = pos[bb]
                    pos[bb] = -1
                    n_active -= 1
    return jumps


def advance(state: TorusState, dt: float, model: RateModel,
            system: TorusSystem | None = None) -> TorusState:
    """Run the exact jump process for macroscopic time ``dt`` (in place; returns ``state``)."""
    if dt < 0:
        raise ValueError("Δt must be non-negative")
    if dt == 0:
        return state
    system = system or torus_system(state.N, state.d, model)
    act = np.flatnonzero(system.active(state.occ)).astype(np.int64)
    active_list = np.empty(system.n_bonds, dtype=np.int64)
    active_list[:len(act)] = act
    pos = np.full(system.n_bonds, -1, dtype=np.int64)
    pos[act] = np.arange(len(act))
    seed = int(state.rng.integers(0, 2**31 - 1))
    t_end = state.t + dt
    jumps = _kmc(state.occ, system.ends_a, system.ends_b, system.windows, system.tab_id,
                 system.tables, system.site_bonds, system.lam, float(state.N**2 * system.lam),
                 state.t, t_end, seed, active_list, pos, len(act))
    state.t = t_end
    state.jumps += int(jumps)
    return state


def gillespie(state: TorusState, dt: float, model: RateModel,
              system: TorusSystem | None = None) -> TorusState:
    """Direct-method oracle: exact rates N²c_b over all active bonds, no thinning."""
    if dt < 0:
        raise ValueError("Δt must be non-negative")
    system = system or torus_system(state.N, state.d, model)
    rng, occ = state.rng, state.occ
    t, t_end = state.t, state.t + dt
    n2 = state.N**2
    while True:
        act = np.flatnonzero(system.active(occ))
        if len(act) == 0:
            break
        rates = n2 * np.array([system.rate(occ, b) for b in act])
        total = rates.sum()
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        b = act[np.searchsorted(np.cumsum(rates), rng.random() * total, side="right")]
        xa, xb = system.ends_a[b], system.ends_b[b]
        occ[xa], occ[xb] = occ[xb], occ[xa]
        state.jumps += 1
    state.t = t_end
    return state


# --- exact oracle ------------------------------------------------------------


def generator_matrix(N: int, model: RateModel, d: int = 1) -> np.ndarray:
    """Dense N²L on all 2^{N^d} torus configurations (index = Σ η_x 2^x)."""
    system = torus_system(N, d, model)
    V = system.volume
    if V > 14:
        raise ValueError("exact generator limited to 14 sites")
    size = 1 << V
    Q = np.zeros((size, size))
    bits = ((np.arange(size)[:, None] >> np.arange(V)) & 1).astype(np.uint8)
    for s in range(size):
        occ = bits[s]
        for b in np.flatnonzero(system.active(occ)):
            xa, xb = system.ends_a[b], system.ends_b[b]
            t = s ^ ((1 << int(xa)) | (1 << int(xb)))
            Q[s, t] += N**2 * system.rate(occ, b)
    Q[np.diag_indices(size)] = -Q.sum(axis=1)
    return Q


def exact_law(N: int, model: RateModel, eta0, T: float, d: int = 1) -> np.ndarray:
    """Row of exp(T·N²L) started from ``eta0`` (occupation array)."""
    Q = generator_matrix(N, model, d)
    s = int(np.dot(np.asarray(eta0, dtype=np.int64), 1 << np.arange(len(eta0))))
    return expm(T * Q)[s]


def encode(occ) -> int:
    return int(np.dot(np.asarray(occ, dtype=np.int64), 1 << np.arange(len(occ))))


# --- observables -------------------------------------------------------------


@dataclass
class EmpiricalMeasure:
    """Atoms of mass N^{-d} at x/N for occupied x."""

    positions: np.ndarray
    weight: float

    @property
    def mass(self) -> float:
        return self.weight * len(self.positions)

    def integrate(self, phi) -> complex:
        if len(self.positions) == 0:
            return 0.0
        return self.weight * np.sum(phi(self.positions))


def empirical(state: TorusState) -> EmpiricalMeasure:
    occupied = np.flatnonzero(state.occ)
    pos = np.array(np.unravel_index(occupied, (state.N,) * state.d)).T / state.N
    return EmpiricalMeasure(pos.reshape(-1, state.d), state.N ** (-state.d))


def mode_indices(n_max: int) -> np.ndarray:
    return np.arange(-n_max, n_max + 1)


def fourier_modes(state_or_occ, n_max: int, N: int | None = None, d: int | None = None):
    """⟨ρ^N, e_k⟩ = N^{-d} Σ_x η_x exp(−2πi k·x/N) for k ∈ [−n_max, n_max]^d.

    Returned as a complex array of shape ``(2 n_max + 1,) * d`` indexed by
    ``k + n_max``; direct summation, one axis at a time.
    """
    if isinstance(state_or_occ, TorusState):
        occ, N, d = state_or_occ.occ, state_or_occ.N, state_or_occ.d
    else:
        occ = np.asarray(state_or_occ)
        d = 1 if d is None else d
        N = round(occ.size ** (1.0 / d)) if N is None else N
    if n_max > N // 2:
        raise ValueError(f"n_max must be at most N/2 = {N // 2}")
    ks = mode_indices(n_max)
    E = np.exp(-2j * np.pi * np.outer(ks, np.arange(N)) / N) / N
    out = occ.reshape((N,) * d).astype(complex)
    for axis in range(d):
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [axis])), 0, axis)
    return out


# --- replicas and snapshots --------------------------------------------------


def replica_seeds(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def snapshot(state: TorusState, n_max: int) -> dict:
    m = fourier_modes(state, n_max)
    return {"t": float(state.t), "particle_count": state.count,
            "modes": [[float(z.real), float(z.imag)] for z in m.reshape(-1)]}


def run_trajectory(state: TorusState, model: RateModel, times, n_max: int = 1,
                   stream=None, system: TorusSystem | None = None) -> list:
    """Advance through increasing ``times``, recording a snapshot at each.

    ``stream`` may be a writable text file receiving one JSON line per snapshot.
    """
    system = system or torus_system(state.N, state.d, model)
    out = []
    for t in times:
        if t < state.t:
            raise ValueError("snapshot times must be non-decreasing")
        advance(state, t - state.t, model, system)
        rec = snapshot(state, n_max)
        out.append(rec)
        if stream is not None:
            stream.write(json.dumps(rec) + "\n")
    return out


def _replica_worker(args):
    profile, N, d, model, times, n_max, rng = args
    state = sample_initial(profile, N, rng, d)
    system = torus_system(N, d, model)
    traj = []
    for t in times:
        advance(state, t - state.t, model, system)
        traj.append(fourier_modes(state, n_max))
    return np.array(traj)


def replica_modes(profile, N: int, model: RateModel, times, n_max: int, replicas: int,
                  seed: int = 0, d: int = 1, jobs: int = 1) -> np.ndarray:
    """Fourier modes at each time for independent replicas: shape (replicas, len(times), ...)."""
    rngs = replica_seeds(seed, replicas)
    tasks = [(profile, N, d, model, list(times), n_max, r) for r in rngs]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            res = list(ex.map(_replica_worker, tasks))
    else:
        res = [_replica_worker(t) for t in tasks]
    return np.array(res)

