"""Hydrodynamic equation ∂_t ρ = ∇·(D(ρ)∇ρ) on the unit torus and the H^{-α} comparison harness.

Fourier conventions: e_k(v) = exp(2πi k·v), k ∈ Z^d, is orthonormal on the
torus; the H^{-α} weight of mode k is (4π²|k|² + 1)^{-α}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from .dynamics import SineProfile, replica_modes
from .lattice import make_cube
from .rates import RateModel

DEFAULT_GRID = np.arange(1, 64) / 64.0


# --- diffusivity tables ------------------------------------------------------


@dataclass
class DiffusivityTable:
    """D(ρ) on a density grid with a monotone cubic interpolant and flat extension."""

    rho: np.ndarray
    values: np.ndarray
    reference_L: int | None = None
    model: str = ""

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.rho) <= 0):
            raise ValueError("density grid must be increasing")
        if np.any(self.values <= 0):
            raise ValueError("diffusivity must be positive")
        self._interp = (PchipInterpolator(self.rho, self.values, extrapolate=False)
                        if len(self.rho) > 1 else None)

    def __call__(self, rho):
        r = np.clip(np.asarray(rho, dtype=float), self.rho[0], self.rho[-1])
        if self._interp is None:
            return np.full_like(r, self.values[0])
        return self._interp(r)

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def min(self) -> float:
        return float(self.values.min())

    def integral(self, rho: float) -> float:
        """P(ρ) = ∫_0^ρ D, a diagnostic."""
        xs = np.linspace(0.0, rho, 257)
        return float(trapezoid(self(xs), xs))


def constant_table(value: float = 1.0) -> DiffusivityTable:
    return DiffusivityTable(np.array([0.5]), np.array([value]), None, "constant")


def table_from_model(model: RateModel, L: int = 9, grid=None, d: int = 1) -> DiffusivityTable:
    """D(ρ) ≈ D̄(ρ, Λ_L) on the grid (Einstein relation D = c/(2χ)), d = 1 entry."""
    from .variational.grand import PrimalProblem

    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    pr = PrimalProblem(make_cube(L, d), model)
    vals = np.array([pr.matrix(r)[0, 0] for r in grid])
    return DiffusivityTable(grid, vals, L, model.name)


# --- PDE solver --------------------------------------------------------------


@dataclass
class DensityField:
    t: float
    values: np.ndarray            # cell averages on G cells of [0, 1)

    @property
    def G(self) -> int:
        return len(self.values)

    @property
    def mass(self) -> float:
        return float(self.values.mean())

    def modes(self, n_max: int) -> np.ndarray:
        """Exact Fourier coefficients of the piecewise-constant field, k = −n_max..n_max."""
        return cell_modes(self.values, n_max)


def cell_modes(values, n_max: int) -> np.ndarray:
    G = len(values)
    ks = np.arange(-n_max, n_max + 1)
    centers = (np.arange(G) + 0.5) / G
    phase = np.exp(-2j * np.pi * np.outer(ks, centers))
    shape = np.sinc(ks / G)          # ∫ over a cell of e^{-2πikv}, divided by the cell width
    return shape * (phase @ np.asarray(values, dtype=float)) / G


@dataclass
class PDESolution:
    fields: list
    steps: int
    clamped: int
    mass_drift: float
    table_ref_L: int | None = None

    def at(self, t: float) -> DensityField:
        for f in self.fields:
            if np.isclose(f.t, t, rtol=0, atol=1e-14):
                return f
        raise KeyError(f"no checkpoint at t={t}")


_GAUSS = np.polynomial.legendre.leggauss(8)


def _node_values(profile, G: int) -> np.ndarray:
    pts = (np.arange(G)[:, None] + 0.5 + 0.5 * _GAUSS[0][None, :]) / G
    return np.asarray(profile(pts.reshape(-1, 1)), dtype=float).reshape(G, 8)


def initial_cells(profile, G: int) -> np.ndarray:
    """Cell averages of ``profile`` by 8-point Gauss-Legendre quadrature per cell."""
    if not callable(profile):
        vals = np.asarray(profile, dtype=float)
        if vals.shape != (G,):
            raise ValueError("initial values must have one entry per cell")
        return vals.copy()
    return 0.5 * _node_values(profile, G) @ _GAUSS[1]


def solve_pde(profile, table, T: float, G: int = 256, checkpoints=None, cfl: float = 0.4) -> PDESolution:
    """Explicit finite volumes on G cells; faces use the mean of D at adjacent cells.

    ``table`` is any callable D(ρ) with a ``max`` attribute (or a constant).
    The step is ``cfl · Δx² / max D``, shortened to land on every checkpoint.
    """
    if G < 16:
        raise ValueError("G must be at least 16")
    if T < 0:
        raise ValueError("T must be non-negative")
    if not callable(table):
        table = constant_table(float(table))
    rho = initial_cells(profile, G)
    # check the profile itself: quadrature rounding can pull a value of 1 just below 1
    raw = _node_values(profile, G) if callable(profile) else rho
    if np.any(raw <= 0) or np.any(raw >= 1):
        raise ValueError("initial density must lie in (0, 1)")
    checkpoints = sorted(set([T] if checkpoints is None else list(checkpoints)))
    if checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > T + 1e-15):
        raise ValueError("checkpoints must lie in [0, T]")
    dx = 1.0 / G
    dmax = float(getattr(table, "max", np.max(table(np.linspace(0, 1, 65)))))
    dt_max = cfl * dx * dx / dmax
    m0 = rho.sum()
    t, steps, clamped = 0.0, 0, 0
    fields = []
    for target in checkpoints:
        while t < target - 1e-15:
            dt = min(dt_max, target - t)
            Dc = table(rho)
            Dface = 0.5 * (Dc + np.roll(Dc, -1))
            flux = Dface * (np.roll(rho, -1) - rho) / dx
            rho = rho + dt * (flux - np.roll(flux, 1)) / dx
            bad = (rho < 0) | (rho > 1)
            if bad.any():
                clamped += int(bad.sum())
                rho = np.clip(rho, 0.0, 1.0)
            t = target if dt == target - t else t + dt
            steps += 1
        fields.append(DensityField(target, rho.copy()))
    drift = abs(rho.sum() - m0) / G
    return PDESolution(fields, steps, clamped, float(drift), getattr(table, "reference_L", None))


def heat_solution(amplitude: float, t: float, v):
    """½ + A e^{-4π²t} sin(2πv), the D ≡ 1 solution from the sine profile."""
    return 0.5 + amplitude * np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * np.asarray(v))


# --- H^{-α} ------------------------------------------------------------------


def mode_weights(n_max: int, alpha: float, d: int = 1) -> np.ndarray:
    ks = np.arange(-n_max, n_max + 1)
    grids = np.meshgrid(*([ks] * d), indexing="ij")
    k2 = sum(g.astype(float) ** 2 for g in grids)
    return (4 * np.pi**2 * k2 + 1.0) ** (-alpha)


def tail_weight(n_max: int, alpha: float, d: int = 1, cutoff: int = 200_000) -> float:
    """Upper bound on Σ_{|k|_∞ > n_max} (4π²|k|²+1)^{-α}, summed by sup-norm shells."""
    m = np.arange(n_max + 1, cutoff + 1, dtype=float)
    shell = (2 * m + 1) ** d - (2 * m - 1) ** d
    s = float(np.sum(shell * (4 * np.pi**2 * m**2 + 1.0) ** (-alpha)))
    # integral bound beyond the cutoff: shell ≤ 2d(2m+1)^{d-1}·... ≤ c m^{d-1}
    p = 2 * alpha - (d - 1)
    s += 2 * d * 3 ** (d - 1) * (4 * np.pi**2) ** (-alpha) * cutoff ** (1 - p) / (p - 1)
    return s


@dataclass
class HNorm:
    squared: float
    remainder_bound: float
    n_max: int
    alpha: float

    @property
    def value(self) -> float:
        return float(np.sqrt(self.squared))


def h_minus_alpha(f_modes, g_modes, alpha: float = 1.0, d: int = 1,
                  sup_amplitude: float = 2.0) -> HNorm:
    """Σ_{|k|_∞ ≤ n} (4π²|k|²+1)^{-α} |f̂_k − ĝ_k|² over the supplied modes.

    ``sup_amplitude`` bounds |f̂_k − ĝ_k| for the omitted modes (2 for two
    probability densities); the remainder is reported, not added.
    """
    if alpha <= d / 2:
        raise ValueError("α must exceed d/2")
    f, g = np.asarray(f_modes), np.asarray(g_modes)
    if f.shape != g.shape:
        raise ValueError("mode arrays must have matched truncation")
    n_max = (f.shape[0] - 1) // 2
    w = mode_weights(n_max, alpha, d)
    sq = float(np.sum(w * np.abs(f - g) ** 2))
    return HNorm(sq, sup_amplitude**2 * tail_weight(n_max, alpha, d), n_max, alpha)


# --- decay-rate fit ----------------------------------------------------------


@dataclass
class DecayFit:
    rate: float
    stderr: float
    beta: float
    dt: float


def fit_mode_decay(series, dt: float) -> DecayFit:
    """Least-squares AR(1) fit X_{j+1} ≈ e^{−λ dt} X_j of complex mode series.

    ``series`` has shape (replicas, times) on an equally spaced time grid.
    The conditional mean of a linear mode under SSEP decays exactly
    geometrically, so the regression slope estimates e^{−λ dt} without
    discretisation bias.  The standard error is the sandwich estimate from
    per-replica score contributions.
    """
    X = np.asarray(series)
    x0, x1 = X[:, :-1], X[:, 1:]
    den = np.sum(np.abs(x0) ** 2)
    beta = float(np.sum(np.real(np.conj(x0) * x1)) / den)
    resid = x1 - beta * x0
    score = np.sum(np.real(np.conj(x0) * resid), axis=1)      # per replica
    se_beta = float(np.sqrt(np.sum(score**2)) / den)
    rate = -np.log(beta) / dt
    return DecayFit(float(rate), se_beta / (beta * dt), beta, dt)


# --- convergence experiment --------------------------------------------------


@dataclass
class ConvergenceRow:
    N: int
    t: float
    mean_sq_error: float
    stderr: float
    replicas: int
    alpha: float
    table_ref_L: int | None


@dataclass
class ConvergenceResult:
    rows: list
    sup_error: dict            # N -> (sup over checkpoints of the mean, its stderr)
    slope: float
    slope_stderr: float
    low_power: bool
    remainder_bound: float
    n_max: int
    info: dict = field(default_factory=dict)

    def strictly_decreasing(self, z: float = 2.0) -> bool:
        Ns = sorted(self.sup_error)
        for a, b in zip(Ns, Ns[1:]):
            ea, sa = self.sup_error[a]
            eb, sb = self.sup_error[b]
            if not ea - eb > z * np.hypot(sa, sb):
                return False
        return True

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "t", "mean_sq_error", "stderr", "replicas", "alpha", "table_ref_L"])
            for r in self.rows:
                w.writerow([r.N, f"{r.t:.6g}", f"{r.mean_sq_error:.10g}", f"{r.stderr:.10g}",
                            r.replicas, r.alpha, "" if r.table_ref_L is None else r.table_ref_L])


def checkpoint_times(T: float) -> list:
    return [T / 8, T / 4, T / 2, T]


def convergence_experiment(model: RateModel, profile=None, T: float = 0.05, Ns=(32, 64, 128),
                           replicas: int = 32, alpha: float = 1.0, seed: int = 0,
                           table: DiffusivityTable | None = None, G: int = 512,
                           n_max: int | None = None, jobs: int = 1) -> ConvergenceResult:
    """E‖ρ^N(t) − ρ(t)‖²_{H^{-α}} at the checkpoints, per N, from independent replicas.

    All N share the truncation ``n_max`` (default min(Ns)/2).  At T = 0 the
    single checkpoint 0 is used and only the initial sampling noise remains.
    """
    Ns = list(Ns)
    if Ns != sorted(Ns):
        raise ValueError("Ns must be increasing")
    profile = profile or SineProfile(0.25)
    table = table or (constant_table(1.0) if model.kind == "ssep" else table_from_model(model))
    n_max = min(Ns) // 2 if n_max is None else n_max
    times = checkpoint_times(T) if T > 0 else [0.0]
    pde = solve_pde(profile, table, T, G, times)
    ref = {f.t: f.modes(n_max) for f in pde.fields}
    w = mode_weights(n_max, alpha)
    rows, sup = [], {}
    logs = []
    for k, N in enumerate(Ns):
        modes = replica_modes(profile, N, model, times, n_max, replicas, seed + 7919 * k, jobs=jobs)
        best = (-np.inf, 0.0)
        for j, t in enumerate(times):
            err = np.sum(w * np.abs(modes[:, j] - ref[t]) ** 2, axis=1)
            mean = float(err.mean())
            se = float(err.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else float("nan")
            rows.append(ConvergenceRow(N, t, mean, se, replicas, alpha, table.reference_L))
            if mean > best[0]:
                best = (mean, se)
        sup[N] = best
        logs.append(np.log(best[0]))
    if len(Ns) > 1:
        x = np.log(np.array(Ns, dtype=float))
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, np.array(logs), rcond=None)
        dof = max(len(Ns) - 2, 1)
        resid = np.array(logs) - A @ coef
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        slope, slope_se = float(coef[0]), float(np.sqrt(cov[0, 0]))
    else:
        slope, slope_se = float("nan"), float("nan")
    return ConvergenceResult(rows, sup, slope, slope_se, replicas < 16,
                             4.0 * tail_weight(n_max, alpha), n_max,
                             {"pde_steps": pde.steps, "clamped": pde.clamped, "G": G,
                              "model": model.name, "T": T})
