"""Experiment runner: ``kawasaki-lab run CONFIG`` and ``kawasaki-lab summarize DIR``.

Config files are flat TOML: top-level ``kind`` and ``seed`` plus the tables
``[rate]``, ``[geometry]``, ``[density]``, ``[run]`` and ``[output]``.  Unknown
keys are rejected.  Exit codes: 0 pass, 1 assertion failure, 2 parse error,
3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("conductivity", "duality", "corrector", "clt", "lifting", "hydro", "disorder",
         "validate-rates", "inequality-suite")
EXACT_KINDS = ("conductivity", "duality", "corrector", "clt", "lifting", "validate-rates",
               "inequality-suite", "disorder")

SCHEMA = {
    "": {"kind": str, "seed": int},
    "rate": {"kind": str, "a": float, "a_max": float, "seed": int},
    "geometry": {"d": int, "L": list, "m": list},
    "density": {"rho": list},
    "run": {"cases": int, "zeta": int, "T": float, "Ns": list, "replicas": int, "alpha": float,
            "G": int, "table_L": int, "amplitude": float, "seeds": int, "xi": list},
    "output": {"dir": str},
}

EXIT_PASS, EXIT_ASSERT, EXIT_PARSE, EXIT_INVALID = 0, 1, 2, 3


class ConfigError(Exception):
    """Raised for configs that parse but fail validation."""


class ParseError(Exception):
    def __init__(self, msg, line=None, col=None):
        super().__init__(msg)
        self.line, self.col = line, col

    def __str__(self):
        where = "" if self.line is None else f" at line {self.line}, column {self.col}"
        return f"parse error{where}: {self.args[0]}"


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    rate: dict = field(default_factory=lambda: {"kind": "ssep"})
    d: int = 1
    L: list = field(default_factory=lambda: [3])
    m: list = field(default_factory=lambda: [0, 1])
    rho: list = field(default_factory=lambda: [0.5])
    run: dict = field(default_factory=dict)
    out: str = "artifacts"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "rate": dict(sorted(self.rate.items())),
                "d": self.d, "L": self.L, "m": self.m, "rho": self.rho,
                "run": dict(sorted(self.run.items()))}


def _position(text: str, err) -> tuple:
    line, col = getattr(err, "lineno", None), getattr(err, "colno", None)
    if line is None:
        import re
        m = re.search(r"line (\d+), column (\d+)", str(err))
        if m:
            line, col = int(m.group(1)), int(m.group(2))
    return line, col


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        line, col = _position(text, err)
        raise ParseError(getattr(err, "msg", str(err)), line, col) from None
    return validate_config(raw)


def _check_type(section, key, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool) or not isinstance(value, typ):
        raise ConfigError(f"{section or 'top level'}.{key}: expected {typ.__name__}")
    return value


def validate_config(raw: dict) -> ExperimentConfig:
    clean = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown section [{key}]")
            clean[key] = {}
            for k, v in value.items():
                if k not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{k}")
                clean[key][k] = _check_type(key, k, v, SCHEMA[key][k])
        else:
            if key not in SCHEMA[""]:
                raise ConfigError(f"unknown key {key}")
            clean[key] = _check_type("", key, value, SCHEMA[""][key])
    if "kind" not in clean:
        raise ConfigError("missing key: kind")
    if clean["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    cfg = ExperimentConfig(kind=clean["kind"], seed=clean.get("seed", 0))
    rate = clean.get("rate", {})
    cfg.rate = {"kind": rate.get("kind", "ssep"), **{k: v for k, v in rate.items() if k != "kind"}}
    if cfg.rate["kind"] not in ("ssep", "speed_change", "cooperative", "disordered"):
        raise ConfigError(f"unknown rate.kind {cfg.rate['kind']!r}")
    for k in ("a", "a_max"):
        if cfg.rate.get(k, 0.0) < 0:
            raise ConfigError(f"rate.{k} must be >= 0")
    geo = clean.get("geometry", {})
    cfg.d = geo.get("d", 1)
    if cfg.d < 1:
        raise ConfigError("geometry.d must be >= 1")
    cfg.L = [int(x) for x in geo.get("L", [3])]
    if any(x < 1 for x in cfg.L):
        raise ConfigError("geometry.L entries must be positive")
    cfg.m = [int(x) for x in geo.get("m", [0, 1])]
    cfg.rho = [float(x) for x in clean.get("density", {}).get("rho", [0.5])]
    if any(not 0 <= r <= 1 for r in cfg.rho):
        raise ConfigError("density.rho entries must lie in [0, 1]")
    cfg.run = clean.get("run", {})
    if "Ns" in cfg.run:
        Ns = [int(n) for n in cfg.run["Ns"]]
        if Ns != sorted(set(Ns)):
            raise ConfigError("run.Ns must be strictly increasing")
        cfg.run["Ns"] = Ns
    if cfg.run.get("alpha", 1.0) <= cfg.d / 2:
        raise ConfigError("run.alpha must exceed d/2")
    cfg.out = clean.get("output", {}).get("dir", "artifacts")
    return cfg


# --- dispatch ----------------------------------------------------------------


def _model(cfg: ExperimentConfig, bonds=None):
    from .rates import from_config
    r = cfg.rate
    return from_config(r["kind"], r.get("a", 0.0), r.get("a_max", 0.0), r.get("seed", cfg.seed),
                       bonds)


def _disorder_bonds(cfg, L):
    from .variational.disorder import disorder_bonds
    return disorder_bonds(max(1, int(np.ceil(np.log(max(L, 1)) / np.log(3)))), cfg.d)


def _num(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def run_validate_rates(cfg, jobs):
    from .rates import validate
    bonds = _disorder_bonds(cfg, max(cfg.L)) if cfg.rate["kind"] == "disordered" else None
    model = _model(cfg, bonds)
    rep = validate(model, cfg.d)
    return {"checks": rep.checks, "lambda": rep.lam, "min_rate": rep.min_rate,
            "witness": None if rep.witness is None else {k: str(v) for k, v in rep.witness.items()},
            "report": rep.summary()}, [], rep.checks


def _matrices(cfg, model, L, rho):
    from .lattice import make_cube
    from .variational import diffusion_matrices
    return diffusion_matrices(rho, make_cube(L, cfg.d), model)


def run_conductivity(cfg, jobs):
    model = _model(cfg, _disorder_bonds(cfg, max(cfg.L)) if cfg.rate["kind"] == "disordered" else None)
    rows, checks = [], {"ellipticity": True, "duality_order": True}
    for L in cfg.L:
        for rho in cfg.rho:
            mats = _matrices(cfg, model, L, rho)
            if rho in (0.0, 1.0):
                rows.append({"L": L, "rho": rho, "D_bar": None, "D_bar_star": None, "c_bar": 0.0,
                             "c_bar_star": 0.0})
                continue
            D, Ds = mats.D, mats.D_star
            ev = np.linalg.eigvalsh(D)
            evs = np.linalg.eigvalsh(Ds)
            checks["ellipticity"] &= bool(evs.min() >= 1 - 1e-9 and ev.max() <= model.lam + 1e-9)
            checks["duality_order"] &= bool(np.linalg.eigvalsh(D - Ds).min() >= -1e-9)
            rows.append({"L": L, "rho": rho, "D_bar": D.tolist(), "D_bar_star": Ds.tolist(),
                         "c_bar": mats.c.tolist(), "c_bar_star": mats.c_star.tolist()})
    return {"rows": rows, "lambda": model.lam}, [("conductivity.csv", _flat_rows(rows))], checks


def _flat_rows(rows):
    out = []
    for r in rows:
        flat = {}
        for k, v in r.items():
            flat[k] = v[0][0] if isinstance(v, list) and v and isinstance(v[0], list) else v
        out.append(flat)
    return out


def run_duality(cfg, jobs):
    model = _model(cfg)
    rows, checks = [], {"gap_nonnegative": True}
    for L in cfg.L:
        for rho in cfg.rho:
            mats = _matrices(cfg, model, L, rho)
            gap = float(mats.c[0, 0] - mats.c_star[0, 0])
            checks["gap_nonnegative"] &= gap >= -1e-10
            rows.append({"L": L, "rho": rho, "c_bar": float(mats.c[0, 0]),
                         "c_bar_star": float(mats.c_star[0, 0]), "gap": gap})
    return {"rows": rows}, [("duality.csv", rows)], checks


def run_corrector(cfg, jobs):
    from .lattice import make_cube
    from .variational import PrimalProblem, corrector
    model = _model(cfg)
    xi = np.asarray(cfg.run.get("xi", [1.0] + [0.0] * (cfg.d - 1)), dtype=float)
    if xi.shape != (cfg.d,):
        raise ConfigError("run.xi must have d entries")
    rows, checks = [], {"residual": True, "mean_zero": True}
    for L in cfg.L:
        pr = PrimalProblem(make_cube(L, cfg.d), model)
        for rho in cfg.rho:
            c = corrector(rho, pr.dom, xi, model, pr)
            mean = float(np.dot(pr.node_prob(rho), c.phi.values))
            checks["residual"] &= bool(c.residual <= 1e-8)
            checks["mean_zero"] &= abs(mean) <= 1e-9
            rows.append({"L": L, "rho": rho, "sup_norm": float(np.max(np.abs(c.phi.values))),
                         "residual": float(c.residual), "mean": mean})
    return {"rows": rows, "xi": xi.tolist()}, [("corrector.csv", rows)], checks


def run_clt(cfg, jobs):
    from .lattice import make_cube
    from .variational import CanonicalProblem, clt_identity
    model = _model(cfg)
    rng = np.random.default_rng(cfg.seed)
    nz = cfg.run.get("zeta", 4)
    rows, checks = [], {"clt_identity": True}
    for L in cfg.L:
        dom = make_cube(L, cfg.d)
        ext = [s for s in dom.structure.enlarged.sites if s not in set(dom.sites)]
        for M in range(1, len(dom)):
            for z in range(nz):
                zeta = {s: int(v) for s, v in zip(ext, rng.integers(0, 2, size=len(ext)))}
                prob = CanonicalProblem(dom, M, model, zeta)
                lhs, rhs = clt_identity(prob, np.eye(cfg.d)[0])
                ok = abs(lhs - rhs) <= 1e-9
                checks["clt_identity"] &= bool(ok)
                rows.append({"L": L, "M": M, "zeta": z, "lhs": float(lhs), "rhs": float(rhs),
                             "gap": abs(float(lhs - rhs))})
    return {"rows": rows}, [("clt.csv", rows)], checks


def run_lifting(cfg, jobs):
    from .lifting import closed_form_case, run_lifting_suite
    res = run_lifting_suite(cfg.run.get("cases", 10), cfg.seed)
    checks = {k: all(c.holds for c in v) for k, v in res.items()}
    cf = closed_form_case()
    checks["closed_form"] = bool(abs(cf.lhs + np.exp(-1)) < 1e-12 and abs(cf.rhs + np.exp(-1)) < 1e-12)
    summary = {k: {"max_gap": max(c.gap for c in v), "max_budget": max(c.budget for c in v),
                   "cases": len(v)} for k, v in res.items()}
    return {"identities": summary, "closed_form": [cf.lhs, float(cf.rhs)]}, [], checks


def run_inequality_suite_kind(cfg, jobs):
    from .variational import run_inequality_suite
    res = run_inequality_suite(cfg.run.get("cases", 200), cfg.seed)
    checks = {k: r.passed for k, r in res.items()}
    data = {k: {"cases": r.cases, "checked": r.checked, "violations": r.violations,
                "worst_margin": r.worst_margin, "notes": r.notes} for k, r in res.items()}
    return {"suites": data}, [], checks


def run_disorder(cfg, jobs):
    from .variational import quenched_conductivity
    a_max = cfg.rate.get("a_max", 0.5)
    seeds = range(cfg.seed, cfg.seed + cfg.run.get("seeds", 32))
    rows, checks = [], {"bounds": True, "mean_non_increasing": True}
    for rho in cfg.rho:
        res = quenched_conductivity(a_max, seeds, rho, tuple(cfg.m), cfg.d)
        checks["bounds"] &= res.within_bounds()
        checks["mean_non_increasing"] &= res.mean_non_increasing()
        for m in cfg.m:
            rows.append({"rho": rho, "m": m, "mean": res.mean(m), "stderr": res.stderr(m),
                         "min": float(res.values[m].min()), "max": float(res.values[m].max()),
                         "lower": 2 * res.chi, "upper": 2 * res.chi * res.lam})
    return {"rows": rows, "a_max": a_max}, [("disorder.csv", rows)], checks


def run_hydro(cfg, jobs):
    from .dynamics import SineProfile
    from .hydro import constant_table, convergence_experiment, table_from_model
    model = _model(cfg)
    r = cfg.run
    table = (constant_table(1.0) if model.kind == "ssep"
             else table_from_model(model, r.get("table_L", 9)))
    res = convergence_experiment(model, SineProfile(r.get("amplitude", 0.25)), r.get("T", 0.05),
                                 r.get("Ns", [32, 64, 128]), r.get("replicas", 32),
                                 r.get("alpha", 1.0), cfg.seed, table, r.get("G", 512), jobs=jobs)
    rows = [{"N": x.N, "t": x.t, "mean_sq_error": x.mean_sq_error, "stderr": x.stderr,
             "replicas": x.replicas, "alpha": x.alpha, "table_ref_L": x.table_ref_L}
            for x in res.rows]
    checks = {} if res.low_power else {"strictly_decreasing": res.strictly_decreasing()}
    data = {"sup_error": {str(k): list(v) for k, v in res.sup_error.items()}, "slope": res.slope,
            "slope_stderr": res.slope_stderr, "low_power": res.low_power,
            "remainder_bound": res.remainder_bound, "n_max": res.n_max,
            "table_ref_L": table.reference_L}
    return data, [("hydro.csv", rows)], checks


RUNNERS = {
    "validate-rates": run_validate_rates, "conductivity": run_conductivity,
    "duality": run_duality, "corrector": run_corrector, "clt": run_clt,
    "lifting": run_lifting, "inequality-suite": run_inequality_suite_kind,
    "disorder": run_disorder, "hydro": run_hydro,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return _num(obj)


def write_csv(path: Path, rows: list):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})


def run(config_path, out=None, jobs: int = 1, verbose: bool = False) -> int:
    try:
        text = Path(config_path).read_text()
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = parse_config(text)
    except ParseError as err:
        print(str(err), file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_INVALID
    outdir = Path(out or cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        data, tables, checks = RUNNERS[cfg.kind](cfg, jobs)
    except (ConfigError, ValueError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_INVALID
    passed = all(bool(v) for v in checks.values())
    failures = sorted(k for k, v in checks.items() if not v)
    report = {"kind": cfg.kind, "config": cfg.to_dict(), "passed": passed,
              "checks": {k: bool(v) for k, v in sorted(checks.items())}, "failures": failures,
              "exact": cfg.kind in EXACT_KINDS, "results": data,
              "tables": [name for name, _ in tables]}
    for name, rows in tables:
        write_csv(outdir / name, rows)
    (outdir / f"{cfg.kind}.json").write_text(
        json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
    line = f"{cfg.kind}: {'pass' if passed else 'FAIL'}"
    if cfg.kind == "validate-rates":
        line += f" ({data['report']})"
    print(line)
    if verbose:
        for k, v in sorted(checks.items()):
            print(f"  {k}: {'pass' if v else 'FAIL'}")
    return EXIT_PASS if passed else EXIT_ASSERT


# --- summarize ---------------------------------------------------------------


def slope_fit(rows: list) -> tuple:
    """Least-squares log-log slope of the sup-over-t error per N, with a 95% band."""
    from scipy import stats
    sup = {}
    for r in rows:
        N, e = int(r["N"]), float(r["mean_sq_error"])
        sup[N] = max(sup.get(N, -np.inf), e)
    Ns = sorted(sup)
    if len(Ns) < 2:
        return float("nan"), float("nan"), float("nan")
    fit = stats.linregress(np.log(Ns), np.log([sup[n] for n in Ns]))
    if len(Ns) < 3:
        return fit.slope, float("nan"), float("nan")
    h = stats.t.ppf(0.975, len(Ns) - 2) * fit.stderr
    return fit.slope, fit.slope - h, fit.slope + h


def summarize(artifact_dir) -> str:
    d = Path(artifact_dir)
    files = sorted(d.glob("*.json")) if d.is_dir() else []
    if not files:
        raise FileNotFoundError("no artifacts")
    lines = []
    for f in files:
        rep = json.loads(f.read_text())
        lines.append(f"[{rep['kind']}] {'pass' if rep['passed'] else 'FAIL'}")
        for k, v in rep["checks"].items():
            lines.append(f"  {k:<28} {'pass' if v else 'FAIL'}")
        if rep["kind"] == "duality":
            lines.append(f"  {'L':>4} {'rho':>6} {'c_bar':>12} {'c_bar_star':>12} {'gap':>12}")
            for r in rep["results"]["rows"]:
                lines.append(f"  {r['L']:>4} {r['rho']:>6.3f} {r['c_bar']:>12.8f} "
                             f"{r['c_bar_star']:>12.8f} {r['gap']:>12.3e}")
        if rep["kind"] == "hydro" and (d / "hydro.csv").exists():
            with open(d / "hydro.csv") as fh:
                rows = list(csv.DictReader(fh))
            s, lo, hi = slope_fit(rows)
            lines.append(f"  log-log slope {s:.3f} (95% band [{lo:.3f}, {hi:.3f}])")
            if rep["results"].get("low_power"):
                lines.append("  low power: too few replicas, no assertion made")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kawasaki-lab")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="artifact directory (overrides output.dir)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for Monte Carlo replicas")
    p.add_argument("-v", "--verbose", action="store_true")
    s = sub.add_parser("summarize", help="print a report from an artifact directory")
    s.add_argument("dir")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        return run(args.config, args.out, args.jobs, args.verbose)
    try:
        print(summarize(args.dir))
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
