"""Command-line driver: ``honeycomb-rg <command> [flags]``.

Every command writes one artifact into ``output_dir`` and prints a short
summary.  Flags mirror the keys of :class:`RunConfig`; ``--config`` loads a
JSON file holding exactly those keys, and explicit flags override it.

Exit codes: 0 success, 1 a verification check failed, 2 invalid config.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, HoneycombError
from .fermi import (SelfEnergyModel, fermi_points_closed_form, fermi_points_root_find, fermi_shift_newton,
                    torus_distance, warping_function)
from .grassmann import (GaussianSpec, GrassmannPoly, all_monomials, bbf_check, berezin_expectation,
                        mode_sum_two_point, random_propagator, wick_moment)
from .linalg4 import SpecialForm, det4_special, lu_det
from .model import (TRANSFORMS, HoppingParams, Momentum3, band_eigenvalues, inverse_propagator,
                    symmetry_residual, warping_determinant)
from .multiscale import (Cutoffs, LatticeSpec, default_beta, partition_residual, scale_thresholds,
                         schwinger_recursion, two_mode_recursion)
from .regimes import SCANNABLE, RegimeConstants, approximation_error_scan, intermediate_bound_check
from .trees import (PowerCountingConstants, count_trees_dp, enumerate_trees, enumerate_unlabeled,
                    power_counting_sum)

COMMANDS = ("bands", "fermi", "regimes", "scales", "trees", "grassmann", "verify")
THREADS_ENV = "HONEYCOMB_RG_THREADS"

K_POINT = (2 * math.pi / 3, 2 * math.pi / (3 * math.sqrt(3)))
M_POINT = (2 * math.pi / 3, 0.0)
PATHS = {
    "gamma-to-K": ((0.0, 0.0), K_POINT),
    "K-to-M": (K_POINT, M_POINT),
    "M-to-gamma": (M_POINT, (0.0, 0.0)),
}


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 0.1
    gamma3_ratio: float = 0.33
    gamma1_ratio: float = 1.0
    beta: float = default_beta(-20)
    L: int = 64
    M: int = 12
    kappa0_bar: float = 1 / 3
    kappa1: float = 2.0
    kappa1_bar: float = 0.5
    kappa2: float = 2.0
    kappa2_bar: float = 0.5
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    Cg: float = 1.0
    CG: float = 1.0
    coupling: float = 1e-3
    tol_fermi: float = 1e-10
    tol_partition: float = 1e-12
    tol_exact: float = 1e-10
    seed: int = 0
    output_dir: str = "honeycomb_rg_out"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        typed = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            v = data[f.name]
            kind = type(f.default)
            if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
                v = float(v)
            elif not isinstance(v, kind) or isinstance(v, bool):
                raise ConfigError(f"{f.name} must be {kind.__name__}, got {v!r}")
            typed[f.name] = v
        return cls(**typed)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def params(self) -> HoppingParams:
        return HoppingParams(self.epsilon, self.gamma3_ratio, self.gamma1_ratio)

    def regime_constants(self) -> RegimeConstants:
        return RegimeConstants(self.kappa0_bar, self.kappa1, self.kappa1_bar, self.kappa2, self.kappa2_bar)

    def power_constants(self) -> PowerCountingConstants:
        return PowerCountingConstants(self.C1, self.C2, self.C3, self.Cg, self.CG)

    def validate(self):
        """Build every derived object once; any failure is a config error."""
        try:
            p = self.params()
            rc = self.regime_constants()
            rc.check(self.epsilon)
            table = scale_thresholds(p, rc, self.beta, self.M)
            LatticeSpec(self.L, self.beta, self.M)
        except (HoneycombError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("tol_fermi", "tol_partition", "tol_exact", "coupling"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        return p, rc, table


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if not raw:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1")
    return n


def ordered_map(fn: Callable, items) -> list:
    """Map over a worker pool; results come back in input order."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(fn, items))


def _real(x: float) -> str:
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------


def bands_rows(p: HoppingParams, path: str, n: int) -> list[list[float]]:
    if path not in PATHS:
        raise ConfigError(f"unknown path {path!r}; choose from {', '.join(PATHS)}")
    if n < 2:
        raise ConfigError("--n must be at least 2")
    (ax, ay), (bx, by) = PATHS[path]
    rows = []
    for t in np.linspace(0.0, 1.0, n):
        kx, ky = ax + t * (bx - ax), ay + t * (by - ay)
        rows.append([kx, ky, *band_eigenvalues(kx, ky, p)])
    return rows


def cmd_bands(cfg: RunConfig, args) -> int:
    p, _, _ = cfg.validate()
    rows = bands_rows(p, args.path, args.n)
    out = Path(cfg.output_dir) / "bands.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_x", "k_y", "e1", "e2", "e3", "e4"])
        for r in rows:
            w.writerow([_real(v) for v in r])
    print(f"bands: {len(rows)} rows -> {out}")
    return 0


def fermi_report(p: HoppingParams) -> list[dict]:
    G = p.coupling
    found = fermi_points_root_find(p)
    out = []
    for pt in fermi_points_closed_form(G):
        match = min(torus_distance(pt.k, q) for q in found) if found else math.inf
        out.append({
            "omega": pt.omega, "j": pt.j, "k_x": pt.kx, "k_y": pt.ky,
            "residual": abs(complex(warping_function(pt.kx, pt.ky, G))),
            "root_finder_distance": match,
        })
    if len(found) != 8:
        raise HoneycombError(f"root finder returned {len(found)} points, expected 8")
    return out


def cmd_fermi(cfg: RunConfig, args) -> int:
    p, _, _ = cfg.validate()
    pts = fermi_report(p)
    out = Path(cfg.output_dir) / "fermi.json"
    write_json(out, pts)
    worst = max(max(q["residual"], q["root_finder_distance"]) for q in pts)
    print(f"fermi: {len(pts)} points, worst residual/match {worst:.2e} -> {out}")
    return 0


def scan_grid(label: str, p: HoppingParams, rc: RegimeConstants, n: int = 12) -> np.ndarray:
    lo, hi = rc.bounds(p.epsilon)[label.split("(")[0]]
    if lo == 0:
        lo = hi * 1e-3
    return np.geomspace(lo * 1.0001, hi * 0.9999, n)


def cmd_regimes(cfg: RunConfig, args) -> int:
    p, rc, _ = cfg.validate()

    def one(label):
        try:
            s = approximation_error_scan(label, p, scan_grid(label, p, rc, args.radii), rc)
        except HoneycombError as exc:
            return {"label": label, "error": str(exc)}
        return {"label": label, "rho": s.rho.tolist(), "relative_error": s.error.tolist(),
                "low_slope": s.low_slope, "high_slope": s.high_slope}

    res = ordered_map(one, SCANNABLE)
    out = Path(cfg.output_dir) / "regimes.json"
    write_json(out, res)
    for r in res:
        msg = r["error"] if "error" in r else f"low {r['low_slope']:+.3f} high {r['high_slope']:+.3f}"
        print(f"regime {r['label']}: {msg}")
    return 0


def cmd_scales(cfg: RunConfig, args) -> int:
    p, _, table = cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    ks = [Momentum3(*rng.uniform(-1, 1, 3) * (0.5, math.pi, math.pi)) for _ in range(args.samples)]
    worst = max(partition_residual(k, table, p) for k in ks)
    payload = {
        "table": dataclasses.asdict(table),
        "scales": [{"h": h, "regime": table.regime_of(h)} for h in table.scales()],
        "partition_residual": worst,
    }
    out = Path(cfg.output_dir) / "scales.json"
    write_json(out, payload)
    print(f"scales: {len(table.scales())} scales, partition residual {worst:.2e} -> {out}")
    return 0


def cmd_trees(cfg: RunConfig, args) -> int:
    cfg.validate()
    counts = []
    for N in range(1, 6):
        for span in range(1, 4):
            counts.append({"N": N, "span": span, "dp": count_trees_dp(N, 0, span),
                           "contracted_dp": count_trees_dp(N, 0, span, "contracted")})
    unlabeled = [sum(1 for _ in enumerate_unlabeled(N)) for N in range(1, 8)]
    pc = power_counting_sum(args.l, args.h, args.regime, cfg.power_constants(), cfg.coupling,
                            n_max=args.n_max, top=args.top)
    payload = {
        "tree_counts": counts,
        "unlabeled_counts": unlabeled,
        "power_counting": {"regime": args.regime, "l": args.l, "h": args.h, "top": args.top,
                           "U": cfg.coupling, "total": pc.total, "by_order": list(pc.by_order),
                           "ratios": list(pc.ratios), "converges": pc.converges()},
    }
    out = Path(cfg.output_dir) / "trees.json"
    write_json(out, payload)
    print(f"trees: unlabeled {unlabeled}; order ratios {[f'{r:.3g}' for r in pc.ratios]} -> {out}")
    return 0


def grassmann_report(seed: int, instances: int) -> dict:
    rng = np.random.default_rng(seed)
    wick = 0.0
    for n in (1, 2, 3):
        spec = GaussianSpec(random_propagator(rng, n))
        for mono in all_monomials(n):
            order = [int(x) for x in rng.permutation(mono)]
            exact = berezin_expectation(spec, GrassmannPoly.monomial(2 * n, order)).scalar_part()
            wick = max(wick, abs(wick_moment(spec, order) - exact))
    margins = []
    for i in range(instances):
        spec = GaussianSpec(random_propagator(rng, 4))
        psets = [[0, 4], [1, 5], [2, 3, 6, 7]] if i % 2 else [[0, 5], [1, 4]]
        margins.append(bbf_check(spec, *psets).margin)
    return {"wick_vs_berezin": wick, "bbf_min_margin": min(margins), "bbf_instances": instances}


def cmd_grassmann(cfg: RunConfig, args) -> int:
    cfg.validate()
    rep = grassmann_report(cfg.seed, args.instances)
    out = Path(cfg.output_dir) / "grassmann.json"
    write_json(out, rep)
    print(f"grassmann: Wick residual {rep['wick_vs_berezin']:.2e}, BBF margin {rep['bbf_min_margin']:.3f} -> {out}")
    return 0


# -- verification suite -------------------------------------------------------


def _check(name: str, value: float, limit: float, larger_is_better: bool = False) -> dict:
    ok = value > limit if larger_is_better else value <= limit
    return {"check": name, "value": value, "limit": limit, "passed": bool(ok)}


def verify_checks(cfg: RunConfig) -> list[Callable[[], dict]]:
    p, rc, table = cfg.validate()
    seed = cfg.seed
    tol = cfg.tol_exact

    def fermi():
        pts = fermi_report(p)
        return _check("fermi points: closed form vs root finder",
                      max(q["root_finder_distance"] for q in pts), cfg.tol_fermi)

    def determinant():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for kx, ky in rng.uniform(-math.pi, math.pi, (500, 2)):
            a = lu_det(inverse_propagator(0.0, kx, ky, p)).real
            b = float(warping_determinant(kx, ky, p))
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
        return _check("zero-frequency determinant identity", worst, 1e-12)

    def special_det():
        rng = np.random.default_rng(seed + 1)
        worst = 0.0
        for k0, kx, ky in rng.uniform(-2, 2, (500, 3)):
            s = SpecialForm.from_propagator(k0, kx, ky, p)
            ref = lu_det(s.matrix()).real
            worst = max(worst, abs(det4_special(s) - ref) / max(abs(ref), 1e-300))
        return _check("closed-form 4x4 determinant vs LU", worst, 1e-12)

    def symmetries():
        rng = np.random.default_rng(seed + 2)
        worst = 0.0
        for k0, kx, ky in rng.uniform(-2, 2, (100, 3)):
            k = Momentum3(k0, kx, ky)
            worst = max(worst, max(symmetry_residual(k, t, p) for t in TRANSFORMS))
        return _check("lattice symmetries of the inverse propagator", worst, 1e-12)

    def partition():
        rng = np.random.default_rng(seed + 3)
        ks = [Momentum3(*rng.uniform(-1, 1, 3) * (0.5, math.pi, math.pi)) for _ in range(200)]
        return _check("partition of unity", max(partition_residual(k, table, p) for k in ks), cfg.tol_partition)

    def recursion():
        rng = np.random.default_rng(seed + 4)
        cut = Cutoffs(table, p)
        worst = 0.0
        for _ in range(20):
            k = Momentum3(*rng.uniform(-1, 1, 3) * (0.5, math.pi, math.pi))
            ref = float(cut.cumulative(table.M, k.k0, k.kx, k.ky)) * np.linalg.inv(
                inverse_propagator(k.k0, k.kx, k.ky, p))
            worst = max(worst, float(np.abs(schwinger_recursion(None, k, table, p) - ref).max()))
        return _check("zero-model recursion telescopes", worst, tol)

    def two_mode():
        rng = np.random.default_rng(seed + 5)
        g1, g2 = random_propagator(rng, 2), random_propagator(rng, 2)
        X = 0.3 * random_propagator(rng, 2)
        diff = float(np.abs(two_mode_recursion(g1, g2, X) - mode_sum_two_point([g1, g2], X)).max())
        return _check("two-mode recursion vs Grassmann integration", diff, tol)

    def grassmann():
        rep = grassmann_report(seed, 10)
        return _check("Wick moments vs Berezin integration", rep["wick_vs_berezin"], tol)

    def bbf():
        rep = grassmann_report(seed, 10)
        return _check("tree-determinant bound margin", rep["bbf_min_margin"], 1.0, larger_is_better=True)

    def trees():
        worst = 0
        for N in range(1, 5):
            for span in range(1, 4):
                for mode in ("standard", "contracted"):
                    n_enum = sum(1 for _ in enumerate_trees(N, 0, span, mode))
                    worst = max(worst, abs(n_enum - count_trees_dp(N, 0, span, mode)))
        return _check("tree enumeration vs counting recursion", float(worst), 0.0)

    def newton():
        model = SelfEnergyModel("zero", params=p)
        return _check("zero self-energy leaves the Fermi points fixed", abs(fermi_shift_newton(model, 0)), 0.0)

    def lower_bound():
        r = intermediate_bound_check(1.0, 0.05, 0.5, n_samples=10_000, seed=seed)
        return _check("intermediate-regime lower bound margin", r.min_margin, 1.0, larger_is_better=True)

    return [fermi, determinant, special_det, symmetries, partition, recursion, two_mode, grassmann, bbf,
            trees, newton, lower_bound]


def cmd_verify(cfg: RunConfig, args) -> int:
    checks = verify_checks(cfg)

    def run(fn):
        try:
            return fn()
        except HoneycombError as exc:
            return {"check": fn.__name__, "value": str(exc), "limit": None, "passed": False}

    results = ordered_map(run, checks)
    out = Path(cfg.output_dir) / "verify.json"
    write_json(out, results)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']}")
    ok = all(r["passed"] for r in results)
    print(f"verify: {sum(r['passed'] for r in results)}/{len(results)} passed -> {out}")
    return 0 if ok else 1


HANDLERS = {
    "bands": cmd_bands, "fermi": cmd_fermi, "regimes": cmd_regimes, "scales": cmd_scales,
    "trees": cmd_trees, "grassmann": cmd_grassmann, "verify": cmd_verify,
}


# -- argument parsing ---------------------------------------------------------


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    for f in dataclasses.fields(RunConfig):
        common.add_argument(_flag(f.name), dest=f.name, type=type(f.default), default=None)
    parser = argparse.ArgumentParser(prog="honeycomb-rg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    b = sub.add_parser("bands", parents=[common])
    b.add_argument("--path", default="gamma-to-K")
    b.add_argument("--n", type=int, default=200)
    sub.add_parser("fermi", parents=[common])
    r = sub.add_parser("regimes", parents=[common])
    r.add_argument("--radii", type=int, default=12)
    s = sub.add_parser("scales", parents=[common])
    s.add_argument("--samples", type=int, default=200)
    t = sub.add_parser("trees", parents=[common])
    t.add_argument("--regime", default="I", choices=("UV", "I", "II", "III"))
    t.add_argument("--l", type=int, default=1)
    t.add_argument("--h", type=int, default=-6)
    t.add_argument("--top", type=int, default=-1)
    t.add_argument("--n-max", dest="n_max", type=int, default=3)
    g = sub.add_parser("grassmann", parents=[common])
    g.add_argument("--instances", type=int, default=20)
    sub.add_parser("verify", parents=[common])
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def run(command: str, cfg: RunConfig, args=None) -> int:
    """Run ``command``; returns the process exit code."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    if args is None:
        args = build_parser().parse_args([command])
    return HANDLERS[command](cfg, args)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return run(args.command, cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
