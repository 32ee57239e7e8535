"""Command-line runner: `bnlab run|validate|report`.

Exit codes: 0 all enabled checks pass, 1 a check failed, 2 configuration or
manifest problem, 3 numerical failure inside a stage.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import STAGES, ConfigSyntaxError, RunConfig, load_config
from .errors import BNLabError, CapabilityError, CapacityError, ConfigurationError

log = logging.getLogger("bnlab")

OUTPUT_ROOT_ENV = "BNLAB_OUTPUT_ROOT"
MANIFEST = "manifest.json"

# fixed CSV layouts
CSV_COLUMNS = {
    "eigens.csv": ("index", "label", "lambda", "l2_norm_sq"),
    "constants.csv": ("name", "value", "drift", "candidate"),
    "reduced.csv": ("index", "t0"),
    "sites.csv": ("bubble", "beta", "s0", "a", *(f"xi{i}" for i in range(5))),
    "residual.csv": ("eps", "tau", "mu", "norm", "stderr"),
    "multipliers.csv": ("eps", "tau", "mu", "d_ratio_max", "c_norm", "gram_cond_scaled"),
    "sweep.csv": ("lambda", "eps", "u0", "max_pos", "max_neg_inf", "mu_est", "nodes"),
}

# acceptance windows
SLOPE_RESIDUAL_N5 = (1.75, 0.15)
A0_REL_TOL = 0.15
SLOPE_NEG = (0.75, 0.10)
SLOPE_MU = (1.5, 0.20)
HALVING_GAIN = 2.0
DETUNE_GAIN = 10.0
DRIFT_MAX = 0.01
D1_ROUTE_TOL = 0.02
STATIONARITY_TOL = 1e-6


class StageFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage} failed: {exc}")
        self.stage = stage
        self.exc = exc


@dataclass
class Check:
    name: str
    value: float
    target: str
    passed: bool

    def line(self) -> str:
        return f"{self.name} = {self.value:.6g} target {self.target} {'PASS' if self.passed else 'FAIL'}"


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    status: str = "running"  # running | complete | partial
    failed_stage: str | None = None
    error: str | None = None
    timings: dict = field(default_factory=dict)
    eigens: dict | None = None
    reduced: dict | None = None
    constants: dict | None = None
    residual: dict | None = None
    multipliers: dict | None = None
    sweep: dict | None = None
    checks: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows):
    cols = CSV_COLUMNS[path.name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


# pipeline ---------------------------------------------------------------------------

class Pipeline:
    def __init__(self, cfg: RunConfig, run_dir: Path | None, workers: int = 1):
        from .domain import DomainSpec, eigenbasis

        self.cfg = cfg
        self.dir = run_dir
        self.workers = workers
        sides = cfg.sides[0] if len(cfg.sides) == 1 else (cfg.sides or None)
        self.domain = DomainSpec.create(cfg.domain, cfg.N, sides)
        self.basis = eigenbasis(self.domain, cfg.kappa)
        if cfg.m > self.basis.multiplicity:
            raise ConfigurationError(f"m={cfg.m} exceeds the multiplicity {self.basis.multiplicity} of kappa={cfg.kappa}")
        self.man = RunManifest(cfg.to_dict(), __version__, cfg.seed)
        self.sol = None
        self.rbasis = None
        self.const = None
        self.const_source = None

    def save(self):
        tmp = self.dir / (MANIFEST + ".tmp")
        tmp.write_text(self.man.to_json())
        tmp.replace(self.dir / MANIFEST)

    def check(self, name, value, target, passed):
        c = Check(name, float(value), target, bool(passed))
        self.man.checks.append(asdict(c))
        log.info(c.line())

    def run(self) -> RunManifest:
        self.save()
        for stage in STAGES:
            if stage not in self.cfg.stages:
                continue
            t0 = time.perf_counter()
            try:
                getattr(self, "stage_" + stage.replace("-", "_"))()
            except (ConfigurationError, CapacityError, CapabilityError):
                self.man.status, self.man.failed_stage = "partial", stage
                self.save()
                raise
            except Exception as exc:  # numerical trouble: keep what we have
                self.man.status, self.man.failed_stage, self.man.error = "partial", stage, f"{type(exc).__name__}: {exc}"
                self.man.timings[stage] = time.perf_counter() - t0
                self.save()
                raise StageFailure(stage, exc) from exc
            self.man.timings[stage] = time.perf_counter() - t0
            self.save()
        self.man.status = "complete"
        self.save()
        return self.man

    # helpers
    def constants(self):
        """Estimated constants if the stage ran, else the closed-form candidates."""
        if self.const is None:
            from .verification import candidate_constants

            self.const = candidate_constants(self.cfg.N, self.basis.lambda_kappa)
            self.const_source = "candidates"
        return self.const

    def c1(self):
        c = self.constants()
        d = c if isinstance(c, dict) else c.values
        return d["d1"] * d["d3"] / d["d2"]

    def reduced(self):
        if self.sol is None:
            self.stage_reduce()
        return self.sol, self.rbasis

    # stages
    def stage_eigens(self):
        b = self.basis
        rows = [{"index": i, "label": str(lab), "lambda": b.lambda_kappa, "l2_norm_sq": float(b.l2_norms_sq[i])}
                for i, lab in enumerate(b.labels or range(b.m))]
        write_csv(self.dir / "eigens.csv", rows)
        self.man.eigens = {"kappa": b.kappa, "lambda_kappa": b.lambda_kappa, "multiplicity": b.multiplicity,
                           "labels": [str(x) for x in b.labels]}

    def stage_constants(self):
        from .domain import UnitBall, eigenbasis
        from .verification import estimate_constants

        ball = UnitBall(self.cfg.N)
        est = estimate_constants(ball, eigenbasis(ball, 1), probes=self.cfg.probes, strict=False)
        d1_route = abs(est.d1 / est.candidates["d1"] - 1)
        self.check("constants.max_drift", max(est.drift.values()), f"< {DRIFT_MAX}", max(est.drift.values()) < DRIFT_MAX)
        self.check("constants.d1_two_route", d1_route, f"< {D1_ROUTE_TOL}", d1_route < D1_ROUTE_TOL)
        if not math.isclose(est.lambda_kappa, self.basis.lambda_kappa):
            est = est.rescaled(self.basis.lambda_kappa)
        self.const, self.const_source = est, "estimated"
        self.man.constants = est.to_dict()
        write_csv(self.dir / "constants.csv",
                  [{"name": n, "value": est.values[n], "drift": est.drift[n], "candidate": est.candidates[n]}
                   for n in ("d1", "d2", "d3", "d4")])

    def stage_reduce(self):
        from .reduced import solve_N4, solve_N5

        cfg = self.cfg
        if cfg.N == 5:
            sol, rb = solve_N5(self.domain, self.basis, cfg.k, cfg.m, c1=self.c1(), grid_resolution=cfg.grid_resolution,
                               seed=cfg.seed, multistarts=cfg.multistarts, order=cfg.quad_order)
        else:
            sol, rb = solve_N4(self.domain, self.basis, cfg.k, cfg.m, cfg.rho, multistarts=cfg.multistarts,
                               seed=cfg.seed, c1=self.c1(), grid_resolution=cfg.grid_resolution)
        self.sol, self.rbasis = sol, rb
        d = sol.to_dict()
        d["constants_source"] = self.const_source
        self.man.reduced = d
        worst = max(sol.stationarity.values()) if sol.stationarity else 0.0
        self.check("reduce.stationarity", worst, f"<= {STATIONARITY_TOL}", worst <= STATIONARITY_TOL)
        write_csv(self.dir / "reduced.csv", [{"index": i, "t0": float(v)} for i, v in enumerate(sol.t0)])
        rows = []
        for j in range(sol.k):
            r = {"bubble": j, "beta": float(sol.beta[j]), "s0": float(sol.s0[j]), "a": float(sol.a[j])}
            r.update({f"xi{i}": float(v) for i, v in enumerate(np.atleast_2d(sol.xi0)[j])})
            rows.append(r)
        write_csv(self.dir / "sites.csv", rows)

    def stage_residual_sweep(self):
        from .verification import residual_sweep

        sol, rb = self.reduced()
        eps = self.cfg.eps_grid.eps(sol.A0)
        rep = residual_sweep(sol, rb, self.domain, self.constants(), eps, samples=self.cfg.samples, seed=self.cfg.seed,
                             rel_tol=self.cfg.rel_tol, refine=self.cfg.refine, workers=self.workers)
        self.man.residual = rep.to_dict()
        write_csv(self.dir / "residual.csv",
                  [dict(zip(CSV_COLUMNS["residual.csv"], r)) for r in rep.rows()])
        worst = max(se / n for se, n in zip(rep.stderr, rep.norm))
        self.check("residual.max_rel_stderr", worst, f"<= {self.cfg.rel_tol}", worst <= self.cfg.rel_tol)
        if rep.fit is None:
            return
        if self.cfg.N == 5:
            tgt, tol = SLOPE_RESIDUAL_N5
            self.check("slope(|E|)", rep.fit.value, f"{tgt} +- {tol}", abs(rep.fit.value - tgt) <= tol)
        else:
            A0 = self._A0()
            rel = abs(rep.fit.value / A0 - 1)
            self.check("A(|E|)", rep.fit.value, f"{A0:.6g} within {A0_REL_TOL:.0%}", rel <= A0_REL_TOL)

    def _A0(self):
        sol, _ = self.reduced()
        return float(sol.A0)

    def stage_multipliers(self):
        from .ansatz import build_ansatz
        from .verification import MultiplierReport, extract_multipliers

        cfg = self.cfg
        sol, rb = self.reduced()
        const = self.constants()
        D = np.asarray(rb.l2_norms_sq)
        eps_list = [cfg.multiplier_eps / 2**i for i in range(cfg.multiplier_halvings + 1)]
        entries, rows, ratios = [], [], []
        for i, eps in enumerate(eps_list):
            p = build_ansatz(sol, rb, self.domain, eps, const, refine=True)
            e = extract_multipliers(p, const, scheme=cfg.quad_scheme, samples=cfg.samples, seed=cfg.seed + i)
            entries.append(e)
            ratios.append(float(np.max(e.d_ratio(D))))
            rows.append({"eps": eps, "tau": e.tau, "mu": e.mu, "d_ratio_max": ratios[-1],
                         "c_norm": float(np.linalg.norm(e.c)), "gram_cond_scaled": e.gram_cond_scaled})
        gains = [a / b for a, b in zip(ratios, ratios[1:])]
        self.check("multipliers.min_gain_per_halving", min(gains), f">= {HALVING_GAIN}", min(gains) >= HALVING_GAIN)
        # detuning at the smallest eps
        base = np.linalg.norm(entries[-1].d)
        xi_shift = np.zeros_like(p.xi)
        xi_shift[:, 0] = 0.1
        det = {}
        for label, q in (("t", p.replace(t=p.t * 1.1)), ("xi", p.replace(xi=p.xi + xi_shift))):
            e = extract_multipliers(q, const, scheme=cfg.quad_scheme, samples=cfg.samples, seed=cfg.seed + len(eps_list))
            det[label] = float(np.linalg.norm(e.d) / base)
            self.check(f"multipliers.detune_{label}", det[label], f">= {DETUNE_GAIN}", det[label] >= DETUNE_GAIN)
        self.man.multipliers = dict(MultiplierReport(entries).to_dict(), ratios=ratios, gains=gains, detuning=det)
        write_csv(self.dir / "multipliers.csv", rows)

    def stage_shoot(self):
        from .radial import concentration_sweep

        if self.cfg.domain != "ball":
            raise ConfigurationError("the radial oracle needs the ball")
        tab = concentration_sweep(self.cfg.N, self.cfg.shoot_eps_grid.eps(), workers=self.workers)
        self.man.sweep = tab.to_dict()
        write_csv(self.dir / "sweep.csv", tab.rows)
        if self.cfg.N == 5 and tab.slopes:
            for key, (tgt, tol) in (("max_neg_inf", SLOPE_NEG), ("mu_est", SLOPE_MU)):
                v = tab.slopes[key]
                self.check(f"slope({key})", v, f"{tgt} +- {tol}", abs(v - tgt) <= tol)
            dist = [r["profile_distance"] for r in tab.rows]
            mono = all(b < a for a, b in zip(dist, dist[1:]))
            self.check("profile_distance.monotone", float(mono), "1", mono)


def make_run_dir(cfg: RunConfig, root: str | None = None) -> Path:
    root = Path(root or cfg.output_dir or os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = root / f"{stamp}-{cfg.digest()}"
    d, n = base, 1
    while d.exists():
        d = Path(f"{base}.{n}")
        n += 1
    d.mkdir(parents=True)
    return d


# commands ------------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config).with_overrides(args.seed_override, args.stage)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        pipe = Pipeline(cfg, None, workers=args.workers)
        pipe.dir = make_run_dir(cfg, args.output_root)
        print(f"run directory: {pipe.dir}")
        man = pipe.run()
    except (ConfigurationError, CapacityError, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageFailure as exc:
        print(f"error: stage {exc.stage}: {type(exc.exc).__name__}: {exc.exc}", file=sys.stderr)
        return 3
    for c in man.checks:
        print(Check(**c).line())
    return 0 if man.passed else 1


def preflight(cfg: RunConfig) -> list[str]:
    """Cheap feasibility checks; raises ConfigurationError / CapacityError on hard problems."""
    from .domain import DomainSpec, eigenbasis, nodal_domains
    from .ansatz import MU_FLOOR
    from .verification import candidate_constants

    sides = cfg.sides[0] if len(cfg.sides) == 1 else (cfg.sides or None)
    dom = DomainSpec.create(cfg.domain, cfg.N, sides)
    basis = eigenbasis(dom, cfg.kappa)
    msgs = [f"kappa={cfg.kappa}: lambda={basis.lambda_kappa:.10g}, multiplicity={basis.multiplicity}"]
    if cfg.m > basis.multiplicity:
        raise ConfigurationError(f"m={cfg.m} exceeds the multiplicity {basis.multiplicity} of kappa={cfg.kappa}")
    if cfg.N == 5:
        nod = nodal_domains(basis.combination(np.eye(basis.m)[0]), dom, cfg.grid_resolution)
        if cfg.k > nod.count:
            raise CapacityError(f"k={cfg.k} bubbles but the eigenfunction has only n_kappa={nod.count} nodal domains")
        msgs.append(f"capacity: k={cfg.k} <= n_kappa={nod.count}")
        msgs.append("eps window: power-law regime, no floating-point limit on the grid")
    else:
        from .reduced import solve_N4

        const = candidate_constants(4, basis.lambda_kappa)
        c1 = const["d1"] * const["d3"] / const["d2"]
        sol, _ = solve_N4(dom, basis, cfg.k, cfg.m, cfg.rho, multistarts=min(cfg.multistarts, 8), seed=cfg.seed,
                          c1=c1, grid_resolution=cfg.grid_resolution)
        A0 = float(sol.A0)
        lo, hi = A0 / -math.log(MU_FLOOR), A0 / math.log(100.0)
        msgs.append(f"A0 ~ {A0:.6g}; eps window ({lo:.4g}, {hi:.4g}) keeps {MU_FLOOR:g} < mu < 1e-2")
    return msgs


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        msgs = preflight(cfg)
    except (ConfigurationError, CapacityError, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BNLabError as exc:
        print(f"error: preflight failed: {exc}", file=sys.stderr)
        return 3
    print("ok")
    for m in msgs:
        print("  " + m)
    return 0


def load_manifest(run_dir) -> RunManifest:
    path = Path(run_dir) / MANIFEST
    try:
        return RunManifest.from_json(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"no manifest in {run_dir}") from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise ConfigurationError(f"corrupt manifest {path}: {exc}") from None


def format_report(man: RunManifest) -> str:
    out = [f"bnlab {man.version}  status={man.status}  seed={man.seed}"]
    if man.failed_stage:
        out.append(f"failed stage: {man.failed_stage} ({man.error})")
    if man.reduced:
        r = man.reduced
        out.append(f"reduced: N={r['N']} t0={np.round(r['t0'], 8).tolist()} s0={np.round(r['s0'], 8).tolist()} "
                   f"L0={r['L0']:.8g}" + (f" A0={r['A0']:.8g}" if r["N"] == 4 and r.get("A0") is not None else ""))
    if man.constants:
        v = man.constants["values"]
        out.append("constants: " + " ".join(f"{k}={v[k]:.6g}" for k in ("d1", "d2", "d3", "d4")))
    if man.residual and man.residual.get("fit"):
        f = man.residual["fit"]
        out.append(f"residual fit ({f['model']}): {f['value']:.4f} +- {f['stderr']:.4f}")
    if man.sweep and man.sweep.get("slopes"):
        out.append("radial slopes: " + " ".join(f"{k}={v:.4f}" for k, v in man.sweep["slopes"].items()))
    for c in man.checks:
        out.append(Check(**c).line())
    return "\n".join(out)


def cmd_report(args) -> int:
    try:
        man = load_manifest(args.run_dir)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_report(man))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bnlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured stages")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed-override", type=int, default=None)
    r.add_argument("--stage", action="append", choices=STAGES, help="restrict to these stages (repeatable)")
    r.add_argument("--output-root", default=None, help=f"defaults to config output_dir, then ${OUTPUT_ROOT_ENV}, then ./runs")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="schema check and feasibility preflight")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
