"""Flat key = value run configuration.

One setting per line, `#` starts a comment. Lists are comma or space separated.
Unknown keys, bad values and out-of-range numbers are reported with the line number.

    domain = ball            # ball | box
    sides = 3.14159          # box side lengths (one value or N values)
    N = 5
    kappa = 1
    m = 1
    k = 1
    rho = 0.1
    stages = reduce, constants, residual-sweep
    eps_grid = geom 0.1 0.001 9      # or: list 0.1 0.05 ...  or (N=4): mu 1e-2 1e-6 7
    multiplier_eps = 0.1
    multiplier_halvings = 4
    shoot_eps_grid = geom 0.1 0.001 9
    quad_scheme = auto       # auto | axisymmetric | stratified-mc
    samples = 200000
    rel_tol = 0.05
    seed = 0
    multistarts = 16
    grid_resolution = 12
    quad_order = 14
    probes = 1e-2, 5e-3, 2.5e-3, 1.25e-3
    refine = false
    output_dir = runs
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ConfigurationError

STAGES = ("eigens", "constants", "reduce", "residual-sweep", "multipliers", "shoot")


class ConfigSyntaxError(ConfigurationError):
    def __init__(self, message, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class GridSpec:
    kind: str  # geom | list | mu
    values: tuple

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = text.replace(",", " ").split()
        if not parts:
            raise ValueError("empty grid")
        kind, rest = parts[0], parts[1:]
        if kind not in ("geom", "list", "mu"):
            # bare numbers are a list
            kind, rest = "list", parts
        nums = tuple(float(v) for v in rest)
        if kind in ("geom", "mu"):
            if len(nums) != 3 or int(nums[2]) != nums[2] or nums[2] < 2:
                raise ValueError(f"'{kind}' needs start stop count")
            if nums[0] <= 0 or nums[1] <= 0:
                raise ValueError("grid endpoints must be positive")
            nums = (nums[0], nums[1], int(nums[2]))
        elif not nums or any(v <= 0 for v in nums):
            raise ValueError("grid values must be positive")
        return cls(kind, nums)

    def eps(self, A0: float | None = None) -> list[float]:
        if self.kind == "list":
            return [float(v) for v in self.values]
        a, b, n = self.values
        if self.kind == "geom":
            return [float(v) for v in np.geomspace(a, b, n)]
        if A0 is None:
            raise ConfigurationError("a 'mu' grid needs the exponent A0 from the reduce stage")
        # mu = exp(-A0/eps)
        return [float(A0 / -np.log(mu)) for mu in np.geomspace(a, b, n)]

    def __str__(self):
        return " ".join([self.kind] + [repr(v) for v in self.values])


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split())


def _stages(s):
    out = tuple(v for v in s.replace(",", " ").split())
    bad = [v for v in out if v not in STAGES]
    if bad:
        raise ValueError(f"unknown stage(s) {bad}; choose from {list(STAGES)}")
    return out


@dataclass(frozen=True)
class RunConfig:
    domain: str = "ball"
    N: int = 5
    kappa: int = 1
    m: int = 1
    k: int = 1
    rho: float = 0.1
    sides: tuple = ()
    stages: tuple = ("reduce",)
    eps_grid: GridSpec = field(default_factory=lambda: GridSpec("geom", (0.1, 0.001, 9)))
    multiplier_eps: float = 0.1
    multiplier_halvings: int = 4
    shoot_eps_grid: GridSpec = field(default_factory=lambda: GridSpec("geom", (0.1, 0.001, 9)))
    quad_scheme: str = "auto"
    samples: int = 200_000
    rel_tol: float = 0.05
    seed: int = 0
    multistarts: int = 16
    grid_resolution: int = 12
    quad_order: int = 14
    probes: tuple = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    refine: bool = False
    output_dir: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps_grid"] = str(self.eps_grid)
        d["shoot_eps_grid"] = str(self.shoot_eps_grid)
        d["sides"] = list(self.sides)
        d["stages"] = list(self.stages)
        d["probes"] = list(self.probes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for key in ("eps_grid", "shoot_eps_grid"):
            if key in d:
                d[key] = GridSpec.parse(d[key])
        for key in ("sides", "stages", "probes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def digest(self) -> str:
        """Short hash of the settings that affect numerics (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:8]

    def with_overrides(self, seed: int | None = None, stages=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if stages:
            cfg = replace(cfg, stages=tuple(s for s in STAGES if s in stages))
        return cfg


_PARSERS = {
    "domain": str.strip, "N": int, "kappa": int, "m": int, "k": int, "rho": float, "sides": _floats,
    "stages": _stages, "eps_grid": GridSpec.parse, "multiplier_eps": float, "multiplier_halvings": int,
    "shoot_eps_grid": GridSpec.parse, "quad_scheme": str.strip, "samples": int, "rel_tol": float, "seed": int,
    "multistarts": int, "grid_resolution": int, "quad_order": int, "probes": _floats, "refine": _bool,
    "output_dir": str.strip,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}

_CHECKS = {
    "domain": (lambda v: v in ("ball", "box"), "must be 'ball' or 'box'"),
    "N": (lambda v: v in (4, 5), "must be 4 or 5"),
    "kappa": (lambda v: v >= 1, "must be >= 1"),
    "m": (lambda v: v >= 1, "must be >= 1"),
    "k": (lambda v: v >= 1, "must be >= 1"),
    "rho": (lambda v: v > 0, "must be positive"),
    "sides": (lambda v: all(s > 0 for s in v), "must be positive"),
    "multiplier_eps": (lambda v: v > 0, "must be positive"),
    "multiplier_halvings": (lambda v: v >= 1, "must be >= 1"),
    "quad_scheme": (lambda v: v in ("auto", "axisymmetric", "stratified-mc"), "must be auto, axisymmetric or stratified-mc"),
    "samples": (lambda v: v >= 1000, "must be >= 1000"),
    "rel_tol": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "seed": (lambda v: v >= 0, "must be nonnegative"),
    "multistarts": (lambda v: v >= 1, "must be >= 1"),
    "grid_resolution": (lambda v: v >= 8, "must be >= 8"),
    "quad_order": (lambda v: 4 <= v <= 40, "must lie in 4..40"),
    "probes": (lambda v: len(v) >= 3 and all(np.isclose(b, a / 2) for a, b in zip(v, v[1:])), "must be >= 3 successive halvings"),
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values, lines = {}, {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"expected 'key = value', got {raw.strip()!r}", n, source)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigSyntaxError(f"unknown key {key!r}", n, source)
        if key in values:
            raise ConfigSyntaxError(f"duplicate key {key!r} (first on line {lines[key]})", n, source)
        try:
            v = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigSyntaxError(f"bad value for {key}: {exc}", n, source) from None
        ok, msg = _CHECKS.get(key, (lambda _: True, ""))
        if not ok(v):
            raise ConfigSyntaxError(f"{key} {msg} (got {val})", n, source)
        values[key], lines[key] = v, n
    cfg = RunConfig(**values)
    # cross-field rules
    if cfg.domain == "ball" and cfg.sides:
        raise ConfigSyntaxError("sides only applies to the box", lines["sides"], source)
    if cfg.sides and len(cfg.sides) not in (1, cfg.N):
        raise ConfigSyntaxError(f"sides needs 1 or N={cfg.N} values", lines["sides"], source)
    if cfg.eps_grid.kind == "mu" and cfg.N != 4:
        raise ConfigSyntaxError("a 'mu' eps grid is only meaningful for N=4", lines.get("eps_grid"), source)
    if cfg.k > 1 and cfg.domain == "ball" and "multipliers" in cfg.stages and cfg.quad_scheme == "axisymmetric":
        raise ConfigSyntaxError("the axisymmetric scheme handles a single bubble", lines.get("quad_scheme"), source)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigSyntaxError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
