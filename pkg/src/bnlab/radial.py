"""Radial shooting on the unit ball: an independent check of the blow-up rates."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .bubble import check_dimension, dimension_constants
from .domain.eigen import bessel_F, bessel_zero
from .errors import BranchNotFoundError, ConfigurationError


@dataclass
class ShootResult:
    N: int
    lam: float
    u0: float
    u1: float  # u(1)
    du1: float
    nodes: list  # sign-change radii in (0, 1)
    max_pos: float
    max_neg: float  # max of u^- = max(-u, 0)
    blowup_radius: float | None = None
    solution: object = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.nodes)


@dataclass
class RadialProfile:
    N: int
    lam: float
    u0: float
    node_radii: list
    r: np.ndarray
    u: np.ndarray
    max_pos: float
    max_neg: float
    u1: float
    ode_residual: float = float("nan")


def _rhs(N, lam, q):
    def f(r, y):
        u, v = y
        return [v, -(N - 1) / r * v - lam * u - np.abs(u) ** q * u]

    return f


def series_start(N, lam, u0, r):
    """u, u' at small r from u = u0 - (lam u0 + f(u0)) r^2 / (2N) + O(r^4)."""
    q = 4.0 / (N - 2)
    g = lam * u0 + abs(u0) ** q * u0
    return u0 - g * r * r / (2 * N), -g * r / N


def shoot(N: int, lam: float, u0: float, rtol: float = 1e-12, r_start: float = 1e-4, dense: bool = False,
          blowup: float = 1e14) -> ShootResult:
    """Integrate u'' + (N-1)/r u' + lam u + |u|^{4/(N-2)} u = 0 from u(0) = u0 to r = 1."""
    N = check_dimension(N)
    if u0 == 0:
        raise ConfigurationError("u0 must be nonzero")
    c = dimension_constants(N)
    q = 4.0 / (N - 2)
    scale = (c.alpha_N / abs(u0)) ** (2 / (N - 2))  # bubble width for this centre value
    r0 = min(r_start, 1e-3 * scale, 1e-3 / np.sqrt(abs(lam) + 1))
    y0 = series_start(N, lam, u0, r0)

    def zero(r, y):
        return y[0]

    def big(r, y):
        return abs(y[0]) - blowup * max(1.0, abs(u0))

    big.terminal = True
    sol = integrate.solve_ivp(_rhs(N, lam, q), (r0, 1.0), y0, method="DOP853", rtol=rtol,
                              atol=rtol * 1e-3 * max(1e-300, min(1.0, abs(u0))), events=(zero, big),
                              dense_output=dense)
    if sol.status == -1:
        raise BranchNotFoundError(f"integration failed: {sol.message}", {"u0": u0, "lam": lam})
    nodes = [float(r) for r in sol.t_events[0] if r < 1.0 - 1e-9]  # a zero at the wall is the boundary condition
    blow = float(sol.t_events[1][0]) if len(sol.t_events[1]) else None
    u = sol.y[0]
    return ShootResult(N, lam, float(u0), float(u[-1]), float(sol.y[1][-1]), nodes,
                       float(max(np.max(u), u0 if u0 > 0 else 0.0)), float(max(np.max(-u), 0.0)), blow,
                       sol if dense else None)


def _count(N, lam, u0, rtol):
    s = shoot(N, lam, u0, rtol)
    return s.node_count, s.u1


def solve_radial(N: int, lam: float, node_count: int, u0_range=(1e-3, 1e12), n_scan: int = 121,
                 rtol: float = 1e-12, tol: float = 1e-10, positive: bool = True,
                 branch: str = "first") -> RadialProfile:
    """Radial solution with `node_count` interior zeros and u(0) > 0 (or < 0).

    A solution sits where the zero count in (0, 1) changes between node_count and
    node_count + 1, i.e. where a zero passes through r = 1. branch="first" takes the
    smallest such u0 with the count increasing; branch="concentrating" takes the
    largest u0 with node_count + 1 zeros just below it, which is the blow-up branch.
    """
    N = check_dimension(N)
    if branch not in ("first", "concentrating"):
        raise ConfigurationError(f"unknown branch {branch!r}")
    sgn = 1.0 if positive else -1.0
    lo, hi = u0_range
    grid = np.geomspace(lo, hi, n_scan)
    counts = [_count(N, lam, sgn * u, rtol)[0] for u in grid]
    pairs = list(zip(grid[:-1], grid[1:], counts[:-1], counts[1:]))
    if branch == "first":
        hits = [(a, b) for a, b, na, nb in pairs if na == node_count and nb == node_count + 1]
    else:
        hits = [(a, b) for a, b, na, nb in pairs if na == node_count + 1 and nb == node_count][::-1]
    if not hits:
        raise BranchNotFoundError(f"no {node_count}-node branch in u0 range {lo:.3g}..{hi:.3g} at lambda={lam}",
                                  {"lam": lam, "range": [lo, hi], "counts": counts})
    a, b = hits[0]

    def g(u):
        return shoot(N, lam, sgn * u, rtol).u1

    ga, gb = g(a), g(b)
    if ga * gb > 0:
        # zero count jumped without a sign change of u(1); refine the bracket
        for u in np.geomspace(a, b, 41):
            gu = g(u)
            if gu * ga <= 0:
                b, gb = u, gu
                break
            a, ga = u, gu
    u0 = optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)
    s = shoot(N, lam, sgn * u0, rtol, dense=True)
    if len(s.nodes) != node_count:
        # brentq may land just on the far side of the transition
        for u in (np.nextafter(u0, 0), np.nextafter(u0, np.inf)):
            s2 = shoot(N, lam, sgn * u, rtol, dense=True)
            if len(s2.nodes) == node_count:
                s = s2
                break
    if abs(s.u1) > tol * max(1.0, s.max_neg, 1.0):
        warnings.warn(f"|u(1)| = {abs(s.u1):.3g} above tolerance {tol}", RuntimeWarning, stacklevel=2)
    r = np.concatenate([np.linspace(0, 1, 2001)[1:], s.solution.t])
    r = np.unique(r[(r >= s.solution.t[0]) & (r <= 1.0)])
    u = s.solution.sol(r)[0]
    prof = RadialProfile(N, lam, s.u0, s.nodes, r, u, s.max_pos, s.max_neg, s.u1)
    prof.ode_residual = ode_residual(prof, s.solution)
    return prof


def ode_residual(profile: RadialProfile, solution, n: int = 400) -> float:
    """Relative ODE defect of the dense output on a resampled grid, by re-integration.

    Compares the dense interpolant against an independent integration at tighter tolerance.
    """
    N, lam = profile.N, profile.lam
    q = 4.0 / (N - 2)
    t0 = solution.t[0]
    y0 = solution.sol(t0)
    rr = np.geomspace(t0, 1.0, n)
    ref = integrate.solve_ivp(_rhs(N, lam, q), (t0, 1.0), y0, method="DOP853", rtol=1e-13,
                              atol=1e-16 * max(1.0, abs(profile.u0)), t_eval=rr)
    diff = np.abs(ref.y[0] - solution.sol(rr)[0])
    return float(np.max(diff) / max(abs(profile.u0), 1e-300))


@dataclass
class SweepTable:
    N: int
    lam_rad: float
    rows: list  # dicts with lambda, eps, u0, max_pos, max_neg_inf, mu_est, nodes, profile_distance
    slopes: dict
    failed: list = field(default_factory=list)  # grid indices where the branch was not found

    def to_dict(self):
        return {"N": self.N, "lam_rad": self.lam_rad, "rows": self.rows, "slopes": self.slopes,
                "failed": self.failed}


def radial_eigenvalue(N: int, radial_index: int = 1) -> float:
    return bessel_zero(N / 2 - 1, radial_index) ** 2


def profile_distance(profile: RadialProfile, radial_index: int = 1, r_min: float | None = None) -> float:
    """sup |u^-/||u^-|| - e/||e||| over [r_min, 1] for the radial eigenfunction e (positive).

    u^- vanishes inside the node, so the comparison excludes the core. The default
    r_min = |lambda_rad - lambda|^{1/2} is the radius beyond which the bubble tail
    falls below the eigenfunction part (tail ~ mu^{3/2} r^{-3} against tau).
    """
    N = profile.N
    j = bessel_zero(N / 2 - 1, radial_index)
    if r_min is None:
        r_min = float(np.sqrt(abs(j**2 - profile.lam)))
    e = bessel_F(N / 2 - 1, j * profile.r)
    e = e / np.max(np.abs(e))
    um = np.maximum(-profile.u, 0.0)
    um = um / np.max(um)
    mask = profile.r >= r_min
    if not np.any(mask):
        raise ConfigurationError("r_min leaves no sample points")
    return float(np.max(np.abs(um - e)[mask]))


def _sweep_point(args):
    N, lam, eps, node_count, radial_index, rtol, u0_range = args
    try:
        prof = solve_radial(N, lam, node_count, u0_range, rtol=rtol, branch="concentrating")
    except BranchNotFoundError:
        return None
    c = dimension_constants(N)
    return {"lambda": lam, "eps": eps, "u0": prof.u0, "max_pos": prof.max_pos, "max_neg_inf": prof.max_neg,
            "mu_est": (c.alpha_N / prof.max_pos) ** (2 / (N - 2)), "nodes": len(prof.node_radii),
            "profile_distance": profile_distance(prof, radial_index), "u1": prof.u1,
            "ode_residual": prof.ode_residual}


def concentration_sweep(N: int, eps_grid, node_count: int = 1, radial_index: int = 1, rtol: float = 1e-12,
                        u0_range=(1e-2, 1e12), workers: int = 1) -> SweepTable:
    """Concentrating branch at lambda = lambda_rad -/+ eps; fits log-log slopes in eps.

    Grid points where the branch does not exist (it folds away at larger eps) are
    listed in `failed` and left out of the fit.
    """
    from .verification import parallel_map

    N = check_dimension(N)
    lam_rad = radial_eigenvalue(N, radial_index)
    eps_grid = sorted(map(float, eps_grid), reverse=True)
    side = -1 if N == 5 else 1
    jobs = [(N, lam_rad + side * eps, eps, node_count, radial_index, rtol, u0_range) for eps in eps_grid]
    out = parallel_map(_sweep_point, jobs, workers)
    rows = [r for r in out if r is not None]
    failed = [i for i, r in enumerate(out) if r is None]
    slopes = {}
    if len(rows) >= 3:
        from .verification import rate_fit

        e = [r["eps"] for r in rows]
        slopes["max_neg_inf"] = rate_fit(e, [r["max_neg_inf"] for r in rows], model="power").value
        slopes["mu_est"] = rate_fit(e, [r["mu_est"] for r in rows], model="power").value
    return SweepTable(N, lam_rad, rows, slopes, failed)
