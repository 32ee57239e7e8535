"""Quadrature on the supported domains.

Two schemes: deterministic product Gauss rules ("tensor-gauss") and seeded
stratified Monte Carlo ("stratified-mc") with shells refined around declared
concentration centres.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn

from ..bubble import sphere_area
from ..errors import ConfigurationError, NumericalError
from .geometry import DomainSpec, HyperBox, UnitBall


@dataclass
class QuadResult:
    value: np.ndarray | float
    stderr: np.ndarray | float
    n_evals: int
    scheme: str


@dataclass
class QuadSettings:
    scheme: str = "tensor-gauss"
    order: int = 16  # Gauss nodes per axis / per panel
    panels: int = 1  # panels per axis (box) for non-smooth integrands
    samples: int = 200_000
    seed: int = 0
    centers: tuple = ()
    scales: tuple = ()  # concentration scale mu_j per centre
    shell_factor: float = 1.0  # refinement balls of radius shell_factor * sqrt(mu)
    n_shells: int = 10
    rel_tol: float | None = None  # raise if relative standard error exceeds this


@lru_cache(maxsize=64)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_interval(a: float, b: float, n: int, panels: int = 1):
    edges = np.linspace(a, b, panels + 1)
    x0, w0 = _gl(n)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * x0 + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w0)
    return np.concatenate(xs), np.concatenate(ws)


def graded_interval(a: float, b: float, scale: float, n: int, per_decade: int = 1, breaks=()):
    """Gauss panels on [a, b] geometrically refined towards a, with smallest panel ~ scale.

    `breaks` adds panel edges where the integrand is known to be non-smooth.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    scale = min(max(scale, 1e-300), b - a)
    n_dec = max(1, int(np.ceil(np.log10((b - a) / scale) * per_decade)))
    edges = a + np.concatenate([[0.0], np.geomspace(scale, b - a, n_dec + 1)])
    extra = [r for r in breaks if a < r < b]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))
    x0, w0 = _gl(n)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * x0 + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w0)
    return np.concatenate(xs), np.concatenate(ws)


def box_rule(box: HyperBox, order: int, panels: int = 1, splits=None):
    """Tensor Gauss-Legendre nodes and weights on the box.

    `splits` optionally lists interior break points per axis (e.g. nodal planes).
    """
    axes = []
    for i, L in enumerate(box.sides):
        pts = [0.0] + sorted(splits[i] if splits else []) + [L]
        xs, ws = [], []
        for lo, hi in zip(pts[:-1], pts[1:]):
            x, w = gauss_interval(lo, hi, order, panels)
            xs.append(x)
            ws.append(w)
        axes.append((np.concatenate(xs), np.concatenate(ws)))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return nodes, weights


def ball_rule(N: int, n_radial: int, n_angle: int, radial_panels: int = 2):
    """Hyperspherical product rule on the unit ball.

    x = r * (cos t1, sin t1 cos t2, ..., sin t1 ... sin t_{N-2} cos phi, ... sin phi),
    Gauss in r and the polar angles, trapezoid in the periodic angle phi.
    """
    r, wr = gauss_interval(0.0, 1.0, n_radial, radial_panels)
    wr = wr * r ** (N - 1)
    th, wt = gauss_interval(0.0, np.pi, n_angle)
    nphi = 2 * n_angle
    phi = 2 * np.pi * np.arange(nphi) / nphi
    wphi = np.full(nphi, 2 * np.pi / nphi)
    axes = [r] + [th] * (N - 2) + [phi]
    grids = np.meshgrid(*axes, indexing="ij")
    R = grids[0]
    angles = grids[1:]
    x = np.empty(R.shape + (N,))
    s = np.ones_like(R)
    for k in range(N - 1):
        x[..., k] = R * s * np.cos(angles[k])
        s = s * np.sin(angles[k])
    x[..., N - 1] = R * s
    w = wr.reshape((-1,) + (1,) * (N - 1))
    for k in range(N - 2):
        shape = [1] * N
        shape[k + 1] = -1
        w = w * (wt * np.sin(th) ** (N - 2 - k)).reshape(shape)
    shape = [1] * N
    shape[-1] = -1
    w = w * wphi.reshape(shape)
    return x.reshape(-1, N), np.broadcast_to(w, R.shape).reshape(-1)


@dataclass
class AxisymmetricRule:
    """Product rule in polar coordinates (rho, theta) centred at `center` on the unit ball.

    Exact reduction for integrands invariant under rotations fixing the line
    through 0 and `center`. `breaks(center, u, rmax)` may return extra radial
    panel edges along the ray with direction u. Points are returned in the (axis, transverse) plane,
    embedded as x = center + rho (cos theta a + sin theta b).
    """

    points: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    axis: np.ndarray


def axisymmetric_ball_rule(N: int, center, scale: float, n_theta: int = 24, n_rho: int = 12,
                           per_decade: int = 2, axis=None, breaks=None) -> AxisymmetricRule:
    center = np.asarray(center, dtype=float)
    c = float(np.linalg.norm(center))
    if c >= 1:
        raise ConfigurationError("centre must lie inside the unit ball")
    if axis is None:
        axis = center / c if c > 0 else np.eye(N)[0]
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    # transverse unit vector
    trial = np.eye(N)[np.argmin(np.abs(axis))]
    b = trial - axis * (trial @ axis)
    b /= np.linalg.norm(b)
    th, wt = gauss_interval(0.0, np.pi, n_theta)
    # |S^{N-2}| sin^{N-2} theta carries the transverse sphere
    wt = wt * sphere_area(N - 1) * np.sin(th) ** (N - 2)
    pts, ws, rhos, ths = [], [], [], []
    for t, w in zip(th, wt):
        # rho_max(theta): |center + rho u| = 1, with u . axis = cos t
        ct = np.cos(t)
        rmax = -c * ct + np.sqrt(c * c * ct * ct + 1 - c * c)
        u = np.cos(t) * axis + np.sin(t) * b
        extra = breaks(center, u, rmax) if breaks is not None else ()
        r, wr = graded_interval(0.0, rmax, scale, n_rho, per_decade, extra)
        pts.append(center + r[:, None] * u)
        ws.append(w * wr * r ** (N - 1))
        rhos.append(r)
        ths.append(np.full_like(r, t))
    return AxisymmetricRule(np.concatenate(pts), np.concatenate(ws), np.concatenate(rhos),
                            np.concatenate(ths), axis)


# stratified Monte Carlo ---------------------------------------------------------

def _uniform_shell(rng, n, N, r_in, r_out):
    v = rng.standard_normal((n, N))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    u = rng.random(n)
    r = (r_in**N + u * (r_out**N - r_in**N)) ** (1.0 / N)
    return v * r[:, None]


def _ball_volume(N, r):
    return sphere_area(N) / N * r**N


def stratified_mc(domain: DomainSpec, integrand, settings: QuadSettings) -> QuadResult:
    """Stratified Monte Carlo: shells around each centre intersected with its Voronoi cell.

    Shell radii are geometric from 0.05*mu_j up to shell_factor*sqrt(mu_j) and then
    to the farthest point of the domain, so every point of the domain belongs to exactly one
    stratum. Samples are split evenly; each stratum has its own seeded stream.
    """
    N = domain.N
    centers = np.asarray(settings.centers, dtype=float).reshape(-1, N) if len(settings.centers) else np.empty((0, N))
    ss = np.random.SeedSequence(settings.seed)
    if len(centers) == 0:
        lo, hi = domain.bounding_box
        rng = np.random.default_rng(ss)
        n = settings.samples
        x = lo + (hi - lo) * rng.random((n, N))
        inside = domain.contains(x)
        vals = np.asarray(integrand(x[inside]))
        g = np.zeros((n,) + vals.shape[1:])
        g[inside] = vals
        vol = float(np.prod(hi - lo))
        mean = vol * g.mean(axis=0)
        se = vol * g.std(axis=0, ddof=1) / np.sqrt(n)
        return _finish(mean, se, n, settings)
    scales = np.asarray(settings.scales if len(settings.scales) else [1e-2] * len(centers), dtype=float)
    strata = []
    for j, (c, mu) in enumerate(zip(centers, scales)):
        diam = domain.farthest_distance(c)
        r_core = 0.05 * mu
        r_ref = max(settings.shell_factor * np.sqrt(mu), 2 * r_core)
        radii = np.concatenate([[0.0], np.geomspace(r_core, r_ref, settings.n_shells)])
        outer = np.geomspace(r_ref, diam, max(2, settings.n_shells // 2))[1:]
        radii = np.concatenate([radii, outer])
        for a, b in zip(radii[:-1], radii[1:]):
            strata.append((j, a, b))
    n_per = max(16, settings.samples // len(strata))
    streams = ss.spawn(len(strata))
    total = 0.0
    var = 0.0
    for (j, a, b), seq in zip(strata, streams):
        rng = np.random.default_rng(seq)
        x = centers[j] + _uniform_shell(rng, n_per, N, a, b)
        keep = domain.contains(x)
        if len(centers) > 1:
            d = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=-1)
            keep &= np.argmin(d, axis=1) == j
        g = None
        if np.any(keep):
            vals = np.asarray(integrand(x[keep]))
            g = np.zeros((n_per,) + vals.shape[1:])
            g[keep] = vals
        else:
            continue
        vol = _ball_volume(N, b) - _ball_volume(N, a)
        total = total + vol * g.mean(axis=0)
        var = var + vol**2 * g.var(axis=0, ddof=1) / n_per
    return _finish(total, np.sqrt(var), n_per * len(strata), settings)


def _finish(mean, se, n, settings):
    if settings.rel_tol is not None:
        rel = np.max(np.abs(se) / np.maximum(np.abs(mean), 1e-300))
        if rel > settings.rel_tol:
            raise NumericalError(
                f"relative standard error {rel:.3g} above tolerance {settings.rel_tol}",
                {"mean": np.asarray(mean).tolist(), "stderr": np.asarray(se).tolist(), "samples": n},
            )
    return QuadResult(mean, se, n, "stratified-mc")


def quadrature(domain: DomainSpec, integrand, scheme: str = "tensor-gauss", settings: QuadSettings | None = None,
               **overrides) -> QuadResult:
    """Integrate a vectorised integrand (points (n, N) -> values (n,) or (n, K)) over the domain."""
    settings = settings or QuadSettings()
    if overrides:
        settings = QuadSettings(**{**settings.__dict__, **overrides})
    if scheme == "tensor-gauss":
        if isinstance(domain, HyperBox):
            x, w = box_rule(domain, settings.order, settings.panels)
        elif isinstance(domain, UnitBall):
            x, w = ball_rule(domain.N, settings.order, max(12, (3 * settings.order) // 4), max(1, settings.panels))
        else:
            raise ConfigurationError(f"no product rule for {domain!r}")
        vals = np.asarray(integrand(x))
        val = np.tensordot(w, vals, axes=(0, 0))
        return QuadResult(val, np.zeros_like(val), len(w), "tensor-gauss")
    if scheme == "stratified-mc":
        return stratified_mc(domain, integrand, settings)
    raise ConfigurationError(f"unknown quadrature scheme {scheme!r}")
