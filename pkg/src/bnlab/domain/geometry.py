"""Supported domains: the unit ball and axis-aligned hyperboxes in R^4, R^5.

Each domain provides the regular part H of the Dirichlet Green function,
normalised as in G(x, y) = gamma_N (|x - y|^{2-N} - H(x, y)), so H solves
Delta_x H = 0 with H = |x - y|^{2-N} on the boundary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from ..bubble import check_dimension, dimension_constants, sphere_area
from ..errors import ConfigurationError, ProviderError, SingularityError


def _as_points(x, N):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N:
        raise ConfigurationError(f"points must have {N} coordinates, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class DomainSpec:
    """Base class; use `UnitBall`, `HyperBox` or `DomainSpec.create`."""

    N: int

    kind = "abstract"

    @staticmethod
    def create(kind: str, N: int, sides=None) -> "DomainSpec":
        if kind in ("ball", "unit-ball"):
            return UnitBall(N)
        if kind in ("box", "hyperbox"):
            if sides is None:
                sides = (np.pi,) * N
            if np.isscalar(sides):
                sides = (float(sides),) * N
            return HyperBox(N, tuple(float(s) for s in sides))
        raise ConfigurationError(f"unknown domain kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N}

    # geometry -------------------------------------------------------------
    def contains(self, x) -> np.ndarray:
        return self.boundary_distance(x) > 0

    def boundary_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def volume(self) -> float:
        raise NotImplementedError

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    def farthest_distance(self, point) -> float:
        """Upper bound on |x - point| over the domain."""
        lo, hi = self.bounding_box
        corners = np.where(np.abs(lo - point) > np.abs(hi - point), lo, hi)
        return float(np.linalg.norm(corners - point))

    def sample_boundary(self, n: int, rng) -> np.ndarray:
        raise NotImplementedError

    def sample_interior(self, n: int, rng) -> np.ndarray:
        lo, hi = self.bounding_box
        out = np.empty((0, self.N))
        while len(out) < n:
            pts = lo + (hi - lo) * rng.random((2 * n + 16, self.N))
            out = np.vstack([out, pts[self.contains(pts)]])
        return out[:n]

    # Green function ---------------------------------------------------------
    def regular_part(self, x, xi, need_gradient: bool = False):
        """H(x, xi); with `need_gradient`, also dH/dxi with trailing axis N."""
        raise NotImplementedError

    def green(self, x, xi) -> np.ndarray:
        x = _as_points(x, self.N)
        xi = _as_points(xi, self.N)
        r = np.linalg.norm(x - xi, axis=-1)
        if np.any(r == 0):
            raise SingularityError("Green function evaluated at x = xi")
        c = dimension_constants(self.N)
        return c.gamma_N * (r ** (2 - self.N) - self.regular_part(x, xi))


@dataclass(frozen=True)
class UnitBall(DomainSpec):
    kind = "ball"

    def __post_init__(self):
        check_dimension(self.N)

    def boundary_distance(self, x):
        x = _as_points(x, self.N)
        return 1.0 - np.linalg.norm(x, axis=-1)

    @property
    def volume(self):
        return sphere_area(self.N) / self.N

    @property
    def bounding_box(self):
        return -np.ones(self.N), np.ones(self.N)

    def farthest_distance(self, point) -> float:
        return 1.0 + float(np.linalg.norm(point))

    def sample_boundary(self, n, rng):
        v = rng.standard_normal((n, self.N))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def regular_part(self, x, xi, need_gradient=False):
        # Kelvin image in symmetric form: H = (1 - 2 x.xi + |x|^2 |xi|^2)^{-(N-2)/2}
        x = _as_points(x, self.N)
        xi = _as_points(xi, self.N)
        N = self.N
        xx = np.einsum("...i,...i->...", x, x)
        yy = np.einsum("...i,...i->...", xi, xi)
        xy = np.einsum("...i,...i->...", x, xi)
        q = 1.0 - 2.0 * xy + xx * yy
        H = q ** (-(N - 2) / 2)
        if not need_gradient:
            return H
        grad = (N - 2) * (x - xx[..., None] * xi) * (q ** (-N / 2))[..., None]
        return H, grad


# 1D Dirichlet heat kernel pieces for the box --------------------------------

def _gauss(z, t):
    return np.exp(-z * z / (4 * t)) / np.sqrt(4 * np.pi * t)


def _dgauss(z, t):
    """d/dz of the Gaussian kernel."""
    return -z / (2 * t) * _gauss(z, t)


_IMAGE_RANGE = np.arange(-4, 5)
_MODES = np.arange(1, 41)


class _IntervalKernel:
    """Image part q = g(x - y) - p^D(x, y) on (0, L) and its y-derivative.

    Small times use the reflection sum, large times the sine expansion. Everything
    that does not depend on t is computed once.
    """

    def __init__(self, x, y, L):
        self.L = L
        n = _IMAGE_RANGE
        self.a = (x[..., None] - y[..., None] + 2 * n[n != 0] * L)
        self.b = (x[..., None] + y[..., None] + 2 * n * L)
        self.k = _MODES * np.pi / L
        sx = np.sin(self.k * x[..., None])
        self.S = sx * np.sin(self.k * y[..., None])
        self.C = sx * self.k * np.cos(self.k * y[..., None])
        self.d = x - y

    def __call__(self, t, need_grad=True):
        L = self.L
        if t <= L * L / 4:
            q = -_gauss(self.a, t).sum(-1) + _gauss(self.b, t).sum(-1)
            dq = _dgauss(self.a, t).sum(-1) + _dgauss(self.b, t).sum(-1) if need_grad else None
            return q, dq
        decay = np.exp(-(self.k**2) * t)
        p = (2 / L) * (self.S @ decay)
        q = _gauss(self.d, t) - p
        if not need_grad:
            return q, None
        dp = (2 / L) * (self.C @ decay)
        return q, -_dgauss(self.d, t) - dp


@dataclass(frozen=True)
class HyperBox(DomainSpec):
    sides: tuple[float, ...] = field(default=None)
    kind = "box"
    n_time_nodes: int = 24  # Gauss nodes per unit of log-time

    def __post_init__(self):
        check_dimension(self.N)
        if self.sides is None:
            object.__setattr__(self, "sides", (np.pi,) * self.N)
        if len(self.sides) != self.N or any(s <= 0 for s in self.sides):
            raise ConfigurationError(f"box needs {self.N} positive side lengths, got {self.sides}")

    def to_dict(self):
        return {"kind": self.kind, "N": self.N, "sides": list(self.sides)}

    @cached_property
    def _L(self):
        return np.asarray(self.sides, dtype=float)

    @property
    def volume(self):
        return float(np.prod(self._L))

    @property
    def bounding_box(self):
        return np.zeros(self.N), self._L.copy()

    @property
    def center(self):
        return self._L / 2

    def boundary_distance(self, x):
        x = _as_points(x, self.N)
        return np.minimum(x, self._L - x).min(axis=-1)

    def sample_boundary(self, n, rng):
        x = rng.random((n, self.N)) * self._L
        axis = rng.integers(0, self.N, n)
        side = rng.integers(0, 2, n)
        x[np.arange(n), axis] = side * self._L[axis]
        return x

    def regular_part(self, x, xi, need_gradient=False, rtol=1e-10):
        """H via heat-kernel subordination of the product Dirichlet kernel.

        gamma_N H(x, xi) = int_0^inf [prod_i g_t(x_i - xi_i) - prod_i p^D_t(x_i, xi_i)] dt,
        integrated in log-time with Gauss-Legendre panels; the free-space tail
        beyond the last panel is added in closed form.
        """
        x = _as_points(x, self.N)
        xi = _as_points(xi, self.N)
        x, xi = np.broadcast_arrays(x, xi)
        val, grad = self._heat_integral(x, xi, self.n_time_nodes, need_gradient)
        val2, _ = self._heat_integral(x, xi, self.n_time_nodes // 2, False)
        err = np.max(np.abs(val - val2)) if val.size else 0.0
        scale = max(1.0, float(np.max(np.abs(val)))) if val.size else 1.0
        if err > max(rtol * scale, 1e-12) * 1e3:
            raise ProviderError("regular part quadrature did not converge", achieved_bound=float(err))
        if need_gradient:
            return val, grad
        return val

    def _heat_integral(self, x, xi, nodes_per_unit, need_grad=True):
        N = self.N
        L = self._L
        c = dimension_constants(N)
        # every reflected image of xi is at least dist(xi, boundary) away from the closed box
        dist = self.boundary_distance(xi)
        if np.any(dist <= 0) or np.any(self.boundary_distance(x) < 0):
            raise ConfigurationError("regular part requested outside the box")
        s_lo = np.log(max(float(np.min(dist)) ** 2 / 400.0, 1e-300))
        t_hi = 40.0 * float(np.max(L)) ** 2
        s_hi = np.log(t_hi)
        n_panels = max(4, int(np.ceil(s_hi - s_lo)))
        gl_x, gl_w = np.polynomial.legendre.leggauss(max(4, nodes_per_unit))
        edges = np.linspace(s_lo, s_hi, n_panels + 1)
        shape = x.shape[:-1]
        acc = np.zeros(shape)
        gacc = np.zeros(shape + (N,))
        kern = [_IntervalKernel(x[..., i], xi[..., i], L[i]) for i in range(N)]
        diffs = [x[..., i] - xi[..., i] for i in range(N)]
        for a, b in zip(edges[:-1], edges[1:]):
            for node, w in zip(gl_x, gl_w):
                s = 0.5 * (b - a) * node + 0.5 * (a + b)
                t = np.exp(s)
                jac = 0.5 * (b - a) * w * t
                g = [_gauss(d, t) for d in diffs]
                qd = [kern[i](t, need_grad) for i in range(N)]
                q = [v[0] for v in qd]
                p = [g[i] - q[i] for i in range(N)]
                # D_k = prod g - prod p accumulated without cancellation
                D = np.zeros(shape)
                Bp = np.ones(shape)
                for i in range(N):
                    D = D * g[i] + Bp * q[i]
                    Bp = Bp * p[i]
                acc += jac * D
                if need_grad:
                    for j in range(N):
                        dg_j = -_dgauss(diffs[j], t)  # derivative in xi
                        Dj = np.zeros(shape)
                        Bj = np.ones(shape)
                        for i in range(N):
                            if i != j:
                                Dj = Dj * g[i] + Bj * q[i]
                                Bj = Bj * p[i]
                        gacc[..., j] += jac * (dg_j * Dj + qd[j][1] * Bj)
        # free-space tail int_{t_hi}^inf prod g dt and its xi-gradient
        r2 = np.einsum("...i,...i->...", x - xi, x - xi)
        h = N / 2 - 1
        u = r2 / (4 * t_hi)
        tail = (4 * np.pi) ** (-N / 2) * t_hi ** (-h) * _tail_factor(u, h)
        acc += tail
        # d/dxi of the tail: dr2/dxi = -2 (x - xi); d tail/du * du/dr2
        dtail_du = (4 * np.pi) ** (-N / 2) * t_hi ** (-h) * _tail_factor_du(u, h)
        gacc += (dtail_du / (4 * t_hi))[..., None] * (-2 * (x - xi))
        return acc / c.gamma_N, gacc / c.gamma_N

    def image_series_regular_part(self, x, xi, n_cells: int) -> np.ndarray:
        """H from the reflection-image series summed over period cells |n|_inf <= n_cells.

        Cell sums decay like |n|^{2-2N}; the truncation error is O(n_cells^{2-N}).
        Independent of the heat-kernel route; used as a cross-check.
        """
        N = self.N
        x = _as_points(x, N)
        xi = _as_points(xi, N)
        L = self._L
        signs = np.array(list(itertools.product((1, -1), repeat=N)), dtype=float)
        parity = signs.prod(axis=1)
        cells = np.array(list(itertools.product(range(-n_cells, n_cells + 1), repeat=N)), dtype=float)
        total = 0.0
        for sgn, par in zip(signs, parity):
            imgs = 2 * cells * L + sgn * xi  # all cells for this reflection pattern
            d = x[None, :] - imgs
            r = np.sqrt((d * d).sum(-1))
            if np.all(sgn == 1):
                r = r[np.any(cells != 0, axis=1)]
            total += par * np.sum(r ** (2 - N))
        return -total

    def image_series_richardson(self, x, xi, n_cells=(1, 2, 4)) -> tuple[float, float]:
        """Three-level extrapolation of the image series in the cell radius.

        The decay exponent is measured from the successive differences rather than
        assumed; returns (value, error bound).
        """
        h = [self.image_series_regular_part(x, xi, n) for n in n_cells]
        d1, d2 = h[1] - h[0], h[2] - h[1]
        if d2 == 0 or d1 == 0 or np.sign(d1) != np.sign(d2):
            return float(h[2]), float(abs(d2))
        ratio = (n_cells[2] / n_cells[1])
        p = np.log(abs(d1 / d2)) / np.log(ratio)
        extrap = h[2] + d2 / (ratio**p - 1)
        return float(extrap), float(abs(extrap - h[2]))


def _tail_factor(u, h):
    """int_1^inf s^{-(h+1)} exp(-u/s) ds expressed through the lower incomplete gamma."""
    u = np.asarray(u, dtype=float)
    small = u < 1e-8
    safe = np.where(small, 1.0, u)
    val = gammainc(h, safe) * gamma_fn(h) * safe ** (-h)
    return np.where(small, 1.0 / h - u / (h + 1), val)


def _tail_factor_du(u, h):
    # d/du int_1^inf s^{-(h+2)+1}... = -int_1^inf s^{-(h+2)} exp(-u/s) ds
    return -_tail_factor(u, h + 1)


@dataclass(frozen=True)
class ConfigurationSet:
    rho: float
    points: tuple

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError(f"separation parameter rho must be positive, got {self.rho}")
        object.__setattr__(self, "points", tuple(tuple(float(c) for c in p) for p in self.points))


def admissible(config: ConfigurationSet, domain: DomainSpec) -> bool:
    """Both separation conditions: distance to the boundary >= 2 rho and pairwise >= 2 rho."""
    pts = np.asarray(config.points, dtype=float)
    if pts.size == 0:
        return True
    if np.any(domain.boundary_distance(pts) < 2 * config.rho):
        return False
    for i, j in itertools.combinations(range(len(pts)), 2):
        if np.linalg.norm(pts[i] - pts[j]) < 2 * config.rho:
            return False
    return True
