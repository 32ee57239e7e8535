"""Aubin-Talenti bubbles, their parameter derivatives and domain-corrected projections."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import ConfigurationError, NumericalError

SUPPORTED_DIMENSIONS = (4, 5)


def check_dimension(N: int) -> int:
    if N not in SUPPORTED_DIMENSIONS:
        raise ConfigurationError(f"dimension N={N} not supported; use one of {SUPPORTED_DIMENSIONS}")
    return int(N)


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N."""
    return 2.0 * np.pi ** (N / 2) / gamma(N / 2)


@dataclass(frozen=True)
class DimensionConstants:
    N: int
    alpha_N: float
    gamma_N: float
    omega_N: float
    two_star: float
    B_N: float = 0.0

    @property
    def p(self) -> float:
        """Critical power (N+2)/(N-2)."""
        return (self.N + 2) / (self.N - 2)


def dimension_constants(N: int, B_N: float = 0.0) -> DimensionConstants:
    N = check_dimension(N)
    omega = sphere_area(N)
    return DimensionConstants(
        N=N,
        alpha_N=(N * (N - 2)) ** ((N - 2) / 4),
        gamma_N=1.0 / ((N - 2) * omega),
        omega_N=omega,
        two_star=2 * N / (N - 2),
        B_N=float(B_N),
    )


@dataclass(frozen=True)
class BubbleParams:
    mu: float
    xi: tuple[float, ...]
    beta: int = 1
    N: int = 5

    def __post_init__(self):
        check_dimension(self.N)
        if not self.mu > 0:
            raise ConfigurationError(f"bubble height scale must be positive, got {self.mu}")
        if len(self.xi) != self.N:
            raise ConfigurationError(f"center has {len(self.xi)} coordinates, expected {self.N}")
        if self.beta not in (-1, 1):
            raise ConfigurationError(f"bubble sign must be +1 or -1, got {self.beta}")
        object.__setattr__(self, "xi", tuple(float(c) for c in self.xi))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.xi)


def _offsets(x, p: BubbleParams) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    d = x - p.center
    return d, np.einsum("...i,...i->...", d, d)


def eval_bubble(x, p: BubbleParams) -> np.ndarray:
    """U_{mu,xi}(x); `x` may carry leading batch axes."""
    c = dimension_constants(p.N)
    _, r2 = _offsets(x, p)
    h = (p.N - 2) / 2
    return c.alpha_N * p.mu**h * (p.mu**2 + r2) ** (-h)


def eval_bubble_derivative(x, p: BubbleParams, ell: int) -> np.ndarray:
    """psi^ell: d/dmu of the bubble for ell=0, d/dx_ell for 1 <= ell <= N."""
    N = p.N
    if not 0 <= ell <= N:
        raise ValueError(f"derivative index {ell} outside 0..{N}")
    c = dimension_constants(N)
    d, r2 = _offsets(x, p)
    mu = p.mu
    if ell == 0:
        return c.alpha_N * (N - 2) / 2 * mu ** ((N - 4) / 2) * (r2 - mu**2) * (mu**2 + r2) ** (-N / 2)
    return -c.alpha_N * (N - 2) * mu ** ((N - 2) / 2) * d[..., ell - 1] * (mu**2 + r2) ** (-N / 2)


def eval_projected_bubble(x, p: BubbleParams, domain) -> np.ndarray:
    """W~ = U - alpha_N mu^{(N-2)/2} H(x, xi).

    Satisfies -Delta W~ = U^p exactly; the boundary trace is O(mu^{(N+2)/2}).
    """
    c = dimension_constants(p.N)
    H = domain.regular_part(x, p.center)
    return eval_bubble(x, p) - c.alpha_N * p.mu ** ((p.N - 2) / 2) * H


def eval_projected_derivative(x, p: BubbleParams, ell: int, domain) -> np.ndarray:
    """Expansion form of the projection of psi^ell onto H^1_0.

    psi^ell for ell >= 1 is d/dx_ell of the bubble, whose boundary trace is
    -alpha mu^{(N-2)/2} dH/dxi_ell, so the harmonic correction enters with a plus sign.
    """
    N = p.N
    c = dimension_constants(N)
    psi = eval_bubble_derivative(x, p, ell)
    if ell == 0:
        H = domain.regular_part(x, p.center)
        return psi - c.alpha_N * (N - 2) / 2 * p.mu ** ((N - 4) / 2) * H
    _, dH = domain.regular_part(x, p.center, need_gradient=True)
    return psi + c.alpha_N * p.mu ** ((N - 2) / 2) * dH[..., ell - 1]


def nonlinearity(s, N: int, order: int = 0):
    """f(s) = |s|^{4/(N-2)} s and its first two derivatives.

    The second derivative at s = 0 is taken as 0 (continuous extension for N=5,
    exact for N=4).
    """
    check_dimension(N)
    s = np.asarray(s, dtype=float)
    q = 4.0 / (N - 2)
    a = np.abs(s)
    if order == 0:
        return a**q * s
    if order == 1:
        return (q + 1) * a**q
    if order == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = q * (q + 1) * a ** (q - 1) * np.sign(s)
        return np.where(s == 0, 0.0, out)
    raise ValueError(f"nonlinearity order must be 0, 1 or 2, got {order}")


@dataclass(frozen=True)
class BubbleIntegrals:
    N: int
    critical: float  # int U^{2N/(N-2)}
    power_p: float  # int U^{(N+2)/(N-2)}
    dirichlet: float  # int |grad U|^2
    l2: float | None  # int U^2, finite only for N=5
    errors: dict


def _radial_integral(g, N: int, tol: float = 1e-12) -> tuple[float, float]:
    """omega_N * int_0^inf g(r) r^{N-1} dr with split at r=1 and r -> 1/t on the tail."""
    omega = sphere_area(N)
    inner, e1 = integrate.quad(lambda r: g(r) * r ** (N - 1), 0.0, 1.0, epsabs=0, epsrel=tol, limit=200)
    # r = 1/t maps (1, inf) onto (0, 1)
    outer, e2 = integrate.quad(
        lambda t: g(1.0 / t) * t ** (-(N - 1)) / t**2 if t > 0 else 0.0,
        0.0, 1.0, epsabs=0, epsrel=tol, limit=200,
    )
    return omega * (inner + outer), omega * (e1 + e2)


@lru_cache(maxsize=None)
def bubble_integrals(N: int) -> BubbleIntegrals:
    """Standard whole-space integrals of U_{1,0} by adaptive radial quadrature."""
    N = check_dimension(N)
    c = dimension_constants(N)
    h = (N - 2) / 2

    def U(r):
        return c.alpha_N * (1.0 + r * r) ** (-h)

    def dU(r):
        return -c.alpha_N * (N - 2) * r * (1.0 + r * r) ** (-N / 2)

    vals, errs = {}, {}
    for name, g in (
        ("critical", lambda r: U(r) ** c.two_star),
        ("power_p", lambda r: U(r) ** c.p),
        ("dirichlet", lambda r: dU(r) ** 2),
    ):
        v, e = _radial_integral(g, N)
        vals[name], errs[name] = v, e
    l2 = None
    if N == 5:
        l2, errs["l2"] = _radial_integral(lambda r: U(r) ** 2, N)
    for name, v in vals.items():
        if not (v > 0 and errs[name] <= 1e-10 * v):
            raise NumericalError(f"bubble integral {name} did not converge: value {v}, error {errs[name]}")
    return BubbleIntegrals(N=N, l2=l2, errors=errs, **vals)


def truncated_l2_sq(N: int, R: float) -> float:
    """int_{|y|<R} U_{1,0}^2, which grows like log R when N = 4."""
    c = dimension_constants(N)
    h = (N - 2) / 2
    v, _ = integrate.quad(lambda r: c.alpha_N**2 * (1 + r * r) ** (-2 * h) * r ** (N - 1), 0, R,
                          epsabs=0, epsrel=1e-12, limit=400)
    return c.omega_N * v


def radial_dirichlet_solve(source, r, N: int, scale: float = 1.0) -> np.ndarray:
    """Solve -Delta w = source(|x|) on the unit ball, w = 0 on the sphere, at radii r.

    Uses the radial Green function: for s < r the kernel is (r^{2-N} - 1)/(N-2),
    for s > r it is (s^{2-N} - 1)/(N-2). `scale` marks where the source varies and
    is passed to the quadrature as break points.
    """
    N = check_dimension(N)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0) or np.any(r > 1):
        raise ConfigurationError("radii must lie in (0, 1]")
    pts = [v for v in (scale, 10 * scale, 100 * scale) if v < 1]
    out = np.empty_like(r)

    def quad(f, a, b):
        if b <= a:
            return 0.0
        bp = [p for p in pts if a < p < b]
        v, _ = integrate.quad(f, a, b, points=bp or None, epsabs=0, epsrel=1e-13, limit=500)
        return v

    for i, ri in enumerate(r):
        inner = quad(lambda s: source(s) * s ** (N - 1), 0.0, ri)
        outer = quad(lambda s: source(s) * (s - s ** (N - 1)), ri, 1.0)  # (s^{2-N} - 1) s^{N-1}
        out[i] = ((ri ** (2 - N) - 1) * inner + outer) / (N - 2)
    return out


def exact_projection_centered(r, mu: float, N: int, ell: int | None = None) -> np.ndarray:
    """Exact H^1_0(B) projection of U_{mu,0} or of psi^0 at radii r.

    ell=None projects the bubble itself (-Delta P U = U^p); ell=0 projects
    psi^0 = dU/dmu (-Delta P psi = p U^{p-1} psi). Centred bubbles only.
    """
    N = check_dimension(N)
    c = dimension_constants(N)
    b = BubbleParams(mu, (0.0,) * N, 1, N)

    def pt(s):
        return np.array([[s] + [0.0] * (N - 1)])

    if ell is None:
        src = lambda s: float(eval_bubble(pt(s), b)[0]) ** c.p
    elif ell == 0:
        src = lambda s: c.p * float(eval_bubble(pt(s), b)[0]) ** (c.p - 1) * float(eval_bubble_derivative(pt(s), b, 0)[0])
    else:
        raise ConfigurationError("only the bubble and psi^0 have radial projections")
    return radial_dirichlet_solve(src, r, N, scale=mu)
