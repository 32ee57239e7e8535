"""Limit finite-dimensional systems and their certified solutions.

N = 4: the coupled system is decoupled by s_j = |G(xi_j)| and the remaining
problem is the maximisation of H_*(nu, eta) over the sphere times the sites.
N = 5: three decoupled variational problems, for t, for the sites and for s.
Throughout G(x) = sum_l t_l e_l(x).
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.ndimage import label, maximum_filter
from scipy.stats import qmc

from .bubble import check_dimension, dimension_constants
from .domain import DomainSpec, EigenBasis, HyperBox, UnitBall, nodal_domains
from .domain.eigen import SineMode
from .domain.quadrature import axisymmetric_ball_rule, ball_rule, box_rule
from .errors import CapacityError, ConfigurationError, DegenerateSiteError, SolverError

GRAD_TOL = 1e-8
HESS_MARGIN = 1e-6


# quadrature of eigenfunction combinations ----------------------------------------

class BasisQuadrature:
    """Fixed quadrature rule with the basis tabulated at its nodes.

    Box: tensor Gauss with panels split at the nodal planes of every sine factor.
    Ball: axisymmetric rule for a radial basis, hyperspherical product rule otherwise.
    """

    def __init__(self, domain: DomainSpec, basis: EigenBasis, order: int = 14):
        self.domain = domain
        self.basis = basis
        if isinstance(domain, HyperBox):
            splits = [set() for _ in range(domain.N)]
            for p in basis.primitives:
                if isinstance(p, SineMode):
                    for i, k in enumerate(p.freqs):
                        splits[i].update(domain.sides[i] * q / k for q in range(1, k))
            splits = [sorted(s) for s in splits]
            self.points, self.weights = box_rule(domain, order, 1, splits)
        elif isinstance(domain, UnitBall):
            if all(getattr(p, "h", 1) == 0 for p in basis.primitives):
                rule = axisymmetric_ball_rule(domain.N, np.zeros(domain.N), 0.05, n_theta=8, n_rho=2 * order)
                self.points, self.weights = rule.points, rule.weights
            else:
                self.points, self.weights = ball_rule(domain.N, 2 * order, 2 * order, 2)
        else:
            raise ConfigurationError(f"unsupported domain {domain!r}")
        self.E = basis.values(self.points)  # (n, m)
        self.D = np.asarray(basis.l2_norms_sq, dtype=float)

    def combo(self, t):
        return self.E @ np.asarray(t, dtype=float)

    def lp_power(self, t, p: float) -> float:
        return float(self.weights @ np.abs(self.combo(t)) ** p)

    def l2_sq(self, t) -> float:
        """Exact by orthogonality."""
        t = np.asarray(t, dtype=float)
        return float(np.sum(self.D * t * t))

    def inner_f(self, t, N):
        """<f(G), e_l> for all l."""
        G = self.combo(t)
        q = 4.0 / (N - 2)
        return (self.weights * np.abs(G) ** q * G) @ self.E

    def inner_fprime(self, t, N):
        """<f'(G), e_n e_l> matrix."""
        G = self.combo(t)
        q = 4.0 / (N - 2)
        w = self.weights * (q + 1) * np.abs(G) ** q
        return (self.E * w[:, None]).T @ self.E


# record --------------------------------------------------------------------------

@dataclass
class ReducedSolution:
    N: int
    t0: np.ndarray
    xi0: np.ndarray  # (k, N)
    s0: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    L0: float
    A0: float | None = None
    G_l2_sq: float = float("nan")  # ||sum t e||_2^2
    G_crit: float = float("nan")  # ||sum t e||_{2*}^{2*}
    objectives: dict = field(default_factory=dict)
    hessian_ranges: dict = field(default_factory=dict)
    rotation: np.ndarray | None = None
    barrier_active: bool = False
    stationarity: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.s0)

    @property
    def m(self) -> int:
        return len(self.t0)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ReducedSolution":
        d = dict(d)
        for key in ("t0", "xi0", "s0", "beta", "a"):
            d[key] = np.asarray(d[key], dtype=float)
        if d.get("rotation") is not None:
            d["rotation"] = np.asarray(d["rotation"], dtype=float)
        return cls(**d)


def householder_to_diagonal(u) -> np.ndarray:
    """Orthogonal symmetric Q with Q u_hat = (1, ..., 1)/sqrt(m)."""
    u = np.asarray(u, dtype=float)
    m = len(u)
    uh = u / np.linalg.norm(u)
    w = np.ones(m) / np.sqrt(m)
    v = uh - w
    if np.linalg.norm(v) < 1e-14:
        return np.eye(m)
    return np.eye(m) - 2 * np.outer(v, v) / (v @ v)


def _canonical_sign(t):
    t = np.asarray(t, dtype=float)
    idx = np.flatnonzero(np.abs(t) > 1e-12 * np.max(np.abs(t)))
    return -t if len(idx) and t[idx[0]] < 0 else t


# shared coupling data --------------------------------------------------------------

def coupling_data(t0, xi0, s0, basis: EigenBasis, N: int, c1: float | None = None, G_l2_sq: float | None = None):
    """(a, L0, A0, beta) from the limit quantities; A0 is None without c1 = d1 d3 / d2."""
    t0 = np.asarray(t0, dtype=float)
    xi0 = np.atleast_2d(np.asarray(xi0, dtype=float))
    s0 = np.asarray(s0, dtype=float)
    Gj = basis.values(xi0) @ t0
    a = np.abs(Gj)
    if np.any(a == 0):
        raise DegenerateSiteError("eigenfunction combination vanishes at a bubble site", {"G": Gj.tolist()})
    beta = -np.sign(Gj)
    L0 = -float(np.sum(a * s0 ** ((N - 2) / 2)))
    A0 = None
    if c1 is not None:
        if G_l2_sq is None:
            G_l2_sq = float(np.sum(np.asarray(basis.l2_norms_sq) * t0 * t0))
        A0 = float(c1 * np.sum(a * a) ** 2 / (np.sum(s0 * s0) * G_l2_sq))
    return a, L0, A0, beta


# N = 5 ---------------------------------------------------------------------------

@dataclass
class TSolution:
    t0: np.ndarray
    F: float
    grad: np.ndarray
    hessian: np.ndarray
    hessian_eigs: np.ndarray
    euler_residual: float  # ||H t + (4/3) D t|| / ||(4/3) D t||
    norm_identity: tuple  # (||G||_2^2, ||G||_{2*}^{2*})
    rotation: np.ndarray
    basis: EigenBasis
    starts: int


def _F_parts(quad: BasisQuadrature, t, N):
    c = dimension_constants(N)
    G = quad.combo(t)
    q = 4.0 / (N - 2)
    aG = np.abs(G)
    crit = float(quad.weights @ aG ** c.two_star)
    F = 0.5 * quad.l2_sq(t) - crit / c.two_star
    grad = quad.D * t - (quad.weights * aG**q * G) @ quad.E
    w = quad.weights * (q + 1) * aG**q
    hess = np.diag(quad.D) - (quad.E * w[:, None]).T @ quad.E
    return F, grad, hess, crit


def solve_N5_t(basis: EigenBasis, m: int, domain: DomainSpec, multistarts: int = 16, seed: int = 0,
               order: int = 14, quad: BasisQuadrature | None = None) -> TSolution:
    """Maximise F(nu) = 1/2 ||sum nu e||_2^2 - 1/2* ||sum nu e||_{2*}^{2*} over R^m.

    Returns the maximiser with its Hessian certificate. When a component of the
    maximiser vanishes, the basis is rotated (O(m) invariance) so that all
    components are equal in the new basis.
    """
    N = basis.N
    if N != 5:
        raise ConfigurationError("the t-problem is the N=5 limit system")
    if not 1 <= m <= basis.multiplicity:
        raise ConfigurationError(f"m={m} outside 1..{basis.multiplicity}")
    if basis.m != m:
        basis = basis.truncate(m)
    quad = quad or BasisQuadrature(domain, basis, order)
    c = dimension_constants(N)
    sob = qmc.Sobol(d=m, scramble=True, seed=seed)
    dirs = sob.random(max(2, multistarts)) * 2 - 1 if m > 1 else np.ones((1, 1))
    best = None
    for d in dirs:
        if np.linalg.norm(d) == 0:
            continue
        d = d / np.linalg.norm(d)
        A = quad.l2_sq(d)
        B = quad.lp_power(d, c.two_star)
        t = d * (A / B) ** (1.0 / (c.two_star - 2))
        res = optimize.minimize(
            lambda v: -_F_parts(quad, v, N)[0],
            t,
            jac=lambda v: -_F_parts(quad, v, N)[1],
            hess=lambda v: -_F_parts(quad, v, N)[2],
            method="trust-exact",
            options={"gtol": 1e-12, "maxiter": 200},
        )
        if best is None or -res.fun > best[0] + 1e-12:
            best = (-res.fun, res.x)
    t = best[1]
    # Newton polish on the gradient equation
    for _ in range(20):
        F, g, H, crit = _F_parts(quad, t, N)
        if np.max(np.abs(g)) < 1e-13 * max(1.0, np.max(np.abs(t))):
            break
        t = t - np.linalg.solve(H, g)
    t = _canonical_sign(t)
    F, g, H, crit = _F_parts(quad, t, N)
    if np.linalg.norm(t) < 1e-8:
        raise SolverError("maximiser of F is the trivial point", {"t": t.tolist()})
    Q = np.eye(m)
    if m > 1 and np.min(np.abs(t)) < 1e-6 * np.linalg.norm(t):
        Q = householder_to_diagonal(t)
        basis = basis.rotated(Q)
        t = Q @ t
        quad = BasisQuadrature(domain, basis, order)
        F, g, H, crit = _F_parts(quad, t, N)
    eigs = np.linalg.eigvalsh(H)
    if np.max(eigs) >= -HESS_MARGIN * np.max(np.abs(eigs)):
        raise SolverError("Hessian of F at the maximiser is degenerate", {"eigs": eigs.tolist()})
    if np.max(np.abs(g)) > GRAD_TOL:
        raise SolverError("gradient of F not converged", {"grad": g.tolist()})
    Dt = quad.D * t
    euler = float(np.linalg.norm(H @ t + (4.0 / 3.0) * Dt) / np.linalg.norm((4.0 / 3.0) * Dt))
    return TSolution(t, F, g, H, eigs, euler, (quad.l2_sq(t), crit), Q, basis, len(dirs))


def find_bubble_sites(t0, basis: EigenBasis, domain: DomainSpec, k: int, grid_resolution: int = 12):
    """Critical points of G = sum t e inside k distinct nodal domains (largest |G| first).

    Returns (sites, info) where info holds n_kappa and per-site diagnostics.
    """
    t0 = np.asarray(t0, dtype=float)
    G = basis.combination(t0)
    nod = nodal_domains(G, domain, grid_resolution)
    if k > nod.count:
        raise CapacityError(f"k={k} bubbles requested but G has only n_kappa={nod.count} nodal domains")
    sites, diag = [], []
    lam = basis.lambda_kappa
    for j in range(k):
        x = nod.representatives[j].copy()
        sgn = nod.signs[j]
        x = _newton_critical(lambda y: sgn * (basis.values(y[None])[0] @ t0),
                             lambda y: sgn * (basis.grads(y[None])[0].T @ t0),
                             lambda y: sgn * np.einsum("l,lij->ij", t0, basis.hessians(y[None])[0]),
                             x, domain, sgn)
        g = basis.grads(x[None])[0].T @ t0
        Gx = float(basis.values(x[None])[0] @ t0)
        Hx = np.einsum("l,lij->ij", t0, basis.hessians(x[None])[0])
        trace_rel = abs(np.trace(Hx) + lam * Gx) / (lam * abs(Gx))
        if np.max(np.abs(g)) > 1e-9 or Gx == 0 or np.sign(Gx) != sgn or trace_rel > 1e-4:
            raise SolverError("critical point search failed", {"site": x.tolist(), "grad": g.tolist(), "G": Gx})
        sites.append(x)
        diag.append({"G": Gx, "grad_sup": float(np.max(np.abs(g))), "hessian_eigs": np.linalg.eigvalsh(Hx).tolist(),
                     "trace_identity_rel": float(trace_rel)})
    return np.asarray(sites), {"n_kappa": nod.count, "sites": diag}


def _newton_critical(fun, grad, hess, x, domain, sgn, max_iter=200):
    """Ascent of fun (= sgn G) to a critical point: damped Newton with a gradient fallback."""
    x = np.asarray(x, dtype=float)
    for damping in (1.0, 0.5, 0.25):
        y = x.copy()
        for _ in range(max_iter):
            g = grad(y)
            if np.max(np.abs(g)) < 1e-13:
                break
            H = hess(y)
            ev = np.linalg.eigvalsh(H)
            if np.max(ev) < 0:
                step = -np.linalg.solve(H, g)
            else:
                step = g / max(1.0, np.max(np.abs(ev)))
            f0 = fun(y)
            s = damping
            while s > 1e-8:
                cand = y + s * step
                if domain.contains(cand[None])[0] and fun(cand) >= f0 - 1e-15 * abs(f0):
                    break
                s *= 0.5
            y = y + s * step
        if domain.contains(y[None])[0] and fun(y) > 0 and np.max(np.abs(grad(y))) < 1e-9:
            return y
    return y


def solve_N5_s(a) -> np.ndarray:
    """Heights s_j = nu_j^2 from the maximiser of H(nu) over the open positive orthant."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ConfigurationError("site amplitudes must be positive")
    closed = a / np.sum(a**4) ** 0.25

    def negH(v):
        return -(np.sum(a * a * v * v) / 2 - np.sum(a * v**3) ** 2 / 6)

    def neggrad(v):
        return -(a * a * v - np.sum(a * v**3) * a * v * v)

    def neghess(v):
        S = np.sum(a * v**3)
        Hm = np.diag(a * a - 2 * S * a * v) - 3 * np.outer(a * v * v, a * v * v)
        return -Hm

    v0 = np.full(len(a), 1.0 / np.sum(a**4) ** 0.25 * np.mean(a))
    res = optimize.minimize(negH, v0, jac=neggrad, hess=neghess, method="trust-constr",
                            bounds=optimize.Bounds(1e-12, np.inf), options={"gtol": 1e-14, "xtol": 1e-15})
    v = res.x
    if np.any(v <= 1e-10):
        v = closed.copy()
    for _ in range(50):
        g = -neggrad(v)
        if np.max(np.abs(g)) < 1e-15:
            break
        v = v - np.linalg.solve(-neghess(v), g)
    if np.any(v <= 0):
        v = closed.copy()
    if np.max(np.abs(v - closed)) > 1e-6 * np.max(closed):
        raise SolverError("height maximiser disagrees with the closed form", {"numeric": v.tolist(), "closed": closed.tolist()})
    return v * v


def solve_N5(domain: DomainSpec, basis: EigenBasis, k: int, m: int, c1: float | None = None,
             grid_resolution: int = 12, seed: int = 0, multistarts: int = 16, order: int = 14) -> ReducedSolution:
    tsol = solve_N5_t(basis, m, domain, multistarts, seed, order)
    xi0, info = find_bubble_sites(tsol.t0, tsol.basis, domain, k, grid_resolution)
    a0 = np.abs(tsol.basis.values(xi0) @ tsol.t0)
    s0 = solve_N5_s(a0)
    a, L0, A0, beta = coupling_data(tsol.t0, xi0, s0, tsol.basis, 5, c1, tsol.norm_identity[0])
    sol = ReducedSolution(
        N=5, t0=tsol.t0, xi0=xi0, s0=s0, beta=beta, a=a, L0=L0, A0=A0,
        G_l2_sq=tsol.norm_identity[0], G_crit=tsol.norm_identity[1],
        objectives={"F": tsol.F, "H": float(np.sum(a * a * s0) / 2 - np.sum(a * s0**1.5) ** 2 / 6),
                    "n_kappa": info["n_kappa"]},
        hessian_ranges={"F": [float(tsol.hessian_eigs.min()), float(tsol.hessian_eigs.max())],
                        "sites": [s["hessian_eigs"] for s in info["sites"]]},
        rotation=tsol.rotation,
        notes=[f"euler_residual={tsol.euler_residual:.3e}",
               f"mu_prefactor_alt sum_a_sq={float(np.sum(a * a)):.17g} abs_L0={abs(L0):.17g}"],
    )
    sol.stationarity = verify_stationarity(sol, tsol.basis, 5, domain)
    return sol, tsol.basis


# N = 4 ---------------------------------------------------------------------------

def _barrier(points, domain, rho, weight):
    """Smooth barrier, zero once every distance is >= 4 rho, infinite at 2 rho."""
    pts = np.atleast_2d(points)
    val = 0.0
    grad = np.zeros_like(pts)
    active = False

    def phi(d):
        u = (d - 2 * rho) / (2 * rho)
        if u >= 1:
            return 0.0, 0.0
        if u <= 0:
            return np.inf, 0.0
        f = -((1 - u) ** 2) * np.log(u)
        df = (2 * (1 - u) * np.log(u) - (1 - u) ** 2 / u) / (2 * rho)
        return f, df

    eps = 1e-7
    for j, p in enumerate(pts):
        d = float(domain.boundary_distance(p[None])[0])
        f, df = phi(d)
        if f:
            active = True
            val += f
            if np.isfinite(f):
                g = np.array([(domain.boundary_distance((p + eps * e)[None])[0]
                               - domain.boundary_distance((p - eps * e)[None])[0]) / (2 * eps)
                              for e in np.eye(len(p))])
                grad[j] += df * g
        for i in range(j):
            diff = p - pts[i]
            dd = float(np.linalg.norm(diff))
            f, df = phi(dd)
            if f:
                active = True
                val += f
                if np.isfinite(f) and dd > 0:
                    grad[j] += df * diff / dd
                    grad[i] -= df * diff / dd
    return weight * val, weight * grad, active


def _top_eig(basis: EigenBasis, eta):
    """Top generalised eigenpair of M = E^T E against D = diag(||e||^2)."""
    E = basis.values(eta)  # (k, m)
    D = np.asarray(basis.l2_norms_sq)
    Ds = 1 / np.sqrt(D)
    M = (E * Ds).T @ (E * Ds)
    w, V = np.linalg.eigh(M)
    v = V[:, -1] * Ds  # v^T D v = 1
    return w[-1], v, (w[-1] - w[-2]) if len(w) > 1 else np.inf


def _count_local_maxima(g, domain, resolution):
    N = domain.N
    lo, hi = domain.bounding_box
    axes = [lo[i] + (np.arange(resolution) + 0.5) * (hi[i] - lo[i]) / resolution for i in range(N)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([x.ravel() for x in grids], -1)
    inside = domain.contains(pts)
    vals = np.full(len(pts), -np.inf)
    vals[inside] = g(pts[inside]) ** 2
    vals = vals.reshape(grids[0].shape)
    peak = vals == maximum_filter(vals, size=3, mode="constant", cval=-np.inf)
    peak &= (vals > 1e-8 * np.max(vals)) & inside.reshape(vals.shape)
    # a symmetric maximum between grid nodes shows up as a plateau of equal peaks
    _, n = label(peak, structure=np.ones((3,) * N))
    return int(n)


def solve_N4(domain: DomainSpec, basis: EigenBasis, k: int, m: int, rho: float, multistarts: int = 64,
             seed: int = 0, c1: float | None = None, grid_resolution: int = 12, barrier_weight: float = 1e-3):
    """Maximise H_*(nu, eta) over S^{m-1} x Omega^k with an O_rho barrier; s_0 = |G(xi_0)|."""
    N = basis.N
    if N != 4:
        raise ConfigurationError("the H_* problem is the N=4 limit system")
    if not 1 <= m <= basis.multiplicity:
        raise ConfigurationError(f"m={m} outside 1..{basis.multiplicity}")
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    if not rho > 0:
        raise ConfigurationError("rho must be positive")
    if basis.m != m:
        basis = basis.truncate(m)
    lo, hi = domain.bounding_box
    sob = qmc.Sobol(d=N * k, scramble=True, seed=seed)
    starts = sob.random(multistarts)
    scale = np.max(np.abs(basis.values(domain.sample_interior(256, np.random.default_rng(seed))))) ** 2

    def objective(z):
        eta = z.reshape(k, N)
        if not np.all(domain.contains(eta)):
            return np.inf, np.zeros_like(z)
        b, bg, _ = _barrier(eta, domain, rho, barrier_weight * scale)
        if not np.isfinite(b):
            return np.inf, np.zeros_like(z)
        lam, v, _ = _top_eig(basis, eta)
        Gv = basis.values(eta) @ v
        dG = np.einsum("kmn,m->kn", basis.grads(eta), v)
        g = 2 * Gv[:, None] * dG
        return -(lam - b), (-(g - bg)).ravel()

    results = []
    for u in starts:
        z0 = (lo + (hi - lo) * u.reshape(k, N))
        # pull starts into the admissible set
        z0 = 0.5 * (z0 + (lo + hi) / 2) if not np.all(domain.contains(z0)) else z0
        if not np.isfinite(objective(z0.ravel())[0]):
            continue
        res = optimize.minimize(objective, z0.ravel(), jac=True, method="L-BFGS-B",
                                options={"maxiter": 500, "gtol": 1e-12, "ftol": 1e-15})
        results.append((res.fun, tuple(np.round(res.x, 10)), res.x))
    if not results:
        raise DegenerateSiteError("no admissible multistart", {"rho": rho})
    results.sort(key=lambda r: (round(r[0], 10), r[1]))
    eta = results[0][2].reshape(k, N)
    # polish: Newton on grad G(eta_j) = 0 alternated with the eigen-solve for nu
    lam, v, gap = _top_eig(basis, eta)
    for _ in range(30):
        t = v / np.linalg.norm(v)
        moved = 0.0
        for j in range(k):
            g = basis.grads(eta[j][None])[0].T @ t
            H = np.einsum("l,lij->ij", t, basis.hessians(eta[j][None])[0])
            step = -np.linalg.solve(H, g)
            if np.linalg.norm(step) < 0.1 * rho:
                eta[j] = eta[j] + step
                moved = max(moved, np.linalg.norm(step))
        lam, v, gap = _top_eig(basis, eta)
        if moved < 1e-15:
            break
    t0 = _canonical_sign(v / np.linalg.norm(v))
    if m == 1:
        t0 = np.array([1.0])
    Q = np.eye(m)
    if m > 1 and np.min(np.abs(t0)) < 1e-6:
        Q = householder_to_diagonal(t0)
        basis = basis.rotated(Q)
        t0 = Q @ t0
    Gj = basis.values(eta) @ t0
    if np.any(np.abs(Gj) < 1e-10 * np.max(np.abs(Gj))):
        raise DegenerateSiteError("maximiser places a site on the nodal set", {"G": Gj.tolist()})
    _, _, active = _barrier(eta, domain, rho, 1.0)
    n_max = _count_local_maxima(basis.combination(t0), domain, grid_resolution)
    if k > n_max:
        raise CapacityError(f"k={k} exceeds the {n_max} distinct local maxima of G^2 found at resolution {grid_resolution}")
    s0 = np.abs(Gj)
    G_l2 = float(np.sum(np.asarray(basis.l2_norms_sq) * t0 * t0))
    a, L0, A0, beta = coupling_data(t0, eta, s0, basis, 4, c1, G_l2)
    Hs = float(np.sum(Gj**2) / G_l2)
    sol = ReducedSolution(
        N=4, t0=t0, xi0=eta.copy(), s0=s0, beta=beta, a=a, L0=L0, A0=A0, G_l2_sq=G_l2,
        objectives={"H_star": Hs, "multistarts": len(results), "local_maxima": n_max},
        hessian_ranges={"sites": [np.linalg.eigvalsh(np.einsum("l,lij->ij", t0, basis.hessians(x[None])[0])).tolist()
                                  for x in eta], "eigen_gap": float(gap)},
        rotation=Q, barrier_active=bool(active),
    )
    if active:
        sol.notes.append("O_rho barrier active at the maximiser; stationarity not expected")
        warnings.warn("O_rho constraint active at the H_* maximiser", RuntimeWarning, stacklevel=2)
    sol.stationarity = verify_stationarity(sol, basis, 4, domain)
    return sol, basis


# stationarity ----------------------------------------------------------------------

def verify_stationarity(solution: ReducedSolution, basis: EigenBasis, N: int, domain: DomainSpec | None = None,
                        quad: BasisQuadrature | None = None) -> dict:
    """Max absolute residual of each equation family of the limit system."""
    check_dimension(N)
    t = np.asarray(solution.t0, dtype=float)
    xi = np.atleast_2d(solution.xi0)
    s = np.asarray(solution.s0, dtype=float)
    E = basis.values(xi)  # (k, m)
    Gj = E @ t
    sg = np.sign(Gj)
    grads = np.einsum("kmn,m->kn", basis.grads(xi), t)
    D = np.asarray(basis.l2_norms_sq)
    L0 = -float(np.sum(np.abs(Gj) * s ** ((N - 2) / 2)))
    out = {"gradient": float(np.max(np.abs(grads)))}
    G2 = float(np.sum(D * t * t))
    if N == 4:
        coef = L0 * D * t / G2 + (sg * s) @ E
        height = np.sum(s * s) * Gj + sg * L0 * s
    else:
        if quad is None:
            if domain is None:
                raise ConfigurationError("N=5 stationarity needs a domain for the quadrature term")
            quad = BasisQuadrature(domain, basis)
        crit = quad.lp_power(t, dimension_constants(5).two_star)
        coef = t * D - (G2 / crit) * quad.inner_f(t, 5)
        height = Gj + sg * L0 * np.sqrt(s) / np.sum(s * s)
    out["coefficient"] = float(np.max(np.abs(coef)))
    out["height"] = float(np.max(np.abs(height)))
    return out
