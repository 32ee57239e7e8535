"""Residual norms, Lagrange multipliers, leading-order predictions, rate fits and d-constants."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .ansatz import AnsatzParams, assemble, build_ansatz, lambda_side, pointwise_residual
from .bubble import (BubbleParams, bubble_integrals, dimension_constants, eval_bubble, eval_bubble_derivative,
                     nonlinearity)
from .domain import DomainSpec, EigenBasis, UnitBall
from .domain.quadrature import QuadSettings, axisymmetric_ball_rule, stratified_mc
from .errors import CapabilityError, NumericalError

GRAM_COND_MAX = 1e10


# records -----------------------------------------------------------------------------

@dataclass
class RateFit:
    model: str  # "power" (slope) or "exponential" (A in y ~ C exp(-A/eps))
    value: float
    stderr: float
    ci: tuple
    intercept: float
    warnings: list = field(default_factory=list)

    def contains(self, target: float) -> bool:
        return self.ci[0] <= target <= self.ci[1]


@dataclass
class ResidualReport:
    N: int
    eps: list
    norm: list
    stderr: list
    tau: list
    mu: list
    samples: list
    fit: RateFit | None = None

    def rows(self):
        return list(zip(self.eps, self.tau, self.mu, self.norm, self.stderr))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit"] = asdict(self.fit) if self.fit else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("fit") is not None:
            f = dict(d["fit"])
            f["ci"] = tuple(f["ci"])
            d["fit"] = RateFit(**f)
        return cls(**d)


@dataclass
class MultiplierEntry:
    eps: float
    tau: float
    mu: float
    d: list  # length m
    c: list  # k x (N+1)
    gram_cond: float  # raw
    gram_cond_scaled: float  # after symmetric diagonal scaling
    projections: dict  # measured <R, e_l>, <R, Ppsi^0_j>, <R, Ppsi^axis_j>
    predicted: dict
    scheme: str

    def d_ratio(self, norms_sq) -> np.ndarray:
        """|d_l| / (eps tau ||e_l||^2)."""
        return np.abs(np.asarray(self.d)) / (self.eps * self.tau * np.asarray(norms_sq))


@dataclass
class MultiplierReport:
    entries: list

    def to_dict(self):
        return {"entries": [asdict(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d):
        return cls([MultiplierEntry(**e) for e in d["entries"]])


@dataclass
class ConstantEstimates:
    N: int
    lambda_kappa: float
    probes: list
    sequences: dict  # raw per-probe estimates
    extrapolated: dict  # Richardson sequences
    values: dict
    drift: dict
    candidates: dict

    @property
    def d1(self):
        return self.values["d1"]

    @property
    def d2(self):
        return self.values["d2"]

    @property
    def d3(self):
        return self.values["d3"]

    @property
    def d4(self):
        return self.values["d4"]

    @property
    def c1(self):
        return self.d1 * self.d3 / self.d2

    def rescaled(self, lambda_kappa: float) -> "ConstantEstimates":
        """d2 carries a factor lambda_kappa; the others are universal."""
        f = lambda_kappa / self.lambda_kappa
        vals = dict(self.values, d2=self.values["d2"] * f)
        cands = dict(self.candidates, d2=self.candidates["d2"] * f)
        return ConstantEstimates(self.N, lambda_kappa, self.probes, self.sequences, self.extrapolated, vals,
                                 self.drift, cands)

    def to_dict(self):
        d = asdict(self)
        d["c1"] = self.c1
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "c1"}
        return cls(**d)


# residual norms ------------------------------------------------------------------------

def residual_norm(p: AnsatzParams, samples: int = 200_000, seed: int = 0, rel_tol: float = 0.05,
                  max_samples: int = 3_200_000, shell_factor: float = 1.0) -> tuple[float, float, int]:
    """(||R||_{L^q}, stderr, samples) with q = 2N/(N+2), by stratified Monte Carlo.

    Sample count doubles until the standard error is below rel_tol of the value.
    """
    q = 2 * p.N / (p.N + 2)
    n = samples
    while True:
        settings = QuadSettings("stratified-mc", samples=n, seed=seed, centers=tuple(map(tuple, p.xi)),
                                scales=tuple(p.mu_j), shell_factor=shell_factor)
        res = stratified_mc(p.domain, lambda x: np.abs(pointwise_residual(x, p)) ** q, settings)
        I, se = float(res.value), float(res.stderr)
        if I == 0:
            return 0.0, 0.0, res.n_evals
        norm = I ** (1 / q)
        err = norm * se / (q * I)
        if err <= rel_tol * norm:
            return norm, err, res.n_evals
        if 2 * n > max_samples:
            raise NumericalError("residual norm variance target not met",
                                 {"norm": norm, "stderr": err, "samples": res.n_evals, "eps": p.eps})
        n *= 2


def _residual_point(args):
    reduced, basis, domain, constants, eps, samples, seed, rel_tol, refine = args
    p = build_ansatz(reduced, basis, domain, eps, constants, refine=refine)
    norm, se, n = residual_norm(p, samples, seed, rel_tol)
    return norm, se, n, p.tau, p.mu


def residual_sweep(reduced, basis, domain, constants, eps_grid, samples=200_000, seed=0, rel_tol=0.05,
                   model=None, refine=False, workers: int = 1) -> ResidualReport:
    """||R||_{L^{2N/(N+2)}} along a decreasing eps grid; point i uses seed + i."""
    eps_grid = sorted(map(float, eps_grid), reverse=True)
    jobs = [(reduced, basis, domain, constants, eps, samples, seed + i, rel_tol, refine)
            for i, eps in enumerate(eps_grid)]
    out = parallel_map(_residual_point, jobs, workers)
    norm, se, n, tau, mu = (list(col) for col in zip(*out))
    rep = ResidualReport(reduced.N, eps_grid, norm, se, tau, mu, n)
    if len(eps_grid) >= 3:
        model = model or ("power" if reduced.N == 5 else "exponential")
        rep.fit = rate_fit(rep.eps, rep.norm, rep.stderr, model)
    return rep


def parallel_map(fn, jobs, workers: int = 1):
    """Ordered map, in worker processes when workers > 1. Results do not depend on workers."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


# rate fits -------------------------------------------------------------------------------

def rate_fit(eps, y, stderr=None, model: str = "power", level: float = 0.95) -> RateFit:
    """Weighted least squares of log y against log eps (power) or 1/eps (exponential)."""
    eps = np.asarray(eps, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(eps) < 3 or np.any(y <= 0):
        raise NumericalError("rate fit needs at least three positive values", {"y": y.tolist()})
    se = np.zeros_like(y) if stderr is None else np.asarray(stderr, dtype=float)
    sig = se / y
    if np.all(sig > 0):
        w = 1 / sig**2
    else:
        w = np.ones_like(y)
    if model == "power":
        X = np.log(eps)
    elif model == "exponential":
        X = 1 / eps
    else:
        raise ValueError(f"unknown model {model!r}")
    Y = np.log(y)
    A = np.stack([X, np.ones_like(X)], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], Y * sw, rcond=None)
    resid = Y - A @ coef
    dof = len(X) - 2
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    if np.all(sig > 0):
        chi2 = float(np.sum(w * resid**2)) / max(dof, 1)
        cov = cov * max(chi2, 1.0)  # inflate when scatter exceeds the error bars
    else:
        cov = cov * float(np.sum(resid**2)) / max(dof, 1)
    s_slope = float(np.sqrt(max(cov[0, 0], 0.0)))
    tq = stats.t.ppf(0.5 + level / 2, max(dof, 1))
    slope = float(coef[0])
    notes = []
    order = np.argsort(eps)
    ys, ss = y[order], se[order]
    if np.any(np.diff(ys) < -2 * (ss[1:] + ss[:-1])):
        notes.append("data not monotone in eps beyond error bars")
    for n in notes:
        warnings.warn(n, RuntimeWarning, stacklevel=2)
    if model == "power":
        return RateFit("power", slope, s_slope, (slope - tq * s_slope, slope + tq * s_slope), float(coef[1]), notes)
    A0 = -slope
    return RateFit("exponential", A0, s_slope, (A0 - tq * s_slope, A0 + tq * s_slope), float(coef[1]), notes)


# bubble fields -------------------------------------------------------------------------------

def _fields(x, b: BubbleParams, domain, axis=None):
    """U, W~, Ppsi^0 and the projected derivatives Ppsi^1..N (or only the axis one)."""
    N = b.N
    c = dimension_constants(N)
    h = (N - 2) / 2
    mu = b.mu
    U = eval_bubble(x, b)
    H, dH = domain.regular_part(x, b.center, need_gradient=True)
    W = U - c.alpha_N * mu**h * H
    P0 = eval_bubble_derivative(x, b, 0) - c.alpha_N * h * mu ** ((N - 4) / 2) * H
    Pl = np.stack([eval_bubble_derivative(x, b, l) for l in range(1, N + 1)], -1) + c.alpha_N * mu**h * dH
    if axis is not None:
        Pl = Pl @ axis
    return U, W, P0, Pl


# multipliers ------------------------------------------------------------------------------------

def _radial_basis(basis: EigenBasis) -> bool:
    return all(getattr(pr, "h", 1) == 0 for pr in basis.primitives)


def _nodal_breaks(p: AnsatzParams, n_scan: int = 400):
    def breaks(center, u, rmax):
        r = np.geomspace(1e-3 * p.mu_j.min(), rmax * (1 - 1e-12), n_scan)
        Z = assemble(center + r[:, None] * u, p)
        idx = np.flatnonzero(np.sign(Z[1:]) != np.sign(Z[:-1]))
        out = []
        for i in idx:
            f = lambda s: float(assemble((center + s * u)[None], p)[0])
            out.append(optimize.brentq(f, r[i], r[i + 1], xtol=1e-15, rtol=1e-14))
        return out

    return breaks


def axisymmetric_applicable(p: AnsatzParams) -> bool:
    return isinstance(p.domain, UnitBall) and p.k == 1 and _radial_basis(p.basis)


def extract_multipliers(p: AnsatzParams, constants=None, scheme: str = "auto", n_theta: int = 32,
                        n_rho: int = 16, samples: int = 400_000, seed: int = 0) -> MultiplierEntry:
    """Solve R = sum_j,l c_j^l U_j^{4/(N-2)} Ppsi_j^l + sum_i d_i e_i in the weak sense.

    Tested against {e_l, Ppsi_j^h}. The axisymmetric scheme (ball, one bubble, radial
    eigenfunctions) integrates exactly in the transverse directions, where only
    psi^0 and the derivative along the axis through 0 and xi couple; the transverse
    derivative multipliers vanish by symmetry.
    """
    N = p.N
    q4 = 4.0 / (N - 2)
    m, k = len(p.t), p.k
    if scheme == "auto":
        scheme = "axisymmetric" if axisymmetric_applicable(p) else "stratified-mc"
    if scheme == "axisymmetric":
        if not axisymmetric_applicable(p):
            raise CapabilityError("axisymmetric multiplier extraction needs the ball, one bubble and radial modes")
        xi = p.xi[0]
        r = np.linalg.norm(xi)
        axis = xi / r if r > 1e-14 else np.eye(N)[0]
        rule = axisymmetric_ball_rule(N, xi, 0.02 * p.mu_j[0], n_theta=n_theta, n_rho=n_rho, per_decade=2,
                                      axis=axis, breaks=_nodal_breaks(p))
        x, w = rule.points, rule.weights
        b = p.bubbles[0]
        U, W, P0, Pa = _fields(x, b, p.domain, axis)
        E = p.basis.values(x)
        R = pointwise_residual(x, p)
        T = np.column_stack([P0, Pa, E])
        B = np.column_stack([U**q4 * P0, U**q4 * Pa, E])
        A = (T * w[:, None]).T @ B
        rhs = (T * w[:, None]).T @ R
        labels = (0, "axis")
    else:
        centers = tuple(map(tuple, p.xi))

        def integrand(x):
            cols_T, cols_B = [], []
            for b in p.bubbles:
                U, W, P0, Pl = _fields(x, b, p.domain)
                for col in [P0] + [Pl[:, l] for l in range(N)]:
                    cols_T.append(col)
                    cols_B.append(U**q4 * col)
            E = p.basis.values(x)
            T = np.column_stack(cols_T + [E])
            B = np.column_stack(cols_B + [E])
            R = pointwise_residual(x, p)
            return np.concatenate([(T[:, :, None] * B[:, None, :]).reshape(len(x), -1), T * R[:, None]], axis=1)

        settings = QuadSettings("stratified-mc", samples=samples, seed=seed, centers=centers, scales=tuple(p.mu_j))
        res = stratified_mc(p.domain, integrand, settings)
        nT = k * (N + 1) + m
        A = np.asarray(res.value[: nT * nT]).reshape(nT, nT)
        rhs = np.asarray(res.value[nT * nT:])
        labels = tuple(range(N + 1))
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
        raise NumericalError("non-finite multiplier quadrature", {"mu": p.mu_j.tolist(), "eps": p.eps})
    cond = float(np.linalg.cond(A))
    sc = 1 / np.sqrt(np.abs(np.diag(A)))
    As = A * sc[:, None] * sc[None, :]
    cond_s = float(np.linalg.cond(As))
    if cond_s > GRAM_COND_MAX:
        raise NumericalError("multiplier Gram matrix ill-conditioned",
                             {"cond_scaled": cond_s, "cond": cond, "mu": p.mu_j.tolist()})
    sol = sc * np.linalg.solve(As, sc * rhs)
    if scheme == "axisymmetric":
        c = np.zeros((1, N + 1))
        c[0, 0] = sol[0]
        c[0, 1:] = sol[1] * axis
        d = sol[2:]
        proj = {"coefficient": rhs[2:].tolist(), "height": [float(rhs[0])], "gradient_axis": [float(rhs[1])]}
    else:
        c = sol[: k * (N + 1)].reshape(k, N + 1)
        d = sol[k * (N + 1):]
        rr = rhs[: k * (N + 1)].reshape(k, N + 1)
        proj = {"coefficient": rhs[k * (N + 1):].tolist(), "height": rr[:, 0].tolist(),
                "gradient": rr[:, 1:].tolist()}
    pred = predicted_multipliers(p, constants) if constants is not None else {}
    return MultiplierEntry(p.eps, p.tau, p.mu, np.asarray(d).tolist(), c.tolist(), cond, cond_s, proj,
                           {k_: np.asarray(v).tolist() for k_, v in pred.items()}, scheme)


def predicted_multipliers(p: AnsatzParams, constants, quad=None) -> dict:
    """Leading-order projections of R on e_l, Ppsi^0_j and Ppsi^h_j.

    Convention R = -Delta Z - lambda Z - f(Z).
    """
    from .reduced import BasisQuadrature

    N = p.N
    d1, d2, d3, d4 = (float(getattr(constants, n)) for n in ("d1", "d2", "d3", "d4"))
    d1 *= p.lam / p.basis.lambda_kappa
    h = (N - 2) / 2
    quad = quad or BasisQuadrature(p.domain, p.basis)
    D = np.asarray(p.basis.l2_norms_sq)
    E = p.basis.values(p.xi)
    grads = np.einsum("kmn,m->kn", p.basis.grads(p.xi), p.tau_i)
    mj = p.mu_j
    coef = -lambda_side(N) * p.eps * p.tau_i * D - quad.inner_f(p.tau_i, N) - d1 * (p.beta * mj**h) @ E
    Gj = E @ p.tau_i
    if N == 4:
        height = -(d2 * p.beta * mj * np.abs(np.log(mj)) + d3 * Gj)
    else:
        height = -(d2 * p.beta * mj + d3 * np.sqrt(mj) * Gj)
    grad = d4 * (mj**h)[:, None] * grads
    return {"coefficient": coef, "height": height, "gradient": grad, "d_implied": coef / D}


# constants ------------------------------------------------------------------------------------------

def _richardson(seq, p: float = 1.0):
    seq = np.asarray(seq, dtype=float)
    return (2**p * seq[1:] - seq[:-1]) / (2**p - 1)


def candidate_constants(N: int, lambda_kappa: float) -> dict:
    """Closed-form values the quadrature estimates are compared against."""
    c = dimension_constants(N)
    h = (N - 2) / 2
    ai = c.alpha_N / c.gamma_N
    d2 = lambda_kappa * (c.alpha_N**2 * c.omega_N if N == 4 else bubble_integrals(N).l2)
    return {"d1": float(ai), "d2": float(d2), "d3": float(h * ai), "d4": float(ai)}


def estimate_constants(domain: DomainSpec, basis: EigenBasis, probes=(1e-2, 5e-3, 2.5e-3, 1.25e-3),
                       xi_offset: float = 0.3, n_theta: int = 32, n_rho: int = 20, tol: float = 0.01,
                       strict: bool = True) -> ConstantEstimates:
    """Estimate d1..d4 on the ball with a radial eigenfunction.

    d1, d2, d3 use a bubble at the centre; d4 needs a nonzero gradient of e and uses
    a bubble at distance `xi_offset` from the centre. Probes are successive halvings.
    """
    if not (isinstance(domain, UnitBall) and _radial_basis(basis)):
        raise CapabilityError("constants are estimated on the ball with a radial eigenfunction; "
                              "use ConstantEstimates.rescaled for other eigenvalues")
    N = domain.N
    c = dimension_constants(N)
    h = (N - 2) / 2
    lam = basis.lambda_kappa
    probes = [float(mu) for mu in probes]
    if len(probes) < 3 or any(not np.isclose(b, a / 2) for a, b in zip(probes, probes[1:])):
        raise ValueError("probes must be at least three successive halvings")
    e = lambda x: basis.values(x)[..., 0]
    axis = np.eye(N)[0]
    xi0 = np.zeros(N)
    xi4 = xi_offset * axis
    e0 = float(e(xi0[None])[0])
    de4 = float(basis.grads(xi4[None])[0, 0] @ axis)
    seq = {"d1": [], "g2": [], "d3": [], "d4": []}
    for mu in probes:
        b = BubbleParams(mu, tuple(xi0), 1, N)
        rule = axisymmetric_ball_rule(N, xi0, 0.02 * mu, n_theta=n_theta, n_rho=n_rho, axis=axis)
        x, w = rule.points, rule.weights
        U, W, P0, _ = _fields(x, b, domain, axis)
        ex = e(x)
        seq["d1"].append(lam * float(w @ (W * ex)) / (mu**h * e0))
        seq["g2"].append(lam * float(w @ (W * P0)) / mu)
        seq["d3"].append(float(w @ (nonlinearity(U, N, 1) * ex * P0)) / (mu ** ((N - 4) / 2) * e0))
        b4 = BubbleParams(mu, tuple(xi4), 1, N)
        rule = axisymmetric_ball_rule(N, xi4, 0.02 * mu, n_theta=n_theta, n_rho=n_rho, axis=axis)
        x, w = rule.points, rule.weights
        U, W, P0, Pa = _fields(x, b4, domain, axis)
        seq["d4"].append(-float(w @ (nonlinearity(U, N, 1) * e(x) * Pa)) / (mu**h * de4))
    ext, vals, drift = {}, {}, {}
    for name in ("d1", "d3", "d4"):
        ext[name] = _richardson(seq[name]).tolist()
    if N == 4:
        # lam <W~, Ppsi^0> / mu = d2 |log mu| + c + o(1)
        L = np.abs(np.log(probes))
        g = np.asarray(seq["g2"])
        ext["d2"] = ((g[1:] - g[:-1]) / (L[1:] - L[:-1])).tolist()
        seq["d2"] = (g / L).tolist()
    else:
        seq["d2"] = seq.pop("g2")
        ext["d2"] = _richardson(seq["d2"]).tolist()
    seq.pop("g2", None)
    for name in ("d1", "d2", "d3", "d4"):
        vals[name] = float(ext[name][-1])
        drift[name] = float(abs(ext[name][-1] - ext[name][-2]) / abs(ext[name][-1]))
    cands = candidate_constants(N, lam)
    est = ConstantEstimates(N, lam, probes, seq, ext, vals, drift, cands)
    bad = [n for n, v in vals.items() if not v > 0]
    if bad:
        raise NumericalError(f"nonpositive constant estimates {bad}", est.to_dict())
    if strict and max(drift.values()) > tol:
        raise NumericalError("constant estimates drift above tolerance under mu halving", est.to_dict())
    return est
