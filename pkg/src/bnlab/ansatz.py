"""Multi-bump ansatz Z = sum beta_j W~_j + sum tau_i e_i and its equation residual."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bubble import (BubbleParams, check_dimension, dimension_constants, eval_bubble, eval_projected_bubble,
                     nonlinearity)
from .domain import DomainSpec, EigenBasis
from .errors import ConfigurationError, RangeError, SolverError
from .reduced import ReducedSolution

# below this, products like U^2 (d U/d mu)^2 ~ mu^{-6} at the bubble core overflow
MU_FLOOR = 1e-50


def lambda_side(N: int) -> int:
    """sgn(lambda - lambda_kappa): blow-up from above for N=4, from below for N=5."""
    return 1 if check_dimension(N) == 4 else -1


@dataclass(frozen=True)
class AnsatzParams:
    N: int
    eps: float
    lam: float
    tau: float
    mu: float
    t: np.ndarray  # tau_i = t_i tau
    s: np.ndarray  # mu_j = s_j mu
    xi: np.ndarray  # (k, N)
    beta: np.ndarray
    basis: EigenBasis = field(compare=False, repr=False)
    domain: DomainSpec = field(compare=False, repr=False)
    refined: bool = False

    def __post_init__(self):
        check_dimension(self.N)
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")
        side = lambda_side(self.N)
        if not np.isclose(self.lam, self.basis.lambda_kappa + side * self.eps, rtol=0, atol=1e-12 * max(1, self.lam)):
            raise ConfigurationError(
                f"lambda={self.lam} is on the wrong side of lambda_kappa={self.basis.lambda_kappa} for N={self.N}"
            )
        if self.tau < 0 or self.mu <= 0:
            raise ConfigurationError("tau must be nonnegative and mu positive")
        for name in ("t", "s", "xi", "beta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "xi", self.xi.reshape(-1, self.N))

    @property
    def tau_i(self) -> np.ndarray:
        return self.t * self.tau

    @property
    def mu_j(self) -> np.ndarray:
        return self.s * self.mu

    @property
    def k(self) -> int:
        return len(self.s)

    @property
    def bubbles(self) -> list[BubbleParams]:
        return [BubbleParams(float(m), tuple(x), int(b), self.N) for m, x, b in zip(self.mu_j, self.xi, self.beta)]

    def replace(self, **changes) -> "AnsatzParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return AnsatzParams(**d)

    def to_dict(self) -> dict:
        return {
            "N": self.N, "eps": self.eps, "lambda": self.lam, "tau": self.tau, "mu": self.mu,
            "t": self.t.tolist(), "s": self.s.tolist(), "tau_i": self.tau_i.tolist(), "mu_j": self.mu_j.tolist(),
            "xi": self.xi.tolist(), "beta": self.beta.tolist(), "refined": self.refined,
        }


# scaling laws ------------------------------------------------------------------------

def _d(constants, name):
    return float(constants[name] if isinstance(constants, dict) else getattr(constants, name))


def scaling_laws(N: int, eps: float, reduced: ReducedSolution, constants) -> tuple[float, float]:
    """Leading-order (tau, mu) for a given eps; `constants` supplies d1, d2, d3."""
    check_dimension(N)
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    d1, d2, d3 = (_d(constants, n) for n in ("d1", "d2", "d3"))
    L0 = abs(reduced.L0)
    G2 = reduced.G_l2_sq
    S2 = float(np.sum(np.asarray(reduced.s0) ** 2))
    if N == 4:
        A0 = d1 * d3 * L0**2 / (d2 * S2 * G2)
        expo = -A0 / eps
        if expo < np.log(MU_FLOOR):
            raise RangeError(
                f"mu = exp(-{A0:.4g}/eps) underflows; usable window is eps > {A0 / -np.log(MU_FLOOR):.4g}",
                {"A0": A0, "eps": eps},
            )
        mu = float(np.exp(expo))
        tau = d1 * L0 * mu / (G2 * eps)
        return tau, mu
    r = G2 / reduced.G_crit
    tau = (r * eps) ** 0.75
    mu = (d3 * L0 / (d2 * S2)) ** 2 * r**1.5 * eps**1.5
    return float(tau), float(mu)


def build_ansatz(reduced: ReducedSolution, basis: EigenBasis, domain: DomainSpec, eps: float, constants,
                 refine: bool = False, quad=None) -> AnsatzParams:
    N = reduced.N
    tau, mu = scaling_laws(N, eps, reduced, constants)
    p = AnsatzParams(N, eps, basis.lambda_kappa + lambda_side(N) * eps, tau, mu, reduced.t0, reduced.s0,
                     reduced.xi0, reduced.beta, basis, domain)
    if refine:
        p = refine_parameters(p, constants, quad)
    return p


def refine_parameters(p: AnsatzParams, constants, quad=None) -> AnsatzParams:
    """Solve the leading coefficient and height equations at finite eps for (tau_i, mu_j).

    Keeps the site positions. The d1 coupling and the full f(sum tau e) term are
    retained, so the result differs from the pure scaling laws by 1 + o(1) factors.
    The result is stored as t_eps = tau_i / tau, s_eps = mu_j / mu.
    """
    from .reduced import BasisQuadrature

    N = p.N
    d1, d2, d3 = (_d(constants, n) for n in ("d1", "d2", "d3"))
    d1 *= p.lam / p.basis.lambda_kappa  # d1 is normalised with lambda_kappa, the equation carries lambda
    quad = quad or BasisQuadrature(p.domain, p.basis)
    D = np.asarray(p.basis.l2_norms_sq)
    E = p.basis.values(p.xi)  # (k, m)
    side = lambda_side(N)
    h = (N - 2) / 2
    m, k = len(p.t), p.k
    tau_scale, mu_scale = p.tau, p.mu

    def equations(z):
        ti = z[:m] * tau_scale
        mj = np.exp(z[m:]) * mu_scale
        coef = -side * p.eps * ti * D - quad.inner_f(ti, N) - d1 * (p.beta * mj**h) @ E
        Gj = E @ ti
        if N == 4:
            height = d2 * p.beta * mj * np.abs(np.log(mj)) + d3 * Gj
        else:
            height = d2 * p.beta * mj + d3 * np.sqrt(mj) * Gj
        # scale each family to O(1)
        return np.concatenate([coef / (p.eps * tau_scale), height / (d2 * mu_scale * (np.abs(np.log(mu_scale)) if N == 4 else 1))])

    z0 = np.concatenate([p.t, np.log(p.s)])
    sol = optimize.root(equations, z0, method="hybr")
    if np.max(np.abs(equations(sol.x))) > 1e-9:
        raise SolverError("finite-eps refinement did not converge", {"message": sol.message, "eps": p.eps})
    ratios = np.concatenate([sol.x[:m] / p.t, np.exp(sol.x[m:]) / p.s])
    if np.any(~(ratios > 0.2)) or np.any(ratios > 5):
        # drifted to the trivial branch or far outside the asymptotic regime
        raise SolverError("finite-eps refinement left the neighbourhood of the scaling laws",
                          {"ratios": ratios.tolist(), "eps": p.eps})
    return p.replace(t=sol.x[:m], s=np.exp(sol.x[m:]), refined=True)


# evaluation --------------------------------------------------------------------------

def _check_inside(x, domain):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(domain.contains(x)):
        raise ValueError("evaluation point outside the domain")
    return x


def bubble_sum(x, p: AnsatzParams, projected: bool = True):
    total = 0.0
    for b in p.bubbles:
        total = total + b.beta * (eval_projected_bubble(x, b, p.domain) if projected else eval_bubble(x, b))
    return total


def assemble(x, p: AnsatzParams) -> np.ndarray:
    """Z(x) = sum_j beta_j W~_j(x) + sum_i tau_i e_i(x) for points of shape (n, N)."""
    x = _check_inside(x, p.domain)
    return bubble_sum(x, p) + p.basis.values(x) @ p.tau_i


def pointwise_residual(x, p: AnsatzParams, Z=None) -> np.ndarray:
    """R = -Delta Z - lambda Z - f(Z), evaluated in closed form.

    Uses -Delta W~ = U^p and -Delta e = lambda_kappa e.
    """
    x = _check_inside(x, p.domain)
    c = dimension_constants(p.N)
    Z = assemble(x, p) if Z is None else Z
    source = 0.0
    for b in p.bubbles:
        source = source + b.beta * eval_bubble(x, b) ** c.p
    return source + p.basis.lambda_kappa * (p.basis.values(x) @ p.tau_i) - p.lam * Z - nonlinearity(Z, p.N)


def kirchhoff_routh(mu, x, B_N: float, domain: DomainSpec) -> float:
    mu = np.asarray(mu, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    N = domain.N
    h = (N - 2) / 2
    k = len(mu)
    if x.shape != (k, N):
        raise ConfigurationError("need one point per height")
    diag = sum(float(domain.regular_part(x[j], x[j])) * mu[j] ** (N - 2) for j in range(k))
    off = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                off += float(domain.green(x[i], x[j])) * mu[j] ** h * mu[i] ** h
    return 0.5 * (diag - off) - float(np.sum(B_N / 2 * mu**2))
