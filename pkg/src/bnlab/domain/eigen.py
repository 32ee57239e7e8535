"""Dirichlet eigenbases of the Laplacian on the hyperbox and the unit ball."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as gamma_fn
from scipy.special import jv

from ..errors import CapabilityError, ConfigurationError
from .geometry import DomainSpec, HyperBox, UnitBall


# primitive eigenfunction families ---------------------------------------------

@dataclass(frozen=True)
class SineMode:
    """prod_i sin(k_i pi x_i / L_i), scaled to unit L2 norm on the box."""

    freqs: tuple[int, ...]
    sides: tuple[float, ...]

    def _parts(self, x):
        w = np.asarray(self.freqs) * np.pi / np.asarray(self.sides)
        arg = x * w
        norm = np.prod(np.sqrt(2.0 / np.asarray(self.sides)))
        return w, np.sin(arg), np.cos(arg), norm

    def value(self, x):
        _, s, _, c = self._parts(x)
        return c * np.prod(s, axis=-1)

    def grad(self, x):
        w, s, co, c = self._parts(x)
        N = len(self.freqs)
        out = np.empty(x.shape)
        for i in range(N):
            f = w[i] * co[..., i]
            for j in range(N):
                if j != i:
                    f = f * s[..., j]
            out[..., i] = c * f
        return out

    def hessian(self, x):
        w, s, co, c = self._parts(x)
        N = len(self.freqs)
        out = np.empty(x.shape + (N,))
        full = np.prod(s, axis=-1)
        for i in range(N):
            for j in range(N):
                if i == j:
                    out[..., i, i] = -c * w[i] ** 2 * full
                    continue
                f = w[i] * co[..., i] * w[j] * co[..., j]
                for l in range(N):
                    if l not in (i, j):
                        f = f * s[..., l]
                out[..., i, j] = c * f
        return out


def bessel_F(mu, z):
    """z^{-mu} J_mu(z), entire in z; series near the origin."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    val = zs ** (-mu) * jv(mu, zs)
    h = (z / 2) ** 2
    ser = (1.0 / gamma_fn(mu + 1) - h / gamma_fn(mu + 2) + h * h / (2 * gamma_fn(mu + 3))) / 2**mu
    return np.where(small, ser, val)


def bessel_zero(order: float, n: int) -> float:
    """n-th positive zero of J_order (half-integer orders allowed)."""
    zeros = []
    x = max(order, 0.5) * 0.5 + 0.1
    step = 0.05
    f_prev = jv(order, x)
    while len(zeros) < n:
        x_next = x + step
        f_next = jv(order, x_next)
        if f_prev == 0.0:
            zeros.append(x)
        elif f_prev * f_next < 0:
            zeros.append(optimize.brentq(lambda t: jv(order, t), x, x_next, xtol=1e-15, rtol=1e-15))
        x, f_prev = x_next, f_next
    return float(zeros[n - 1])


@dataclass(frozen=True)
class BallMode:
    """Ball eigenfunction: radial (h=0) or x_h times a radial profile (degree one).

    Radial profile R(r) = F_nu(j r) with F_mu(z) = z^{-mu} J_mu(z), nu = N/2 - 1;
    degree-one modes use x_h F_{nu+1}(j r).
    """

    N: int
    j: float
    h: int  # 0 radial, 1..N degree one along axis h
    scale: float = 1.0

    @property
    def nu(self):
        return self.N / 2 - 1

    def value(self, x):
        r = np.linalg.norm(x, axis=-1)
        jr = self.j * r
        if self.h == 0:
            return self.scale * bessel_F(self.nu, jr)
        return self.scale * x[..., self.h - 1] * bessel_F(self.nu + 1, jr)

    def grad(self, x):
        r = np.linalg.norm(x, axis=-1)
        jr = self.j * r
        j2 = self.j**2
        if self.h == 0:
            return self.scale * (-j2 * bessel_F(self.nu + 1, jr))[..., None] * x
        F1 = bessel_F(self.nu + 1, jr)
        F2 = bessel_F(self.nu + 2, jr)
        out = (-j2 * F2 * x[..., self.h - 1])[..., None] * x
        out[..., self.h - 1] += F1
        return self.scale * out

    def hessian(self, x):
        r = np.linalg.norm(x, axis=-1)
        jr = self.j * r
        j2 = self.j**2
        N = self.N
        eye = np.eye(N)
        xx = x[..., :, None] * x[..., None, :]
        if self.h == 0:
            F1 = bessel_F(self.nu + 1, jr)
            F2 = bessel_F(self.nu + 2, jr)
            out = -j2 * F1[..., None, None] * eye + (j2 * j2 * F2)[..., None, None] * xx
            return self.scale * out
        F2 = bessel_F(self.nu + 2, jr)
        F3 = bessel_F(self.nu + 3, jr)
        a = self.h - 1
        xa = x[..., a]
        ea = eye[a]
        out = (j2 * j2 * F3 * xa)[..., None, None] * xx
        out -= (j2 * F2)[..., None, None] * (
            ea[:, None] * x[..., None, :] + x[..., :, None] * ea[None, :] + xa[..., None, None] * eye
        )
        return self.scale * out

    def radial_norm_sq(self) -> float:
        """Unnormalised squared L2 norm over the unit ball."""
        omega = 2 * np.pi ** (self.N / 2) / gamma_fn(self.N / 2)
        if self.h == 0:
            g = lambda r: bessel_F(self.nu, self.j * r) ** 2 * r ** (self.N - 1)
            fac = omega
        else:
            g = lambda r: bessel_F(self.nu + 1, self.j * r) ** 2 * r ** (self.N + 1)
            fac = omega / self.N
        v, _ = integrate.quad(g, 0, 1, epsabs=0, epsrel=1e-13, limit=200)
        return fac * v


# eigenbasis ------------------------------------------------------------------

@dataclass(frozen=True)
class EigenBasis:
    """Orthogonal eigenfunctions spanning (part of) the eigenspace of lambda_kappa.

    Evaluators are vectorised: `values(x)` has shape (..., m), `grads` (..., m, N),
    `hessians` (..., m, N, N). `mixing` is an orthogonal m x m matrix applied to the
    primitive family, e_i = sum_k Q[i, k] prim_k.
    """

    kappa: int
    lambda_kappa: float
    multiplicity: int
    N: int
    primitives: tuple
    l2_norms_sq: tuple[float, ...]
    mixing: np.ndarray = field(default=None, compare=False)
    labels: tuple = ()

    def __post_init__(self):
        if self.mixing is None:
            object.__setattr__(self, "mixing", np.eye(len(self.primitives)))

    @property
    def m(self) -> int:
        return len(self.primitives)

    def values(self, x):
        x = np.asarray(x, dtype=float)
        raw = np.stack([p.value(x) for p in self.primitives], axis=-1)
        return raw @ self.mixing.T

    def grads(self, x):
        x = np.asarray(x, dtype=float)
        raw = np.stack([p.grad(x) for p in self.primitives], axis=-2)
        return np.einsum("ik,...kn->...in", self.mixing, raw)

    def hessians(self, x):
        x = np.asarray(x, dtype=float)
        raw = np.stack([p.hessian(x) for p in self.primitives], axis=-3)
        return np.einsum("ik,...knp->...inp", self.mixing, raw)

    def truncate(self, m: int) -> "EigenBasis":
        """First m members of the eigenspace basis."""
        if not 1 <= m <= self.multiplicity:
            raise ConfigurationError(f"m={m} outside 1..multiplicity={self.multiplicity}")
        if m > self.m:
            raise ConfigurationError(f"basis holds only {self.m} functions")
        return EigenBasis(self.kappa, self.lambda_kappa, self.multiplicity, self.N,
                          self.primitives[:m], self.l2_norms_sq[:m], None, self.labels[:m])

    def rotated(self, Q) -> "EigenBasis":
        """Basis e*_i = sum_k Q[i, k] e_k for orthogonal Q (norms must be equal)."""
        Q = np.asarray(Q, dtype=float)
        if not np.allclose(Q @ Q.T, np.eye(self.m), atol=1e-12):
            raise ConfigurationError("rotation must be orthogonal")
        if not np.allclose(self.l2_norms_sq, self.l2_norms_sq[0], rtol=1e-12):
            raise ConfigurationError("rotation requires equal L2 norms")
        return EigenBasis(self.kappa, self.lambda_kappa, self.multiplicity, self.N,
                          self.primitives, self.l2_norms_sq, Q @ self.mixing, self.labels)

    def combination(self, t):
        """Evaluator for G(x) = sum_l t_l e_l(x)."""
        t = np.asarray(t, dtype=float)
        return lambda x: self.values(x) @ t

    def describe(self) -> dict:
        return {
            "kappa": self.kappa,
            "lambda_kappa": self.lambda_kappa,
            "multiplicity": self.multiplicity,
            "m": self.m,
            "labels": [str(l) for l in self.labels],
            "mixing": self.mixing.tolist(),
        }


def _box_levels(sides, n_levels: int):
    """Distinct eigenvalues (ascending) with their frequency vectors."""
    sides = np.asarray(sides, dtype=float)
    N = len(sides)
    kmax = 2
    while True:
        grid = itertools.product(range(1, kmax + 1), repeat=N)
        entries = []
        for k in grid:
            lam = float(np.sum((np.asarray(k) * np.pi / sides) ** 2))
            entries.append((lam, k))
        entries.sort()
        levels = []
        for lam, k in entries:
            if levels and abs(lam - levels[-1][0]) <= 1e-12 * lam:
                levels[-1][1].append(k)
            else:
                levels.append((lam, [k]))
        # levels are complete only below the smallest eigenvalue with a frequency at kmax + 1
        w = (np.pi / sides) ** 2
        bound = float(np.sum(w) + ((kmax + 1) ** 2 - 1) * np.min(w))
        done = [lv for lv in levels if lv[0] < bound * (1 - 1e-12)]
        if len(done) >= n_levels:
            return done[:n_levels]
        kmax += 1


def _ball_ladder(N: int, n_levels: int):
    """(lambda, degree, radial index) sorted, including degrees >= 2 for correct indexing."""
    nu = N / 2 - 1
    cand = []
    for l in range(0, n_levels + 2):
        for n in range(1, n_levels + 2):
            cand.append((bessel_zero(nu + l, n) ** 2, l, n))
    cand.sort()
    return cand[:n_levels]


def eigenbasis(domain: DomainSpec, kappa: int) -> EigenBasis:
    """Eigenspace of the kappa-th distinct Dirichlet eigenvalue (kappa >= 1)."""
    if int(kappa) != kappa or kappa < 1:
        raise ConfigurationError(f"eigenvalue index must be a positive integer, got {kappa}")
    kappa = int(kappa)
    if isinstance(domain, HyperBox):
        lam, freqs = _box_levels(domain.sides, kappa)[kappa - 1]
        freqs = sorted(freqs, key=lambda k: tuple(-np.asarray(k)))
        prims = tuple(SineMode(tuple(k), tuple(domain.sides)) for k in freqs)
        return EigenBasis(kappa, lam, len(prims), domain.N, prims, (1.0,) * len(prims),
                          labels=tuple(tuple(k) for k in freqs))
    if isinstance(domain, UnitBall):
        N = domain.N
        lam, l, n = _ball_ladder(N, kappa)[kappa - 1]
        if l > 1:
            supported = [i + 1 for i, c in enumerate(_ball_ladder(N, kappa)) if c[1] <= 1]
            raise CapabilityError(
                f"kappa={kappa} is a degree-{l} eigenvalue of the ball; only radial and degree-one "
                f"eigenspaces are implemented (supported indices up to {kappa}: {supported})"
            )
        j = float(np.sqrt(lam))
        hs = (0,) if l == 0 else tuple(range(1, N + 1))
        prims = []
        for h in hs:
            mode = BallMode(N, j, h)
            prims.append(BallMode(N, j, h, 1.0 / np.sqrt(mode.radial_norm_sq())))
        return EigenBasis(kappa, lam, len(prims), N, tuple(prims), (1.0,) * len(prims),
                          labels=tuple(f"degree={l} radial_index={n} axis={h}" for h in hs))
    raise ConfigurationError(f"unsupported domain {domain!r}")
