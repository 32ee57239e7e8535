import numpy as np
import pytest

from bnlab.ansatz import (AnsatzParams, assemble, build_ansatz, kirchhoff_routh, lambda_side, pointwise_residual,
                          refine_parameters, scaling_laws)
from bnlab.bubble import BubbleParams, dimension_constants, eval_projected_bubble, nonlinearity
from bnlab.domain import DomainSpec, eigenbasis
from bnlab.errors import ConfigurationError, RangeError, SingularityError

EPS5 = np.geomspace(0.1, 0.001, 9)


def test_lambda_side():
    assert lambda_side(4) == 1 and lambda_side(5) == -1


def test_n5_scaling_slopes(reduced5, const5):
    sol, _ = reduced5
    tm = np.array([scaling_laws(5, e, sol, const5) for e in EPS5])
    st, _ = np.polyfit(np.log(EPS5), np.log(tm[:, 0]), 1)
    sm, _ = np.polyfit(np.log(EPS5), np.log(tm[:, 1]), 1)
    assert st == pytest.approx(0.75, abs=1e-12)
    assert sm == pytest.approx(1.5, abs=1e-12)


def test_n4_scaling_exponent(reduced4, const4):
    sol, _ = reduced4
    grid = np.linspace(0.2, 2.0, 7)
    tm = np.array([scaling_laws(4, e, sol, const4) for e in grid])
    A = grid * np.log(1 / tm[:, 1])
    np.testing.assert_allclose(A, A[0], rtol=1e-12)
    c = const4
    A0 = c.d1 * c.d3 * sol.L0**2 / (c.d2 * np.sum(sol.s0**2) * sol.G_l2_sq)
    np.testing.assert_allclose(A, A0, rtol=1e-12)
    ratio = tm[:, 1] / (grid * tm[:, 0])
    np.testing.assert_allclose(ratio, sol.G_l2_sq / (c.d1 * abs(sol.L0)), rtol=1e-12)


def test_n4_underflow_names_window(reduced4, const4):
    sol, _ = reduced4
    with pytest.raises(RangeError, match="usable window"):
        scaling_laws(4, 1e-3, sol, const4)
    with pytest.raises(ConfigurationError):
        scaling_laws(4, -1.0, sol, const4)


@pytest.fixture(scope="module")
def ansatz5(reduced5, const5, ball5):
    sol, rb = reduced5
    return build_ansatz(sol, rb, ball5, 0.05, const5)


def test_params_invariants(ansatz5):
    p = ansatz5
    np.testing.assert_allclose(p.tau_i, p.t * p.tau)
    np.testing.assert_allclose(p.mu_j, p.s * p.mu)
    assert p.lam < p.basis.lambda_kappa
    with pytest.raises(ConfigurationError, match="wrong side"):
        p.replace(lam=p.basis.lambda_kappa + p.eps)
    d = p.to_dict()
    assert d["lambda"] == p.lam and d["mu_j"] == p.mu_j.tolist()


def test_assemble_center_and_far(ansatz5):
    p = ansatz5
    c = dimension_constants(5)
    center = assemble(p.xi, p)[0]
    lead = p.beta[0] * c.alpha_N * p.mu_j[0] ** -1.5
    assert center / lead == pytest.approx(1.0, abs=1e-3)
    x = np.array([[0.6, 0.3, 0.0, 0.0, 0.0]])
    bubble_part = assemble(x, p)[0] - (p.basis.values(x) @ p.tau_i)[0]
    assert abs(bubble_part) <= 2 * c.alpha_N * p.mu ** 1.5 / np.linalg.norm(x) ** 3
    with pytest.raises(ValueError):
        assemble(np.array([[1.5, 0, 0, 0, 0]]), p)


def test_sign_at_sites(ansatz5):
    p = ansatz5
    assert np.all(np.sign(assemble(p.xi, p)) == p.beta)


def test_assemble_pure_bubble(ansatz5, rng):
    p = ansatz5.replace(tau=0.0, beta=np.array([1.0]))
    x = rng.uniform(-0.5, 0.5, (10, 5))
    b = BubbleParams(float(p.mu_j[0]), tuple(p.xi[0]), 1, 5)
    np.testing.assert_allclose(assemble(x, p), eval_projected_bubble(x, b, p.domain), rtol=1e-14)


def _laplacian(f, x, h):
    # fourth-order stencil, h may vary per point
    N = x.shape[1]
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(x),))
    lap = -30 * f(x) * N
    for i in range(N):
        e = np.zeros((len(x), N))
        e[:, i] = h
        lap = lap + 16 * (f(x + e) + f(x - e)) - (f(x + 2 * e) + f(x - 2 * e))
    return lap / (12 * h * h)


def test_residual_matches_finite_differences(reduced5, const5, ball5):
    sol, rb = reduced5
    p = build_ansatz(sol, rb, ball5, 0.1, const5)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(20, 5))
    x *= rng.uniform(0.05, 0.8, (20, 1)) / np.linalg.norm(x, axis=1, keepdims=True)
    f = lambda y: assemble(y, p)
    Z = f(x)
    fd = -_laplacian(f, x, 5e-3 * np.linalg.norm(x - p.xi[0], axis=1)) - p.lam * Z - nonlinearity(Z, 5)
    R = pointwise_residual(x, p)
    scale = np.abs(p.lam * Z) + np.abs(nonlinearity(Z, 5))
    assert np.max(np.abs(fd - R) / scale) < 1e-4


def test_residual_vanishes_away_from_sites(reduced5, const5, ball5):
    sol, rb = reduced5
    x = np.array([[0.5, 0.2, 0.1, 0.0, 0.0]])
    vals = [abs(pointwise_residual(x, build_ansatz(sol, rb, ball5, e, const5))[0]) for e in (0.1, 0.01, 0.001)]
    assert vals[0] > vals[1] > vals[2]


def test_single_bubble_residual_order(reduced5, const5, ball5):
    sol, rb = reduced5
    p0 = build_ansatz(sol, rb, ball5, 0.01, const5).replace(tau=0.0)
    x = np.array([[0.4, 0.3, 0.0, 0.0, 0.0]])
    ratios = []
    for mu in (1e-3, 1e-4, 1e-5):
        p = p0.replace(mu=mu)
        ratios.append(abs(pointwise_residual(x, p)[0]) / mu**1.5)
    assert max(ratios) / min(ratios) < 1.1


def test_refinement_stays_close(reduced5, const5, ball5):
    sol, rb = reduced5
    p = build_ansatz(sol, rb, ball5, 0.01, const5)
    q = refine_parameters(p, const5)
    assert q.refined
    assert 0.5 < q.t[0] / p.t[0] < 2 and 0.5 < q.s[0] / p.s[0] < 2


def test_kirchhoff_routh_examples(rng):
    ball4 = DomainSpec.create("ball", 4)
    assert kirchhoff_routh([1.0], np.zeros((1, 4)), 0.0, ball4) == pytest.approx(0.5)
    x = np.array([[0.2, 0.1, 0.0, 0.0]])
    assert kirchhoff_routh([0.3], x, 0.0, ball4) == pytest.approx(0.5 * ball4.regular_part(x[0], x[0]) * 0.09)
    pts = rng.uniform(-0.4, 0.4, (3, 4))
    mu = np.array([0.1, 0.2, 0.3])
    perm = [2, 0, 1]
    assert kirchhoff_routh(mu, pts, 1.5, ball4) == pytest.approx(kirchhoff_routh(mu[perm], pts[perm], 1.5, ball4),
                                                                 rel=1e-12)
    with pytest.raises(SingularityError):
        kirchhoff_routh([0.1, 0.2], np.zeros((2, 4)), 0.0, ball4)
