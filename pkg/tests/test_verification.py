import warnings

import numpy as np
import pytest

from bnlab.ansatz import build_ansatz
from bnlab.bubble import BubbleParams, dimension_constants, nonlinearity
from bnlab.domain.quadrature import axisymmetric_ball_rule
from bnlab.errors import CapabilityError, NumericalError
from bnlab.verification import (ConstantEstimates, MultiplierReport, ResidualReport, _fields, candidate_constants,
                                extract_multipliers, predicted_multipliers, rate_fit, residual_norm, residual_sweep)


# rate fits

def test_rate_fit_power_exact():
    eps = np.geomspace(0.1, 0.001, 9)
    fit = rate_fit(eps, eps**1.75)
    assert fit.value == pytest.approx(1.75, abs=1e-6)
    assert fit.contains(1.75)


def test_rate_fit_exponential_exact():
    eps = np.linspace(0.2, 1.0, 7)
    fit = rate_fit(eps, 3.0 * np.exp(-2 / eps), model="exponential")
    assert fit.value == pytest.approx(2.0, abs=1e-9)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-9)


def test_rate_fit_noisy_coverage():
    rng = np.random.default_rng(11)
    eps = np.geomspace(0.1, 0.001, 9)
    hits = 0
    trials = 200
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(trials):
            y = eps**1.75 * (1 + 0.05 * rng.normal(size=eps.size))
            hits += rate_fit(eps, y, stderr=0.05 * eps**1.75).contains(1.75)
    assert hits / trials > 0.88


def test_rate_fit_warns_on_non_monotone():
    eps = np.geomspace(0.1, 0.001, 5)
    y = eps**1.75
    y[2] *= 100
    with pytest.warns(RuntimeWarning, match="not monotone"):
        fit = rate_fit(eps, y, stderr=0.01 * y)
    assert fit.warnings
    with pytest.raises(NumericalError):
        rate_fit(eps[:2], y[:2])
    with pytest.raises(ValueError):
        rate_fit(eps, y, model="cubic")


# residual norms

@pytest.fixture(scope="module")
def ans5(reduced5, const5, ball5):
    sol, rb = reduced5
    return build_ansatz(sol, rb, ball5, 0.1, const5)


def test_residual_norm_zero(ans5):
    p = ans5.replace(tau=0.0, s=np.zeros(0), xi=np.zeros((0, 5)), beta=np.zeros(0))
    norm, se, _ = residual_norm(p, samples=5000)
    assert norm == 0.0 and se == 0.0


def test_residual_norm_stderr_shrinks(ans5):
    n1, s1, _ = residual_norm(ans5, samples=50_000, seed=1, rel_tol=0.9)
    n2, s2, _ = residual_norm(ans5, samples=100_000, seed=1, rel_tol=0.9)
    assert s1 / s2 == pytest.approx(np.sqrt(2), rel=0.2)
    assert n1 == pytest.approx(n2, rel=4 * s1 / n1)


def test_residual_halving_rate(reduced5, const5, ball5):
    sol, rb = reduced5
    rep = residual_sweep(sol, rb, ball5, const5, [0.1, 0.05], samples=100_000, seed=3, rel_tol=0.02)
    assert rep.eps == [0.1, 0.05]
    ratio = rep.norm[1] / rep.norm[0]
    err = ratio * np.hypot(rep.stderr[0] / rep.norm[0], rep.stderr[1] / rep.norm[1])
    # leading-order rate with an allowance for the o(1) corrections at the top of the grid
    assert abs(ratio - 2 ** -1.75) < 3 * err + 0.1 * 2 ** -1.75
    back = ResidualReport.from_dict(rep.to_dict())
    assert back.rows() == rep.rows()


def test_residual_sweep_deterministic(reduced5, const5, ball5):
    sol, rb = reduced5
    a = residual_sweep(sol, rb, ball5, const5, [0.1, 0.05], samples=20_000, seed=5, rel_tol=0.2)
    b = residual_sweep(sol, rb, ball5, const5, [0.1, 0.05], samples=20_000, seed=5, rel_tol=0.2, workers=2)
    assert a.rows() == b.rows()


# Gram structure

@pytest.mark.parametrize("N", [4, 5])
def test_gram_diagonal_scaling(N):
    from bnlab.domain import DomainSpec

    ball = DomainSpec.create("ball", N)
    q4 = 4 / (N - 2)
    vals = []
    mus = [4e-3, 2e-3, 1e-3]
    for mu in mus:
        b = BubbleParams(mu, (0.0,) * N, 1, N)
        rule = axisymmetric_ball_rule(N, np.zeros(N), 0.02 * mu, n_theta=32, n_rho=20)
        U, _, P0, Pa = _fields(rule.points, b, ball, np.eye(N)[0])
        w = rule.weights
        vals.append([w @ (U**q4 * P0 * P0), w @ (U**q4 * Pa * Pa), abs(w @ (U**q4 * P0 * Pa))])
    vals = np.array(vals)
    slopes = np.polyfit(np.log(mus), np.log(vals[:, :2]), 1)[0]
    np.testing.assert_allclose(slopes, [-2, -2], atol=0.02)
    assert np.all(vals[:, 2] < 1e-6 * vals[:, 0])  # off-diagonal vanishes by symmetry at the centre


def test_psi0_eigen_pairing(ball4, basis4):
    # <P psi^0, e> -> (N-2) alpha / (2 gamma lambda_kappa) e(xi) mu^{(N-4)/2}
    c = dimension_constants(4)
    lam = basis4.lambda_kappa
    mu = 1e-3
    b = BubbleParams(mu, (0.0,) * 4, 1, 4)
    rule = axisymmetric_ball_rule(4, np.zeros(4), 0.02 * mu, n_theta=32, n_rho=20)
    _, _, P0, _ = _fields(rule.points, b, ball4, np.eye(4)[0])
    e = basis4.values(rule.points)[:, 0]
    pred = c.alpha_N / (c.gamma_N * lam) * basis4.values(np.zeros((1, 4)))[0, 0]
    assert rule.weights @ (P0 * e) / pred == pytest.approx(1.0, abs=1e-3)


# multipliers

def test_multipliers_axisymmetric(ans5, const5):
    entry = extract_multipliers(ans5, const5)
    assert entry.scheme == "axisymmetric"
    assert np.isfinite(entry.gram_cond) and entry.gram_cond_scaled < 1e10
    assert len(entry.d) == 1 and np.array(entry.c).shape == (1, 6)
    assert set(entry.predicted) >= {"coefficient", "height", "gradient"}
    back = MultiplierReport.from_dict(MultiplierReport([entry]).to_dict())
    assert back.entries[0].d == entry.d


def test_multipliers_mc_agrees(ans5):
    ax = extract_multipliers(ans5, scheme="axisymmetric")
    mc = extract_multipliers(ans5, scheme="stratified-mc", samples=400_000, seed=2)
    assert mc.d[0] == pytest.approx(ax.d[0], rel=0.1)


def test_multipliers_axisymmetric_capability(ans5, ball5):
    p = ans5.replace(xi=np.array([[0.1, 0, 0, 0, 0], [-0.1, 0, 0, 0, 0]]), s=np.ones(2), beta=np.ones(2) * -1)
    with pytest.raises(CapabilityError):
        extract_multipliers(p, scheme="axisymmetric")


def test_predicted_coefficient_cancels(reduced5, const5, ball5):
    sol, rb = reduced5
    ratios = []
    for eps in (0.01, 0.005, 0.0025):
        p = build_ansatz(sol, rb, ball5, eps, const5, refine=True)
        ratios.append(abs(predicted_multipliers(p, const5)["coefficient"][0]) / (eps * p.tau))
    assert max(ratios) < 1e-8


def test_predicted_detuning_linear(reduced5, const5, ball5):
    sol, rb = reduced5
    p = build_ansatz(sol, rb, ball5, 0.01, const5, refine=True)
    base = predicted_multipliers(p, const5)["coefficient"][0]
    d1 = predicted_multipliers(p.replace(t=p.t * 1.01), const5)["coefficient"][0] - base
    d2 = predicted_multipliers(p.replace(t=p.t * 1.02), const5)["coefficient"][0] - base
    assert d2 / d1 == pytest.approx(2.0, rel=0.05)


# constants

def test_constants_positive_and_stable(const5, const4):
    for c in (const5, const4):
        assert all(v > 0 for v in c.values.values())
        assert c.drift["d1"] < 0.01
        assert c.d1 == pytest.approx(c.candidates["d1"], rel=0.02)
        assert c.c1 == pytest.approx(c.d1 * c.d3 / c.d2)
    back = ConstantEstimates.from_dict(const5.to_dict())
    assert back.values == const5.values


def test_constants_rescale():
    cand = candidate_constants(5, 10.0)
    cand2 = candidate_constants(5, 20.0)
    assert cand2["d2"] == pytest.approx(2 * cand["d2"])
    assert cand2["d1"] == cand["d1"]


def test_constants_need_ball():
    from bnlab.domain import DomainSpec, eigenbasis
    from bnlab.verification import estimate_constants

    box = DomainSpec.create("box", 5)
    with pytest.raises(CapabilityError):
        estimate_constants(box, eigenbasis(box, 1))
