"""The eleven acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are printed together at the end
of the pytest session.
"""
import json

import numpy as np
import pytest
from scipy import optimize, special

from bnlab.ansatz import build_ansatz, scaling_laws
from bnlab.bubble import BubbleParams, dimension_constants, eval_projected_bubble, exact_projection_centered
from bnlab.cli import RunManifest, load_manifest, main
from bnlab.config import GridSpec
from bnlab.domain import DomainSpec, eigenbasis
from bnlab.radial import concentration_sweep
from bnlab.reduced import BasisQuadrature, solve_N4, solve_N5_s, solve_N5_t, verify_stationarity
from bnlab.verification import estimate_constants, extract_multipliers, rate_fit, residual_sweep


@pytest.fixture(scope="module")
def box5():
    return DomainSpec.create("box", 5)


def test_c01_euler_identity(box5, acceptance):
    worst_euler, worst_eig = 0.0, -np.inf
    for kappa, m in ((1, 1), (2, 1), (2, 2)):
        ts = solve_N5_t(eigenbasis(box5, kappa), m, box5)
        worst_euler = max(worst_euler, ts.euler_residual)
        worst_eig = max(worst_eig, float(np.max(ts.hessian_eigs)))
    ok = worst_euler <= 1e-6 and worst_eig < 0
    acceptance(1, "Euler identity", f"max rel residual {worst_euler:.2e} (<= 1e-6), max Hessian eig {worst_eig:.3g} (< 0)",
               ok)
    assert ok


def test_c02_m1_closed_form(box5, acceptance):
    b = eigenbasis(box5, 1)
    ts = solve_N5_t(b, 1, box5)
    # e_1 = c prod sin(x_i) on (0, pi)^5; exact norms from the Wallis integrals
    c = float(b.values(np.full((1, 5), np.pi / 2))[0, 0])
    l2 = c**2 * (np.pi / 2) ** 5
    lp = abs(c) ** (10 / 3) * (np.sqrt(np.pi) * special.gamma(13 / 6) / special.gamma(8 / 3)) ** 5
    closed = (l2 / lp) ** 0.75
    rel = abs(ts.t0[0] / closed - 1)
    ok = rel <= 1e-6
    acceptance(2, "m=1 closed form", f"t0 {ts.t0[0]:.10f} vs {closed:.10f}, rel {rel:.1e} (<= 1e-6)", ok)
    assert ok


def _independent_height_max(a, rng):
    """Maximise H(nu) = sum a^2 nu^2 / 2 - (sum a nu^3)^2 / 6 over nu > 0 from a random start."""
    negH = lambda v: -(np.sum(a * a * v * v) / 2 - np.sum(a * v**3) ** 2 / 6)
    res = optimize.minimize(negH, rng.uniform(0.2, 1.5, a.size), method="L-BFGS-B",
                            bounds=[(1e-9, None)] * a.size, options={"ftol": 1e-15, "gtol": 1e-13})
    v = res.x
    for _ in range(30):  # Newton polish on the stationarity equations
        S = np.sum(a * v**3)
        g = a * a * v - S * a * v * v
        J = np.diag(a * a - 2 * S * a * v) - 3 * np.outer(a * v * v, a * v * v)
        v = v - np.linalg.solve(J, g)
    return v * v


def test_c03_n5_height_solution(acceptance):
    rng = np.random.default_rng(2024)
    worst, worst_norm = 0.0, 0.0
    for _ in range(20):
        a = rng.uniform(0.1, 3.0, rng.integers(1, 7))
        closed = a**2 / np.sqrt(np.sum(a**4))
        for s in (_independent_height_max(a, rng), solve_N5_s(a)):
            worst = max(worst, float(np.max(np.abs(s - closed))))
            worst_norm = max(worst_norm, abs(float(np.sum(s * s)) - 1))
    ok = worst <= 1e-8 and worst_norm <= 1e-10
    acceptance(3, "N=5 height solution", f"max |s - closed| {worst:.1e} (<= 1e-8), |sum s^2 - 1| {worst_norm:.1e} (<= 1e-10)",
               ok)
    assert ok


def test_c04_n4_decoupling(ball4, basis4, const4, acceptance):
    box4 = DomainSpec.create("box", 4)
    worst_h, worst_A = 0.0, 0.0
    cases = [(ball4, basis4, 1, 1), (box4, eigenbasis(box4, 1), 1, 1), (box4, eigenbasis(box4, 2).truncate(1), 2, 1)]
    for dom, b, k, m in cases:
        sol, rb = solve_N4(dom, b, k, m, 0.1, multistarts=32, c1=const4.c1)
        assert np.allclose(sol.s0, sol.a)
        worst_h = max(worst_h, verify_stationarity(sol, rb, 4)["height"])
        A0 = const4.d1 * const4.d3 * sol.L0**2 / (const4.d2 * np.sum(sol.s0**2) * sol.G_l2_sq)
        eps = 0.5
        _, mu = scaling_laws(4, eps, sol, const4)
        worst_A = max(worst_A, abs(sol.A0 / A0 - 1), abs(eps * -np.log(mu) / A0 - 1))
    ok = worst_h <= 1e-10 and worst_A <= 1e-10
    acceptance(4, "N=4 decoupling", f"height residual {worst_h:.1e} (<= 1e-10), A0 mismatch {worst_A:.1e} (<= 1e-10)", ok)
    assert ok


@pytest.mark.slow
def test_c05_residual_rate_n5(reduced5, const5, ball5, acceptance):
    sol, rb = reduced5
    rep = residual_sweep(sol, rb, ball5, const5, GridSpec("geom", (0.1, 0.001, 9)).eps(), samples=200_000, seed=0,
                         rel_tol=0.05, workers=4)
    worst = max(se / n for se, n in zip(rep.stderr, rep.norm))
    slope = rep.fit.value
    ok = abs(slope - 1.75) <= 0.15 and worst <= 0.05
    acceptance(5, "residual rate N=5", f"slope {slope:.4f} (1.75 +- 0.15), max rel stderr {worst:.3f} (<= 0.05)", ok)
    assert ok


@pytest.mark.slow
def test_c06_residual_rate_n4(reduced4, const4, ball4, acceptance):
    sol, rb = reduced4
    eps = GridSpec("mu", (1e-2, 1e-6, 7)).eps(sol.A0)
    rep = residual_sweep(sol, rb, ball4, const4, eps, samples=200_000, seed=0, rel_tol=0.05, workers=4)
    mus = np.array(rep.mu)
    assert mus.max() <= 1e-2 * 1.0001 and mus.min() >= 1e-6 / 1.0001
    rel = abs(rep.fit.value / sol.A0 - 1)
    ok = rel <= 0.15
    acceptance(6, "residual rate N=4", f"A {rep.fit.value:.4f} vs A0 {sol.A0:.4f}, rel {rel:.3f} (<= 0.15)", ok)
    assert ok


@pytest.mark.slow
def test_c07_multiplier_annihilation(reduced5, const5, ball5, acceptance):
    sol, rb = reduced5
    D = np.asarray(rb.l2_norms_sq)
    ratios, entries = [], []
    for i in range(5):
        p = build_ansatz(sol, rb, ball5, 0.1 / 2**i, const5, refine=True)
        e = extract_multipliers(p, const5)
        entries.append(e)
        ratios.append(float(np.max(e.d_ratio(D))))
    gains = [a / b for a, b in zip(ratios, ratios[1:])]
    base = np.linalg.norm(entries[-1].d)
    shift = np.zeros_like(p.xi)
    shift[:, 0] = 0.1
    det_t = np.linalg.norm(extract_multipliers(p.replace(t=p.t * 1.1), const5).d) / base
    det_xi = np.linalg.norm(extract_multipliers(p.replace(xi=p.xi + shift), const5).d) / base
    ok = min(gains) >= 2 and det_t >= 10 and det_xi >= 10
    acceptance(7, "multiplier annihilation",
               f"min gain/halving {min(gains):.2f} (>= 2), detune t {det_t:.3g}x xi {det_xi:.3g}x (>= 10)", ok)
    assert ok


def test_c08_projected_bubble_defect(acceptance):
    rows = []
    for N in (4, 5):
        ball = DomainSpec.create("ball", N)
        r = np.linspace(1e-4, 0.99, 60)
        x = np.zeros((r.size, N))
        x[:, 0] = r
        ratios = []
        for mu in (1e-2, 5e-3, 2.5e-3):
            exact = exact_projection_centered(r, mu, N)
            approx = eval_projected_bubble(x, BubbleParams(mu, (0.0,) * N, 1, N), ball)
            ratios.append(np.max(np.abs(exact - approx)) / mu ** ((N + 2) / 2))
        rows.append(max(ratios) / min(ratios))
    ok = max(rows) <= 2
    acceptance(8, "projected-bubble defect", f"max/min ratio N=4 {rows[0]:.5f}, N=5 {rows[1]:.5f} (<= 2)", ok)
    assert ok


@pytest.mark.slow
def test_c09_constant_stability(acceptance):
    parts, ok = [], True
    for N in (4, 5):
        ball = DomainSpec.create("ball", N)
        est = estimate_constants(ball, eigenbasis(ball, 1), strict=False)
        drift = max(est.drift.values())
        route = abs(est.d1 / est.candidates["d1"] - 1)
        ok &= drift < 0.01 and route <= 0.02
        parts.append(f"N={N} drift {drift:.1e} d1 route {route:.1e}")
    acceptance(9, "constant stability", "; ".join(parts) + " (< 1e-2, <= 2e-2)", ok)
    assert ok


@pytest.mark.slow
def test_c10_radial_oracle(acceptance):
    tab = concentration_sweep(5, GridSpec("geom", (0.1, 0.001, 9)).eps(), workers=4)
    s_neg, s_mu = tab.slopes["max_neg_inf"], tab.slopes["mu_est"]
    dist = [r["profile_distance"] for r in tab.rows]
    mono = all(b < a for a, b in zip(dist, dist[1:]))
    ok = abs(s_neg - 0.75) <= 0.10 and abs(s_mu - 1.5) <= 0.2 and mono
    acceptance(10, "radial oracle",
               f"|u-| slope {s_neg:.3f} (0.75 +- 0.1), mu slope {s_mu:.3f} (1.5 +- 0.2), distance monotone {mono} "
               f"({dist[0]:.3g} -> {dist[-1]:.3g}), points without a branch {len(tab.failed)}", ok)
    assert ok


def test_c11_determinism_roundtrip(tmp_path, acceptance):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("domain = ball\nN = 5\nstages = eigens, reduce, residual-sweep, shoot\n"
                   "eps_grid = list 0.1 0.05 0.025\nsamples = 20000\nrel_tol = 0.2\n"
                   "shoot_eps_grid = list 0.02 0.01 0.005\nseed = 3\n")
    root = tmp_path / "runs"
    codes = [main(["run", str(cfg), "--output-root", str(root)]) for _ in range(2)]
    a, b = sorted(root.iterdir())
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = csvs == sorted(p.name for p in b.glob("*.csv")) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in csvs)
    man = load_manifest(a)
    text = man.to_json()
    roundtrip = RunManifest.from_json(text) == man and RunManifest.from_json(text).to_json() == text
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("timings"), mb.pop("timings")
    ok = same and roundtrip and ma == mb and len(csvs) >= 4
    acceptance(11, "determinism and round-trip",
               f"{len(csvs)} CSVs bit-identical {same}, manifests equal {ma == mb}, round-trip {roundtrip}, exit codes {codes}",
               ok)
    assert ok
