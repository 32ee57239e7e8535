"""Coefficient multipliers at the reduced solution against detuned parameters (N=5 ball)."""
import numpy as np

from bnlab.ansatz import build_ansatz
from bnlab.domain import UnitBall, eigenbasis
from bnlab.reduced import solve_N5
from bnlab.verification import estimate_constants, extract_multipliers


def main(eps0=0.1, halvings=4):
    ball = UnitBall(5)
    basis = eigenbasis(ball, 1)
    const = estimate_constants(ball, basis)
    sol, rb = solve_N5(ball, basis, 1, 1, c1=const.c1)
    D = np.asarray(rb.l2_norms_sq)
    prev = None
    for i in range(halvings + 1):
        eps = eps0 / 2**i
        p = build_ansatz(sol, rb, ball, eps, const, refine=True)
        e = extract_multipliers(p, const)
        r = float(np.max(e.d_ratio(D)))
        gain = "" if prev is None else f"  gain {prev / r:.2f}"
        print(f"eps {eps:.5f}  |d|/(eps tau |e|^2) = {r:.4e}  cond {e.gram_cond_scaled:.3g}{gain}")
        prev = r
    base = np.linalg.norm(e.d)
    shift = np.zeros_like(p.xi)
    shift[:, 0] = 0.1
    for label, q in (("t x 1.1", p.replace(t=p.t * 1.1)), ("xi + 0.1", p.replace(xi=p.xi + shift))):
        print(f"detune {label}: |d| grows {np.linalg.norm(extract_multipliers(q, const).d) / base:.3g}x")


if __name__ == "__main__":
    main()
