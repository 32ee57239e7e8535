"""Residual norm decay along an eps grid, printed as a table with the fitted rate.

    python3 scripts/residual_rates.py --N 5 --workers 4
    python3 scripts/residual_rates.py --N 4
"""
import argparse

import numpy as np

from bnlab.config import GridSpec
from bnlab.domain import UnitBall, eigenbasis
from bnlab.reduced import solve_N4, solve_N5
from bnlab.verification import estimate_constants, residual_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=5, choices=(4, 5))
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    ball = UnitBall(args.N)
    basis = eigenbasis(ball, 1)
    const = estimate_constants(ball, basis)
    if args.N == 5:
        sol, rb = solve_N5(ball, basis, 1, 1, c1=const.c1)
        grid = GridSpec("geom", (0.1, 0.001, 9)).eps()
        target = "slope 1.75"
    else:
        sol, rb = solve_N4(ball, basis, 1, 1, 0.1, c1=const.c1)
        grid = GridSpec("mu", (1e-2, 1e-6, 7)).eps(sol.A0)
        target = f"A0 {sol.A0:.4f}"
    rep = residual_sweep(sol, rb, ball, const, grid, samples=args.samples, seed=args.seed, workers=args.workers)
    print(f"{'eps':>12} {'tau':>12} {'mu':>12} {'norm':>12} {'stderr':>10}")
    for eps, tau, mu, norm, se in rep.rows():
        print(f"{eps:12.5g} {tau:12.5g} {mu:12.5g} {norm:12.5g} {se:10.3g}")
    f = rep.fit
    print(f"fit ({f.model}): {f.value:.4f} +- {f.stderr:.4f}, CI {np.round(f.ci, 4).tolist()}; target {target}")


if __name__ == "__main__":
    main()
