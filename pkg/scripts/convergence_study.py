"""Grid-refinement study on the example: error of X1(T) and of the
second-order supremum on the l01 ray versus the number of steps, with the
observed order of each refinement.

    python scripts/convergence_study.py --T 1 --steps 20 40 80 160 320 --csv conv.csv
"""

import argparse
import csv
import math

import numpy as np
from scipy.integrate import quad

from riemoc.conditions import SecondOrderContext, second_order_sets
from riemoc.dynamics import integrate_first_variation
from riemoc.scenario import builtin_scenario

RAY = np.array([-1.0, 0.0, 0.0, 0.0, 0.0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--steps", type=int, nargs="+", default=[20, 40, 80, 160, 320, 640])
    ap.add_argument("--csv", help="write the table here")
    args = ap.parse_args()

    T = args.T
    x1 = quad(lambda s: math.log1p(s * s) ** 2, 0.0, T, epsabs=1e-14, epsrel=1e-13)[0]
    sup_ref = 2.0 * x1**2
    rows = []
    for N in args.steps:
        sc = builtin_scenario("example-exg", T=T, steps=N)
        pr = sc.problem
        traj = pr.candidate()
        X = integrate_first_variation(pr.system, pr.manifold, traj, sc.v)
        ctx = SecondOrderContext(pr.system, pr.manifold, traj, pr.endpoints, sc.v, X)
        sup = ctx.sup(RAY[None], second_order_sets(pr.control_set, traj, sc.v))[0]
        rows.append({"N": N, "h": traj.h, "X1": X[-1, 0], "err_X1": abs(X[-1, 0] - x1),
                     "sup": sup, "err_sup": abs(sup - sup_ref)})

    def order(a, b, key):
        if a[key] == 0 or b[key] == 0:
            return float("nan")
        return math.log(a[key] / b[key]) / math.log(b["N"] / a["N"])

    print(f"T = {T:g}: X1 = {x1:.15f}, 2 X1^2 = {sup_ref:.15f}")
    print(f"{'N':>6} {'err X1':>10} {'order':>6} {'err sup':>10} {'order':>6}")
    for i, r in enumerate(rows):
        o1 = order(rows[i - 1], r, "err_X1") if i else float("nan")
        o2 = order(rows[i - 1], r, "err_sup") if i else float("nan")
        r["order_X1"], r["order_sup"] = o1, o2
        print(f"{r['N']:>6} {r['err_X1']:>10.2e} {o1:>6.2f} {r['err_sup']:>10.2e} {o2:>6.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
