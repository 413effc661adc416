"""Accumulation under fractional elimination and regimens that avoid it.

With alpha = 0.5 a constant infusion never reaches steady state, while a power-law
infusion k01 t^(alpha-1) settles at Gamma(alpha) k01/k10f. For repeated doses, the
same effect is countered by decreasing doses or by stretching the dosing intervals.
"""

import math

import numpy as np

from fracdose.glkernel import discretize, simulate_gl
from fracdose.pkmodels import dose_amounts, dose_times, one_comp_infusion, one_comp_powerlaw_infusion


def post_dose_amounts(times, amounts, alpha=0.5, h=0.01):
    steps = int(round((times[-1] + 1.0) / h)) + 1
    sys_ = discretize([[0.0]], [[-1.0]], [[1.0]], 1.0 - alpha, h, steps + 1)
    u = np.zeros(steps)
    idx = np.rint(np.asarray(times) / h).astype(int)
    np.add.at(u, idx, np.asarray(amounts) / h)
    return simulate_gl(sys_, [0.0], u, steps).states[idx + 1, 0]


def main():
    print("Infusion with k01 = k10f = 1, alpha = 0.5")
    print(f"{'t':>8} {'constant rate':>15} {'power-law rate':>15}")
    for t in (1.0, 10.0, 100.0, 1000.0, 10000.0):
        print(f"{t:8g} {one_comp_infusion(1, 1, 0.5, t):15.4f} {one_comp_powerlaw_infusion(1, 1, 0.5, t):15.5f}")
    print(f"power-law steady state sqrt(pi) = {math.sqrt(math.pi):.5f}")

    n = 40
    grid = np.arange(n, dtype=float)
    regimens = {
        "uniform": (grid, np.ones(n)),
        "decreasing doses": (grid, dose_amounts(1.0, 0.5, n)),
        "stretched intervals": (np.concatenate([[1.0], dose_times(1.0, 1.0, 0.5, n - 1)]), np.ones(n)),
    }
    print("\nAmount just after doses 10, 20, 30, 40 (one compartment, alpha = 0.5)")
    for name, (times, amounts) in regimens.items():
        q = post_dose_amounts(times, amounts)
        print(f"{name:>20}: " + " ".join(f"{q[i]:.3f}" for i in (9, 19, 29, 39)))


if __name__ == "__main__":
    main()
