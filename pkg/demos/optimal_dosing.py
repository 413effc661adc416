"""Optimal dosing on the GL model of the amiodarone patient.

Seven days of doses every 12 hours, states bounded by 0.5, tracking q2 = 0.35.
Compares the individual plan, a minimax plan over a +-20% parameter box and a
sample-average plan over 20 sampled patients, then closes the loop with MPC.
"""

import numpy as np

from fracdose.dosing import (
    OcpSpec,
    box_vertices,
    mpc_run,
    plan_individual,
    plan_minimax,
    plan_stochastic,
    population_costs,
    sample_population,
    worst_case_cost,
)
from fracdose.pkmodels import AMIODARONE, TwoCompParams


def main():
    spec = OcpSpec()
    nominal = plan_individual(spec, AMIODARONE)
    print("Individual plan (dose rate per 12 h interval):")
    print("  " + " ".join(f"{u:.3f}" for u in nominal.doses))
    print(f"  objective {nominal.objective:.4f}, KKT residual {nominal.kkt_residual:.1e}")

    box = {}
    for k in ("k10", "k12", "k21f", "alpha"):
        v = getattr(AMIODARONE, k)
        box[k] = (0.8 * v, min(1.2 * v, 1.0) if k == "alpha" else 1.2 * v)
    vertices = [TwoCompParams(*v) for v in box_vertices(box)]
    robust = plan_minimax(spec, box)
    print("\nWorst vertex cost over the +-20% box:")
    print(f"  nominal plan {worst_case_cost(spec, vertices, nominal.doses):.4f}")
    print(f"  minimax plan {worst_case_cost(spec, vertices, robust.doses):.4f}")

    train = sample_population(AMIODARONE, 0.2, 20, seed=1)
    test = sample_population(AMIODARONE, 0.2, 100, seed=2)
    saa = plan_stochastic(spec, train)
    print("\nMean cost on 100 new patients:")
    print(f"  nominal plan {population_costs(spec, test, nominal.doses).mean():.4f}")
    print(f"  SAA plan     {population_costs(spec, test, saa.doses).mean():.4f}")

    plant = AMIODARONE.with_(k10=1.2 * AMIODARONE.k10)
    ref = spec.reference()[-1, 1]
    print("\nMPC with the plant eliminating 20% faster than the model:")
    for flag in (False, True):
        log = mpc_run(spec, plant, AMIODARONE, 0.0, offset_free=flag)
        print(f"  offset-free={flag!s:5}  final q2={log.q2_true[-1]:.5f}  error={abs(log.q2_true[-1] - ref):.2e}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
