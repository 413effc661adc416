"""Dosing optimisation on the finite-memory GL model."""

from .mpc import (
    KalmanObserver,
    MpcLog,
    OffsetFreeSystem,
    augment_offset_free,
    kalman_observer,
    mpc_run,
    observer_update,
    solve_dare,
)
from .planning import (
    PopulationSample,
    box_vertices,
    plan_minimax,
    plan_stochastic,
    population_costs,
    sample_population,
    worst_case_cost,
)
from .qp import (
    CondensedQp,
    DosingPlan,
    OcpSpec,
    build_qp,
    build_qp_multi,
    cost_tracking_energy,
    cost_window,
    evaluate_cost,
    kkt_residuals,
    plan_individual,
    prediction,
    qp_from_predictions,
    solve_qp,
)

__all__ = [
    "CondensedQp",
    "DosingPlan",
    "KalmanObserver",
    "MpcLog",
    "OcpSpec",
    "OffsetFreeSystem",
    "PopulationSample",
    "augment_offset_free",
    "box_vertices",
    "build_qp",
    "build_qp_multi",
    "cost_tracking_energy",
    "cost_window",
    "evaluate_cost",
    "kalman_observer",
    "kkt_residuals",
    "mpc_run",
    "observer_update",
    "plan_individual",
    "plan_minimax",
    "plan_stochastic",
    "population_costs",
    "prediction",
    "qp_from_predictions",
    "sample_population",
    "solve_dare",
    "solve_qp",
    "worst_case_cost",
]
