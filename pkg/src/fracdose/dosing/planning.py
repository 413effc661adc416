"""Dosing plans for uncertain parameters: minimax over a box and sample average over a population."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..pkmodels import TwoCompParams
from .qp import DosingPlan, OcpSpec, build_qp_multi, evaluate_cost, solve_qp

__all__ = [
    "PopulationSample",
    "box_vertices",
    "plan_minimax",
    "plan_stochastic",
    "sample_population",
    "population_costs",
    "worst_case_cost",
]

PARAM_NAMES = ("k10", "k12", "k21f", "alpha")


@dataclass(frozen=True)
class PopulationSample:
    """``members[i] = (k10, k12, k21f, alpha)``."""

    members: np.ndarray
    seed: int | None
    descriptor: dict

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.members, dtype=float))
        if m.ndim != 2 or m.shape[1] != 4 or m.shape[0] < 1:
            raise ValueError("members must be an (L, 4) array with L >= 1")
        if np.any(m[:, :3] <= 0):
            raise ValueError("all rates must be positive")
        if np.any((m[:, 3] <= 0) | (m[:, 3] > 1)):
            raise ValueError("alpha must lie in (0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    def __len__(self) -> int:
        return self.members.shape[0]

    def models(self) -> list[TwoCompParams]:
        return [TwoCompParams(*row) for row in self.members]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FRACDOSE_THREADS", "1")))
    except ValueError:
        return 1


def sample_population(nominal: TwoCompParams, cv: float = 0.2, l: int = 20, seed: int | None = 0) -> PopulationSample:
    """Random patients around ``nominal``.

    Rates are lognormal with mean equal to the nominal value and coefficient
    of variation ``cv``. ``alpha`` is logit-normal about the nominal order with
    a spread giving roughly the same coefficient of variation, clipped to
    ``[0.05, 1]``; a nominal ``alpha = 1`` is kept fixed.
    """
    if cv < 0:
        raise ValueError("cv must be non-negative")
    if int(l) < 1:
        raise ValueError("l must be at least 1")
    l = int(l)
    rng = np.random.default_rng(seed)
    rates = np.array([nominal.k10, nominal.k12, nominal.k21f])
    if np.any(rates <= 0):
        raise ValueError("nominal rates must be positive for lognormal sampling")
    s2 = math.log1p(cv**2)
    z = rng.standard_normal((l, 4))
    members = np.empty((l, 4))
    members[:, :3] = rates * np.exp(math.sqrt(s2) * z[:, :3] - 0.5 * s2)
    a = nominal.alpha
    if a >= 1.0 or cv == 0:
        members[:, 3] = a
    else:
        spread = cv / (1.0 - a)
        logit = math.log(a / (1.0 - a)) + spread * z[:, 3]
        members[:, 3] = np.clip(1.0 / (1.0 + np.exp(-logit)), 0.05, 1.0)
    desc = {"law": "lognormal rates, logit-normal alpha", "cv": cv, "nominal": list(nominal.as_tuple())}
    return PopulationSample(members, seed, desc)


def box_vertices(param_box) -> list[tuple[float, float, float, float]]:
    """All ``2^4`` corners of ``{name: (lo, hi)}`` (or a 4x2 array) in ``(k10, k12, k21f, alpha)`` order."""
    if isinstance(param_box, dict):
        rows = [param_box[k] for k in PARAM_NAMES]
    else:
        rows = list(param_box)
    if len(rows) != 4:
        raise ValueError("the parameter box needs four intervals")
    iv = [(float(lo), float(hi)) for lo, hi in rows]
    for (lo, hi), name in zip(iv, PARAM_NAMES):
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"invalid interval for {name}: [{lo}, {hi}]")
    return [tuple(v) for v in itertools.product(*iv)]


def worst_case_cost(spec: OcpSpec, models, doses) -> float:
    return max(evaluate_cost(spec, m, doses) for m in models)


def plan_minimax(
    spec: OcpSpec,
    param_box,
    *,
    max_iter: int = 200,
    step: float = 1.0,
    tol: float = 1e-6,
) -> DosingPlan:
    """Minimise the largest cost over the box vertices.

    Dual ascent on the vertex weights: for weights ``w`` on the simplex the
    QP of ``sum_v w_v J_v`` is solved, and ``w`` is updated multiplicatively
    towards the vertices with the largest cost. Because each ``J_v`` is a
    convex quadratic the saddle point of this Lagrangian is the minimax plan.
    State bounds are imposed on every vertex model. The best plan seen (by
    worst-vertex cost) is returned.
    """
    verts = box_vertices(param_box)
    uniq = sorted(set(verts))
    models = [TwoCompParams(*v) for v in uniq]
    w = np.full(len(models), 1.0 / len(models))
    best = None
    best_val = math.inf
    for it in range(max_iter):
        plan = solve_qp(build_qp_multi(spec, models, w, "all"), tol)
        costs = np.array([evaluate_cost(spec, m, plan.doses) for m in models])
        worst = float(costs.max())
        if worst < best_val - 1e-15:
            best, best_val = plan, worst
        dual = float(w @ costs)
        # duality gap: max cost minus the weighted average certified by the QP
        if worst - dual <= tol * max(1.0, abs(worst)):
            break
        scale = max(float(costs.max() - costs.min()), 1e-300)
        w = w * np.exp(step * (costs - costs.max()) / scale * math.log(len(models) + 1.0))
        w /= w.sum()
        step = max(step * 0.97, 0.05)
    best.objective = best_val
    best.iterations = it + 1
    return best


def plan_stochastic(spec: OcpSpec, sample: PopulationSample, tol: float = 1e-6) -> DosingPlan:
    """Sample-average plan ``min (1/L) sum_i J_i(u)`` with the state box on every member."""
    models = sample.models()
    return solve_qp(build_qp_multi(spec, models, None, "all"), tol)


def population_costs(spec: OcpSpec, sample: PopulationSample, doses) -> np.ndarray:
    """Cost of one dose sequence on every member (parallel over ``FRACDOSE_THREADS``)."""
    models = sample.models()
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            return np.array(list(ex.map(lambda m: evaluate_cost(spec, m, doses), models)))
    return np.array([evaluate_cost(spec, m, doses) for m in models])
