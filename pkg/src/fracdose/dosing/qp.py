"""Condensed dosing QP on the finite-memory GL model.

The decision vector is the dose sequence ``u_0..u_{Nd-1}``. States are
eliminated through the (linear, time-invariant) prediction
``x_k = x_free,k + sum_j G_{k,j} u_j``, so the problem becomes

    min  1/2 u'Hu + g'u + c   s.t.   C u >= d

with the dose box and the state box among the rows of ``C``. It is solved by
a primal-dual interior point method followed by an active-set polish, and
the KKT conditions are re-verified from scratch with non-negative least
squares multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import nnls

from ..errors import InfeasibleError
from ..glkernel import default_memory, discretize_two_comp, simulate_gl
from ..pkmodels import TwoCompParams

__all__ = [
    "OcpSpec",
    "CondensedQp",
    "DosingPlan",
    "DEMO_Q2_REFERENCE",
    "prediction",
    "build_qp",
    "build_qp_multi",
    "qp_from_predictions",
    "solve_qp",
    "kkt_residuals",
    "plan_individual",
    "evaluate_cost",
    "cost_tracking_energy",
    "cost_window",
]

# demo set-point on q2, below the 0.5 bound
DEMO_Q2_REFERENCE = 0.35
ADMINISTRATION = ("hold", "step", "bolus")


@dataclass(frozen=True)
class OcpSpec:
    """Finite-horizon dosing problem.

    ``administration`` fixes how dose ``u_j`` enters the GL model: ``"hold"``
    applies the rate ``u_j`` on every step of ``[j t_d, (j+1) t_d)``,
    ``"step"`` applies it on the single step starting at ``j t_d``, and
    ``"bolus"`` adds the amount ``u_j`` to ``q1`` at ``j t_d``.
    """

    n_days: float = 7.0
    t_c: float = 0.01
    t_d: float = 0.5
    x_max: float = 0.5
    u_max: float = 0.5
    q_weights: tuple[float, float] = (0.0, 1.0)
    x_ref: object = None
    beta_u: float = 0.0
    nu: int | None = None
    x0: tuple[float, float] = (0.0, 0.0)
    administration: str = "hold"

    def __post_init__(self):
        if not (self.t_c > 0 and self.t_d > 0 and self.n_days > 0):
            raise ValueError("t_c, t_d and n_days must be positive")
        ratio = self.t_d / self.t_c
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("t_d must be an integer multiple of t_c")
        horizon = self.n_days / self.t_d
        if abs(horizon - round(horizon)) > 1e-9 * max(1.0, horizon):
            raise ValueError("n_days must be an integer multiple of t_d")
        if not (self.x_max > 0 and self.u_max > 0):
            raise ValueError("bounds must be positive")
        if len(self.q_weights) != 2 or min(self.q_weights) < 0:
            raise ValueError("q_weights must be two non-negative numbers")
        if self.beta_u < 0:
            raise ValueError("beta_u must be non-negative")
        if self.administration not in ADMINISTRATION:
            raise ValueError(f"administration must be one of {ADMINISTRATION}")
        object.__setattr__(self, "q_weights", tuple(float(q) for q in self.q_weights))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def steps_per_dose(self) -> int:
        return int(round(self.t_d / self.t_c))

    @property
    def n_doses(self) -> int:
        return int(round(self.n_days / self.t_d))

    @property
    def n_steps(self) -> int:
        return self.n_doses * self.steps_per_dose

    @property
    def memory(self) -> int:
        return default_memory(self.t_c) if self.nu is None else int(self.nu)

    @property
    def times(self) -> np.ndarray:
        return self.t_c * np.arange(self.n_steps + 1)

    @property
    def dose_times(self) -> np.ndarray:
        return self.t_d * np.arange(self.n_doses)

    def reference(self) -> np.ndarray:
        """Reference trajectory of shape ``(n_steps + 1, 2)``."""
        n = self.n_steps + 1
        if self.x_ref is None:
            ref = np.zeros((n, 2))
            ref[:, 1] = DEMO_Q2_REFERENCE
            return ref
        r = np.asarray(self.x_ref, dtype=float)
        if r.ndim == 0:
            out = np.zeros((n, 2))
            out[:, 1] = float(r)
            return out
        return np.broadcast_to(r, (n, 2)).astype(float).copy()

    def with_(self, **changes) -> "OcpSpec":
        from dataclasses import replace

        return replace(self, **changes)


@lru_cache(maxsize=256)
def _prediction_cached(params: tuple, t_c: float, nu: int, steps: int, m: int, n_doses: int, admin: str, x0: tuple):
    k10, k12, k21f, alpha = params
    model = TwoCompParams(k10, k12, k21f, alpha)
    system = discretize_two_comp(model, t_c, nu)
    free = simulate_gl(system, x0, None, steps).states
    u = np.zeros(steps)
    if admin == "hold":
        u[:m] = 1.0
    elif admin == "step":
        u[0] = 1.0
    else:
        u[0] = 1.0 / t_c
    unit = simulate_gl(system, (0.0, 0.0), u, steps).states
    resp = np.zeros((steps + 1, 2, n_doses))
    for j in range(n_doses):
        s = j * m
        resp[s:, :, j] = unit[: steps + 1 - s]
    free.setflags(write=False)
    resp.setflags(write=False)
    return free, resp


def prediction(spec: OcpSpec, model: TwoCompParams, x0=None):
    """Free response ``(N+1, 2)`` and dose response ``(N+1, 2, Nd)`` of the GL model."""
    x0 = spec.x0 if x0 is None else tuple(float(v) for v in x0)
    return _prediction_cached(
        model.as_tuple(), spec.t_c, spec.memory, spec.n_steps, spec.steps_per_dose, spec.n_doses, spec.administration, x0
    )


@dataclass
class CondensedQp:
    """``min 1/2 u'Hu + g'u + const`` s.t. ``C u >= d``."""

    hessian: np.ndarray
    gradient: np.ndarray
    const: float
    c: np.ndarray
    d: np.ndarray
    spec: OcpSpec
    models: tuple
    weights: np.ndarray
    free: list = field(repr=False, default_factory=list)
    response: list = field(repr=False, default_factory=list)

    @property
    def n(self) -> int:
        return self.hessian.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.hessian @ u + self.gradient @ u + self.const)


def _tracking_terms(spec: OcpSpec, free, resp, ref):
    q = np.asarray(spec.q_weights)
    nd = resp.shape[2]
    e0 = (free - ref) * np.sqrt(q)  # (N+1, 2)
    gw = resp * np.sqrt(q)[None, :, None]
    gm = gw.reshape(-1, nd)
    h = 2.0 * (gm.T @ gm + spec.beta_u * np.eye(nd))
    g = 2.0 * gm.T @ e0.ravel()
    c = float(np.sum(e0**2))
    return h, g, c


def _state_rows(spec: OcpSpec, free, resp, u_max):
    """Rows ``x >= 0`` and ``x <= x_max`` for k >= 1, dropping rows the dose box already implies."""
    nd = resp.shape[2]
    gm = resp[1:].reshape(-1, nd)
    f = free[1:].ravel()
    hi = f + np.clip(gm, 0, None).sum(axis=1) * u_max
    lo = f + np.clip(gm, None, 0).sum(axis=1) * u_max
    rows, rhs = [], []
    need_upper = hi > spec.x_max
    need_lower = lo < 0
    if np.any(need_upper):
        rows.append(-gm[need_upper])
        rhs.append(f[need_upper] - spec.x_max)
    if np.any(need_lower):
        rows.append(gm[need_lower])
        rhs.append(-f[need_lower])
    return rows, rhs


def build_qp_multi(spec: OcpSpec, models, weights=None, constrain: str = "all", x0=None) -> CondensedQp:
    """QP for the weighted sum of per-model costs with one shared dose sequence.

    ``constrain="all"`` imposes the state box on every model's prediction,
    ``"first"`` only on the first model.
    """
    models = tuple(models)
    if not models:
        raise ValueError("need at least one model")
    w = np.full(len(models), 1.0 / len(models)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(models),) or np.any(w < 0):
        raise ValueError("weights must be non-negative, one per model")
    x0v = np.asarray(spec.x0 if x0 is None else x0, dtype=float)
    if np.any(x0v < 0) or np.any(x0v > spec.x_max):
        raise InfeasibleError(f"initial state {x0v.tolist()} violates the state bounds [0, {spec.x_max}]")
    preds = [prediction(spec, mdl, x0) for mdl in models]
    return qp_from_predictions(spec, preds, w, constrain, models=models)


def qp_from_predictions(spec: OcpSpec, preds, weights, constrain: str = "all", ref=None, models=()) -> CondensedQp:
    """Assemble the QP from ``(free, response)`` pairs; ``ref`` defaults to ``spec.reference()``."""
    ref = spec.reference() if ref is None else np.asarray(ref, dtype=float)
    w = np.asarray(weights, dtype=float)
    nd = preds[0][1].shape[2]
    h = np.zeros((nd, nd))
    g = np.zeros(nd)
    const = 0.0
    rows = [np.eye(nd), -np.eye(nd)]
    rhs = [np.zeros(nd), -np.full(nd, spec.u_max)]
    frees, resps = [], []
    for i, ((free, resp), wi) in enumerate(zip(preds, w)):
        frees.append(free)
        resps.append(resp)
        hi, gi, ci = _tracking_terms(spec, free, resp, ref)
        h += wi * hi
        g += wi * gi
        const += wi * ci
        if constrain == "all" or i == 0:
            r, d = _state_rows(spec, free, resp, spec.u_max)
            rows += r
            rhs += d
    cmat = np.vstack(rows)
    dvec = np.concatenate(rhs)
    # any row unreachable inside the dose box means no feasible plan
    best = np.clip(cmat, 0, None).sum(axis=1) * spec.u_max
    if np.any(best < dvec - 1e-12):
        raise InfeasibleError("state constraints cannot be met by any admissible dose sequence")
    h = 0.5 * (h + h.T)
    return CondensedQp(h, g, const, cmat, dvec, spec, tuple(models), w, frees, resps)


def build_qp(spec: OcpSpec, model: TwoCompParams, x0=None) -> CondensedQp:
    """Condensed QP for one patient model."""
    return build_qp_multi(spec, (model,), None, "all", x0)


@dataclass
class DosingPlan:
    doses: np.ndarray
    times: np.ndarray
    dose_times: np.ndarray
    trajectory: np.ndarray  # predicted (N+1, 2) for the first model
    objective: float
    kkt_residual: float
    converged: bool
    iterations: int
    kkt: dict = field(default_factory=dict)

    def to_rows(self):
        return [(float(t), float(u)) for t, u in zip(self.dose_times, self.doses)]


def kkt_residuals(qp: CondensedQp, u, active_tol: float = 1e-7) -> dict:
    """Stationarity, primal infeasibility and complementarity at ``u``.

    Multipliers are recomputed by non-negative least squares on the rows whose
    slack is below ``active_tol``, independently of any solver state.
    """
    u = np.asarray(u, dtype=float)
    grad = qp.hessian @ u + qp.gradient
    slack = qp.c @ u - qp.d
    scale = np.linalg.norm(qp.c, axis=1)
    active = slack <= active_tol * np.maximum(scale, 1.0)
    lam = np.zeros(qp.c.shape[0])
    if np.any(active):
        sol, _ = nnls(qp.c[active].T, grad, maxiter=50 * int(active.sum()) + 100)
        lam[active] = sol
    station = float(np.max(np.abs(grad - qp.c.T @ lam))) if u.size else 0.0
    primal = float(max(0.0, -np.min(slack))) if slack.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    return {"stationarity": station, "primal": primal, "complementarity": comp, "multipliers": lam}


def _interior_point(h, g, c, d, tol=1e-10, max_iter=200):
    """Mehrotra predictor-corrector for ``min 1/2 u'Hu + g'u`` s.t. ``Cu >= d``."""
    n, m = h.shape[0], c.shape[0]
    # work on the objective scaled to unit size; the minimiser is unchanged
    scale = max(float(np.max(np.abs(h))), float(np.max(np.abs(g))) if g.size else 0.0, 1e-300)
    h, g = h / scale, g / scale
    u = np.full(n, 0.0)
    # start strictly inside the dose box when possible
    s = np.maximum(c @ u - d, 1.0)
    lam = np.ones(m)
    reg = 1e-12 * max(1.0, np.max(np.abs(h)))
    it = 0
    for it in range(1, max_iter + 1):
        rd = h @ u + g - c.T @ lam
        rp = c @ u - s - d
        mu = float(s @ lam) / m
        if max(np.max(np.abs(rd)), np.max(np.abs(rp)), mu) < tol:
            return u, lam * scale, True, it
        dd = lam / s
        kmat = h + (c.T * dd) @ c + reg * np.eye(n)
        try:
            chol = np.linalg.cholesky(kmat)
        except np.linalg.LinAlgError:
            chol = None

        def solve(rc):
            rhs = -rd + c.T @ ((rc - lam * rp) / s)
            if chol is not None:
                y = np.linalg.solve(chol, rhs)
                du = np.linalg.solve(chol.T, y)
            else:
                du = np.linalg.lstsq(kmat, rhs, rcond=None)[0]
            ds = c @ du + rp
            dl = (rc - lam * ds) / s
            return du, ds, dl

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        du, ds, dl = solve(-s * lam)
        a_aff = min(max_step(s, ds), max_step(lam, dl))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dl)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        du, ds, dl = solve(-s * lam - ds * dl + sigma * mu)
        alpha = 0.995 * min(max_step(s, ds), max_step(lam, dl))
        nu_, ns, nl = u + alpha * du, s + alpha * ds, lam + alpha * dl
        if not (np.all(np.isfinite(nu_)) and np.all(np.isfinite(nl)) and np.all(np.isfinite(ns))):
            break
        u, s, lam = nu_, ns, nl
    return u, lam * scale, False, it


def _polish(h, g, c, d, u, lam, u_max):
    """Solve the equality QP on the detected active set; keep it if it is a KKT point."""
    slack = c @ u - d
    active = np.nonzero(lam > np.maximum(slack, 1e-14))[0]
    n = h.shape[0]
    ca = c[active]
    k = active.size
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = h
    kkt[:n, n:] = -ca.T
    kkt[n:, :n] = ca
    rhs = np.concatenate([-g, d[active]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    up, la = sol[:n], sol[n:]
    if np.any(la < -1e-9):
        return None
    # the first 2n rows are the dose box; active ones hold their bound exactly
    lower = active[active < n]
    upper = active[(active >= n) & (active < 2 * n)] - n
    up[lower] = 0.0
    up[upper] = u_max
    up = np.clip(up, 0.0, u_max)
    if np.min(c @ up - d) < -1e-9:
        return None
    return up


def solve_qp(qp: CondensedQp, tol: float = 1e-6, max_iter: int = 200) -> DosingPlan:
    """Solve the condensed QP; doses are projected onto ``[0, u_max]`` exactly.

    If the interior point iteration cap is reached, the best iterate is
    returned with ``converged=False``.
    """
    spec = qp.spec
    u, lam, ok, it = _interior_point(qp.hessian, qp.gradient, qp.c, qp.d, max_iter=max_iter)
    u = np.clip(u, 0.0, spec.u_max)
    pol = _polish(qp.hessian, qp.gradient, qp.c, qp.d, u, lam, spec.u_max)
    if pol is not None and qp.objective(pol) <= qp.objective(u) + 1e-12 * max(1.0, abs(qp.objective(u))):
        u = pol
    kk = kkt_residuals(qp, u)
    res = max(kk["stationarity"], kk["primal"], kk["complementarity"])
    traj = qp.free[0] + qp.response[0] @ u
    return DosingPlan(
        doses=u,
        times=spec.times,
        dose_times=spec.dose_times,
        trajectory=traj,
        objective=qp.objective(u),
        kkt_residual=res,
        converged=bool(ok and res <= tol),
        iterations=it,
        kkt={k: v for k, v in kk.items() if k != "multipliers"},
    )


def plan_individual(spec: OcpSpec, model: TwoCompParams, tol: float = 1e-6) -> DosingPlan:
    return solve_qp(build_qp(spec, model), tol)


def evaluate_cost(spec: OcpSpec, model: TwoCompParams, doses) -> float:
    """Tracking cost (plus input energy when ``beta_u > 0``) of ``doses`` on ``model``."""
    free, resp = prediction(spec, model)
    traj = free + resp @ np.asarray(doses, dtype=float)
    return cost_tracking_energy(spec, traj, doses)


def cost_tracking_energy(spec: OcpSpec, trajectory, doses) -> float:
    """``sum_k (x_ref,k - x_k)' Q (x_ref,k - x_k) + beta sum_j u_j^2``."""
    x = np.asarray(trajectory, dtype=float)
    e = spec.reference()[: x.shape[0]] - x
    u = np.asarray(doses, dtype=float)
    return float(np.sum(e**2 * np.asarray(spec.q_weights)) + spec.beta_u * np.sum(u**2))


def cost_window(spec: OcpSpec, trajectory, window) -> float:
    """``sum_k dist^2(x_k, [x_lo, x_hi])``, the squared distance of each state to the box."""
    x = np.asarray(trajectory, dtype=float)
    lo, hi = (np.asarray(w, dtype=float) for w in window)
    if np.any(lo > hi):
        raise ValueError("window lower bound exceeds upper bound")
    z = np.clip(x, lo, hi)
    return float(np.sum((x - z) ** 2))

