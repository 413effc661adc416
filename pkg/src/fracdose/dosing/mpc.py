"""Receding-horizon dosing with a state observer and an optional constant-disturbance model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ConvergenceError, FracdoseError, NumericalError
from ..glkernel import AugmentedLtiSystem, discretize_two_comp
from ..pkmodels import TwoCompParams
from .qp import OcpSpec, prediction, qp_from_predictions, solve_qp

__all__ = [
    "OffsetFreeSystem",
    "KalmanObserver",
    "MpcLog",
    "augment_offset_free",
    "plain_system",
    "solve_dare",
    "kalman_observer",
    "observer_update",
    "mpc_run",
]


@dataclass
class OffsetFreeSystem:
    """``z_{k+1} = a z_k + b u_k``, ``y_k = c z_k`` with ``z = (stacked GL state, d)``.

    The disturbance ``d`` enters the newest physical state through ``e`` and
    is constant, ``d_{k+1} = d_k``. With ``n_dist = 0`` this is just the GL
    model with the measurement attached.
    """

    a: sp.csr_matrix
    b: np.ndarray  # (dim,)
    c: np.ndarray  # (dim,)
    n_base: int
    n_dist: int
    channels: tuple = ()

    @property
    def dim(self) -> int:
        return self.n_base + self.n_dist

    def step(self, z, u: float) -> np.ndarray:
        return self.a @ z + self.b * u


def _measure_q1(n: int) -> np.ndarray:
    c = np.zeros(n)
    c[0] = 1.0
    return c


def augment_offset_free(system: AugmentedLtiSystem, channels=(0, 1)) -> OffsetFreeSystem:
    """``[[A_hat, E], [0, I]]`` with input map ``[B_hat; 0]``.

    ``E`` places one disturbance on each listed physical state of the newest
    memory slot; the default ``(0, 1)`` gives dimension ``2 nu + 2``.
    """
    channels = tuple(int(c) for c in channels)
    n, nb = system.state_dim, system.dim
    if any(c < 0 or c >= n for c in channels) or len(set(channels)) != len(channels):
        raise ValueError(f"disturbance channels must be distinct indices below {n}")
    nd = len(channels)
    e = sp.csr_matrix((np.ones(nd), (list(channels), list(range(nd)))), shape=(nb, nd))
    a = sp.bmat([[system.a_hat, e], [None, sp.identity(nd)]], format="csr") if nd else system.a_hat.tocsr()
    b = np.concatenate([system.b_hat[:, 0], np.zeros(nd)])
    return OffsetFreeSystem(a, b, _measure_q1(nb + nd), nb, nd, channels)


def plain_system(system: AugmentedLtiSystem) -> OffsetFreeSystem:
    return augment_offset_free(system, ())


def solve_dare(a, b, q, r, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Stabilising solution of ``X = A'XA - A'XB (R + B'XB)^{-1} B'XA + Q`` by the doubling algorithm."""
    a = np.asarray(a, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = a.shape[0]
    ak = a.copy()
    gk = b @ np.linalg.solve(r, b.T)
    hk = np.asarray(q, dtype=float).copy()
    eye = np.eye(n)
    for _ in range(max_iter):
        w = eye + gk @ hk
        w_ak = np.linalg.solve(w, ak)
        w_gk = np.linalg.solve(w, gk)
        h_new = hk + ak.T @ hk @ w_ak
        gk = gk + ak @ w_gk @ ak.T
        ak = ak @ w_ak
        gk = 0.5 * (gk + gk.T)
        h_new = 0.5 * (h_new + h_new.T)
        diff = np.linalg.norm(h_new - hk, 1)
        hk = h_new
        if not np.all(np.isfinite(hk)):
            raise NumericalError("Riccati doubling iteration diverged")
        if diff <= tol * max(1.0, np.linalg.norm(hk, 1)):
            return hk
    raise ConvergenceError(f"Riccati doubling did not converge in {max_iter} iterations")


@dataclass
class KalmanObserver:
    system: OffsetFreeSystem
    gain: np.ndarray  # (dim,) correction gain
    covariance: np.ndarray = field(repr=False)

    def correct(self, z, y: float) -> np.ndarray:
        return z + self.gain * (y - self.system.c @ z)


def kalman_observer(
    system: OffsetFreeSystem, state_weight: float = 1e-2, dist_weight: float = 1e-2, meas_weight: float = 1e-4
) -> KalmanObserver:
    """Steady-state filter gain for ``system`` measuring ``q1``.

    Process noise weights act on the physical states of the newest memory
    slot and on the disturbance; the shift register itself is exact.
    """
    n = system.dim
    wq = np.zeros(n)
    wq[:2] = state_weight
    wq[system.n_base :] = dist_weight
    a = system.a.toarray()
    p = solve_dare(a.T, system.c[:, None], np.diag(wq), np.array([[meas_weight]]))
    s = float(system.c @ p @ system.c) + meas_weight
    gain = p @ system.c / s
    return KalmanObserver(system, gain, p)


def observer_update(system: OffsetFreeSystem, gain, estimate, measurement: float, u: float) -> np.ndarray:
    """Correct with ``measurement`` then predict one step ahead with input ``u``."""
    z = np.asarray(estimate, dtype=float)
    zf = z + np.asarray(gain) * (measurement - system.c @ z)
    nxt = system.step(zf, u)
    if not np.all(np.isfinite(nxt)):
        raise NumericalError("observer estimate became non-finite")
    return nxt


@dataclass
class MpcLog:
    times: np.ndarray
    u: np.ndarray  # applied rate on each step
    doses: np.ndarray  # decision per dosing instant
    q1_true: np.ndarray
    q2_true: np.ndarray
    q1_est: np.ndarray
    q2_est: np.ndarray
    d_est: np.ndarray
    c: np.ndarray
    flags: list

    def rows(self):
        return zip(self.times, self.u, self.q1_true, self.q2_true, self.q1_est, self.q2_est, self.d_est, self.c)


# steady-state gains are expensive (dense Riccati of size 2 nu); reuse them across runs
_OBSERVERS: dict = {}


def _step_inputs(spec: OcpSpec, dose: float, t_c: float) -> np.ndarray:
    m = spec.steps_per_dose
    u = np.zeros(m)
    if spec.administration == "hold":
        u[:] = dose
    elif spec.administration == "step":
        u[0] = dose
    else:
        u[0] = dose / t_c
    return u


def mpc_run(
    spec: OcpSpec,
    plant: TwoCompParams,
    model: TwoCompParams,
    meas_noise_sd: float = 0.0,
    steps: int | None = None,
    seed: int | None = 0,
    *,
    offset_free: bool = True,
    channels=(0,),
    plant_bias=None,
    window_doses: int | None = None,
    observer_weights=(1e-2, 1e-2, 1e-4),
) -> MpcLog:
    """Closed-loop simulation.

    At every dosing instant the QP over the remaining therapy (or over
    ``window_doses`` doses) is solved from the current estimate, the first
    dose is applied, the plant advances on the fine grid and ``q1`` is
    measured with Gaussian noise. The plant is the GL model of ``plant``
    (plus an optional constant per-step bias on the physical states).
    If a QP fails the previous dose is held and the event is flagged.
    """
    t_c = spec.t_c
    n_total = spec.n_steps if steps is None else int(steps)
    m = spec.steps_per_dose
    nu = spec.memory
    rng = np.random.default_rng(seed)
    psys = discretize_two_comp(plant, t_c, nu)
    msys = discretize_two_comp(model, t_c, nu)
    chans = tuple(channels) if offset_free else ()
    obs_sys = augment_offset_free(msys, chans)
    key = (model.as_tuple(), t_c, nu, chans, tuple(observer_weights))
    observer = _OBSERVERS.get(key)
    if observer is None:
        observer = _OBSERVERS[key] = kalman_observer(obs_sys, *observer_weights)
    p_a, p_b = psys.a_hat, psys.b_hat[:, 0]
    bias = np.zeros(psys.dim)
    if plant_bias is not None:
        bias[:2] = np.broadcast_to(np.asarray(plant_bias, dtype=float), (2,))
    x = psys.stack(spec.x0)
    z = np.zeros(obs_sys.dim)
    z[: msys.dim] = msys.stack(spec.x0)
    _, resp_full = prediction(spec, model)
    ref_full = spec.reference()

    log = {k: np.zeros(n_total + 1) for k in ("u", "q1", "q2", "q1e", "q2e", "d")}
    doses: list[float] = []
    flags: list = []
    u_seq = np.zeros(m)
    last_dose = 0.0
    for k in range(n_total + 1):
        y = x[0] + (rng.normal(0.0, meas_noise_sd) if meas_noise_sd > 0 else 0.0)
        zf = observer.correct(z, y)
        if k < n_total and k % m == 0 and k // m < spec.n_doses:
            j = k // m
            n_rem = spec.n_doses - j if window_doses is None else min(window_doses, spec.n_doses - j)
            horizon = n_rem * m
            free = np.empty((horizon + 1, 2))
            zz = zf.copy()
            free[0] = zz[:2]
            for i in range(horizon):
                zz = obs_sys.a @ zz
                free[i + 1] = zz[:2]
            resp = resp_full[: horizon + 1, :, :n_rem]
            ref = ref_full[k : k + horizon + 1]
            if ref.shape[0] < horizon + 1:
                ref = np.vstack([ref, np.repeat(ref[-1:], horizon + 1 - ref.shape[0], axis=0)])
            try:
                plan = solve_qp(qp_from_predictions(spec, [(free, resp)], [1.0], "all", ref=ref))
                dose = float(plan.doses[0])
                if not plan.converged:
                    flags.append((k, "qp not converged"))
            except (FracdoseError, ValueError, ArithmeticError) as exc:
                dose = last_dose
                flags.append((k, f"qp failed: {exc}"))
            last_dose = dose
            doses.append(dose)
            u_seq = _step_inputs(spec, dose, t_c)
        u = float(u_seq[k % m]) if k < n_total else 0.0
        log["u"][k] = u
        log["q1"][k], log["q2"][k] = x[0], x[1]
        log["q1e"][k], log["q2e"][k] = zf[0], zf[1]
        log["d"][k] = zf[obs_sys.n_base] if obs_sys.n_dist else 0.0
        if k == n_total:
            break
        z = obs_sys.step(zf, u)
        x = p_a @ x + p_b * u + bias
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"plant state non-finite at step {k + 1}")
    times = t_c * np.arange(n_total + 1)
    return MpcLog(
        times,
        log["u"],
        np.asarray(doses),
        log["q1"],
        log["q2"],
        log["q1e"],
        log["q2e"],
        log["d"],
        log["q1"] / plant.v,
        flags,
    )
