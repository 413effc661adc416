"""Time-domain solvers for fractional initial value problems.

All solvers treat Caputo problems ``D^gamma x = f(t, x)``, ``x(0) = x0`` with
``0 < gamma <= 1``:

* :func:`abmpc_solve`, the Adams-Bashforth-Moulton predictor-corrector
  (product rectangle predictor, product trapezoidal corrector);
* :func:`flmm_trapezoidal_solve`, a convolution quadrature built from the
  trapezoidal generating function raised to ``gamma`` plus starting weights;
* :func:`linear_fde_closed_form`, the matrix Mittag-Leffler series for
  linear commensurate systems.

:func:`expand_commensurate` rewrites the two-compartment model as a chain of
equations of common order ``1/q`` so that these solvers apply.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad
from scipy.signal import fftconvolve
from scipy.special import gammaln

from ._conv import HistoryConvolution
from .errors import ConvergenceError, NumericalError
from .pkmodels import (
    ConstantInput,
    ImpulseTrain,
    PiecewiseConstantInput,
    PowerLawInput,
    TwoCompParams,
    ZeroInput,
)
from .specialfn import gamma_real

__all__ = [
    "CommensurateSystem",
    "FivpProblem",
    "Trajectory",
    "ClosedFormResult",
    "expand_commensurate",
    "linear_problem",
    "abmpc_solve",
    "flmm_trapezoidal_solve",
    "flmm_weights",
    "linear_fde_closed_form",
    "simulate_two_comp",
    "SOLVERS",
]

SMALL_GAMMA = 0.1
GAP_WARN = 0.02
FIXED_POINT_MAX_ITER = 50
FIXED_POINT_RTOL = 1e-12


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if gamma < SMALL_GAMMA:
        warnings.warn(
            f"commensurate order {gamma:g} < {SMALL_GAMMA}: such small orders tend to give poor results",
            RuntimeWarning,
            stacklevel=3,
        )


# --------------------------------------------------------------------------
# Problems and results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CommensurateSystem:
    """Linear system ``D^gamma x = a x + b u`` of common order ``gamma``.

    For the two-compartment expansion ``x[0]`` is ``q1`` and ``x[q]`` is
    ``q2``; the other states are intermediate fractional derivatives.
    """

    a: np.ndarray
    b: np.ndarray
    x0: np.ndarray
    gamma: float
    p: int = 0
    q: int = 1

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        d = a.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(d, -1)
        x0 = np.asarray(self.x0, dtype=float).reshape(d)
        if a.shape != (d, d):
            raise ValueError("a must be square")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x0", x0)

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def effective_alpha(self) -> float:
        """The ``alpha`` actually represented, ``1 - p/q``."""
        return 1.0 - self.p / self.q


@dataclass(frozen=True)
class FivpProblem:
    """``D^gamma x = rhs(t, x)``, ``x(0) = x0`` on ``[0, t_end]`` with step ``h``.

    ``jac`` is optional: a constant matrix or a callable ``jac(t, x)``. When
    present the implicit solves use Newton's method.
    """

    rhs: Callable
    gamma: float
    x0: np.ndarray
    t_end: float
    h: float
    jac: object = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.t_end >= self.h:
            raise ValueError("t_end must be at least h")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.h))


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray  # (steps + 1, d)

    def at(self, t) -> np.ndarray:
        """Linear interpolation of every state component at ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.interp(t, self.times, s) for s in self.states.T], axis=-1)


def _rate_fn(u):
    if u is None or isinstance(u, ZeroInput):
        return None
    if isinstance(u, ImpulseTrain):
        raise ValueError("impulse inputs have no rate; use the GL simulator or the closed form")
    if hasattr(u, "rate"):
        return lambda t: float(u.rate(t))
    if callable(u):
        return u
    c = float(u)
    return lambda t: c


def linear_problem(system: CommensurateSystem, u=None, t_end: float = 1.0, h: float = 1e-3) -> FivpProblem:
    """Wrap ``D^gamma x = a x + b u(t)`` as a :class:`FivpProblem` with constant Jacobian."""
    a = system.a
    bcol = system.b[:, 0]
    rate = _rate_fn(u)
    if rate is None:
        rhs = lambda t, x: a @ x  # noqa: E731
    else:
        rhs = lambda t, x: a @ x + bcol * rate(t)  # noqa: E731
    return FivpProblem(rhs, system.gamma, system.x0, t_end, h, jac=a)


# --------------------------------------------------------------------------
# Commensurate expansion
# --------------------------------------------------------------------------


def expand_commensurate(params: TwoCompParams, q_denom: int) -> CommensurateSystem:
    """Chain form of the two-compartment model with ``gamma = 1/q``.

    ``1 - alpha`` is replaced by ``p/q`` with ``p = round((1 - alpha) q)``.
    States ``x_0..x_{q-1}`` are ``D^{i gamma} q1`` and ``x_q..x_{2q-1}`` are
    ``D^{i gamma} q2``; the last state of each chain carries the physical
    equation, with ``D^{1-alpha} q2`` read off as ``x_{q+p}``.
    """
    q = int(q_denom)
    if q < 1:
        raise ValueError("q_denom must be at least 1")
    target = 1.0 - params.alpha
    p = int(round(target * q))
    if p >= q:
        raise ValueError(f"1 - alpha = {target:g} rounds to p = q = {q}; use a larger q_denom")
    gap = abs(target - p / q)
    if gap > GAP_WARN:
        warnings.warn(
            f"p/q = {p}/{q} approximates 1 - alpha = {target:.4f} only to {gap:.3f}",
            RuntimeWarning,
            stacklevel=2,
        )
    d = 2 * q
    a = np.zeros((d, d))
    for i in range(q - 1):
        a[i, i + 1] = 1.0
        a[q + i, q + i + 1] = 1.0
    k_out = params.k10 + params.k12
    a[q - 1, 0] += -k_out
    a[q - 1, q + p] += params.k21f
    a[d - 1, 0] += params.k12
    a[d - 1, q + p] += -params.k21f
    b = np.zeros((d, 1))
    b[q - 1, 0] = 1.0
    x0 = np.zeros(d)
    x0[0] = params.q10
    return CommensurateSystem(a, b, x0, 1.0 / q, p, q)


# --------------------------------------------------------------------------
# ABM predictor-corrector
# --------------------------------------------------------------------------


def _finite_or_raise(x, n, h):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite state at step {n} (t={n * h:g})")


def abmpc_solve(problem: FivpProblem) -> Trajectory:
    """Adams-Bashforth-Moulton predictor-corrector on a uniform grid.

    Predictor weights ``b_{j,n+1} = (h^g/g)((n+1-j)^g - (n-j)^g)``, corrector
    weights ``a_{j,n+1}`` of the product trapezoidal rule; the predictor is
    anchored at the Taylor polynomial evaluated at ``t_{n+1}`` (``x0`` for
    ``gamma <= 1``). Error is ``O(h^{1+gamma})`` for smooth data.
    """
    g = problem.gamma
    _check_gamma(g)
    h, n_steps = problem.h, problem.steps
    x0 = problem.x0
    d = x0.size
    m = np.arange(n_steps + 1, dtype=float)
    bw = (m + 1.0) ** g - m**g
    aw = (m + 2.0) ** (g + 1) + m ** (g + 1) - 2.0 * (m + 1.0) ** (g + 1)
    c_p = h**g / gamma_real(g + 1.0)
    c_c = h**g / gamma_real(g + 2.0)
    conv_b = HistoryConvolution(bw, d, n_steps)
    conv_a = HistoryConvolution(aw, d, n_steps)
    xs = np.empty((n_steps + 1, d))
    xs[0] = x0
    f0 = np.asarray(problem.rhs(0.0, x0), dtype=float)
    fn = f0
    for n in range(n_steps):
        conv_b.set(n, fn)
        conv_a.set(n, fn)
        t1 = (n + 1) * h
        pred = x0 + c_p * conv_b.lag_sum(n)
        # the j = 0 corrector weight differs from the interior (Toeplitz) form
        a0 = n ** (g + 1) - (n - g) * (n + 1.0) ** g
        hist = conv_a.lag_sum(n) + (a0 - aw[n]) * f0
        x1 = x0 + c_c * (np.asarray(problem.rhs(t1, pred), dtype=float) + hist)
        _finite_or_raise(x1, n + 1, h)
        xs[n + 1] = x1
        fn = np.asarray(problem.rhs(t1, x1), dtype=float)
    return Trajectory(h * m, xs)


# --------------------------------------------------------------------------
# Trapezoidal FLMM (convolution quadrature)
# --------------------------------------------------------------------------


def flmm_weights(gamma: float, n: int) -> np.ndarray:
    """Coefficients ``omega_0..omega_n`` of ``((1 + z) / (2 (1 - z)))^gamma``.

    Product of the binomial series of ``(1+z)^gamma`` and ``(1-z)^{-gamma}``,
    both generated by their two-term recurrences.
    """
    k = np.arange(1, n + 1, dtype=float)
    a = np.empty(n + 1)
    b = np.empty(n + 1)
    a[0] = b[0] = 1.0
    if n:
        a[1:] = np.cumprod((gamma - k + 1.0) / k)
        b[1:] = np.cumprod((gamma + k - 1.0) / k)
    if n < 2048:
        w = np.convolve(a, b)[: n + 1]
    else:
        w = fftconvolve(a, b)[: n + 1]
    return w * 2.0**-gamma


def _starting_weights(gamma: float, omega: np.ndarray, s: int) -> np.ndarray:
    """``w[n, j]``, ``j = 0..s``, making the quadrature exact on ``t^{k gamma}``, ``k = 0..s``."""
    n_max = omega.size - 1
    nu = gamma * np.arange(s + 1)
    j = np.arange(s + 1, dtype=float)
    with np.errstate(divide="ignore"):
        vmat = np.where(j[None, :] == 0, (nu[:, None] == 0).astype(float), j[None, :] ** nu[:, None])
    nn = np.arange(n_max + 1, dtype=float)
    rhs = np.empty((s + 1, n_max + 1))
    for k, v in enumerate(nu):
        mono = nn**v if v > 0 else np.ones_like(nn)
        exact = math.exp(gammaln(v + 1.0) - gammaln(v + 1.0 + gamma)) * nn ** (v + gamma)
        conv = fftconvolve(omega, mono)[: n_max + 1] if n_max > 2048 else np.convolve(omega, mono)[: n_max + 1]
        rhs[k] = exact - conv
    return np.linalg.solve(vmat, rhs).T  # (n_max + 1, s + 1)


def _jac_at(problem: FivpProblem, t, x):
    jac = problem.jac
    if jac is None:
        return None
    if callable(jac):
        return np.atleast_2d(np.asarray(jac(t, x), dtype=float))
    return np.atleast_2d(np.asarray(jac, dtype=float))


def _implicit_step(problem, t, rhs_vec, c, x_guess, lu=None):
    """Solve ``x - c f(t, x) = rhs_vec``."""
    f = problem.rhs
    x = x_guess.copy()
    d = x.size
    if problem.jac is not None:
        for _ in range(FIXED_POINT_MAX_ITER):
            r = x - c * np.asarray(f(t, x), dtype=float) - rhs_vec
            if lu is not None:
                dx = sla.lu_solve(lu, r)
            else:
                dx = np.linalg.solve(np.eye(d) - c * _jac_at(problem, t, x), r)
            x = x - dx
            if np.linalg.norm(dx) <= FIXED_POINT_RTOL * max(np.linalg.norm(x), 1e-300):
                return x
        raise ConvergenceError(f"Newton iteration did not converge at t={t:g}")
    for _ in range(FIXED_POINT_MAX_ITER):
        x_new = rhs_vec + c * np.asarray(f(t, x), dtype=float)
        if np.linalg.norm(x_new - x) <= FIXED_POINT_RTOL * max(np.linalg.norm(x_new), 1e-300):
            return x_new
        x = x_new
    raise ConvergenceError(f"fixed-point iteration exceeded {FIXED_POINT_MAX_ITER} iterations at t={t:g}")


def flmm_trapezoidal_solve(problem: FivpProblem, starting_terms: int | None = None) -> Trajectory:
    """Fractional trapezoidal rule as a convolution quadrature.

    ``x_n = x0 + h^g (sum_{j<=n} omega_{n-j} f_j + sum_{j<=s} w_{n,j} f_j)``.
    The first ``s`` unknowns are solved as one coupled system; afterwards each
    step is a single implicit solve. ``starting_terms`` defaults to
    ``ceil(1/gamma)``.
    """
    g = problem.gamma
    _check_gamma(g)
    s = int(math.ceil(1.0 / g - 1e-12)) if starting_terms is None else int(starting_terms)
    if s < 0:
        raise ValueError("starting_terms must be non-negative")
    h, n_steps = problem.h, problem.steps
    s = min(s, n_steps)
    x0 = problem.x0
    d = x0.size
    hg = h**g
    omega = flmm_weights(g, n_steps)
    wst = _starting_weights(g, omega, s)
    times = h * np.arange(n_steps + 1)
    xs = np.empty((n_steps + 1, d))
    xs[0] = x0
    fs = np.empty((n_steps + 1, d))
    fs[0] = problem.rhs(0.0, x0)

    # coupled starting block x_1..x_s
    if s > 0:
        mcoef = np.zeros((s, s + 1))
        for n in range(1, s + 1):
            mcoef[n - 1, : n + 1] += omega[n::-1]
            mcoef[n - 1] += wst[n]
        xblk = np.tile(x0, (s, 1))
        for it in range(FIXED_POINT_MAX_ITER):
            fblk = np.array([problem.rhs(times[n], xblk[n - 1]) for n in range(1, s + 1)])
            fall = np.vstack([fs[:1], fblk])
            resid = xblk - x0 - hg * (mcoef @ fall)
            if problem.jac is not None:
                big = np.eye(s * d)
                for n in range(s):
                    for j in range(1, s + 1):
                        if mcoef[n, j]:
                            jj = _jac_at(problem, times[j], xblk[j - 1])
                            big[n * d : (n + 1) * d, (j - 1) * d : j * d] -= hg * mcoef[n, j] * jj
                step = np.linalg.solve(big, resid.ravel()).reshape(s, d)
            else:
                step = resid
            xblk = xblk - step
            if np.linalg.norm(step) <= FIXED_POINT_RTOL * max(np.linalg.norm(xblk), 1e-300):
                break
        else:
            raise ConvergenceError("starting block did not converge")
        xs[1 : s + 1] = xblk
        for n in range(1, s + 1):
            fs[n] = problem.rhs(times[n], xs[n])

    conv = HistoryConvolution(omega, d, n_steps)
    for j in range(s + 1):
        conv.set(j, fs[j])
    c = hg * omega[0]
    lu = None
    if problem.jac is not None and not callable(problem.jac):
        lu = sla.lu_factor(np.eye(d) - c * _jac_at(problem, 0.0, x0))
    for n in range(s + 1, n_steps + 1):
        known = x0 + hg * (conv.lag_sum(n, min_lag=1) + wst[n] @ fs[: s + 1])
        xn = _implicit_step(problem, times[n], known, c, xs[n - 1], lu)
        _finite_or_raise(xn, n, h)
        xs[n] = xn
        fs[n] = problem.rhs(times[n], xn)
        conv.set(n, fs[n])
    return Trajectory(times, xs)


# --------------------------------------------------------------------------
# Matrix Mittag-Leffler closed form
# --------------------------------------------------------------------------


class ClosedFormResult(NamedTuple):
    x: np.ndarray
    tail_estimate: float
    terms_used: int
    cancellation: float  # largest term norm times eps over |x|


def _rl_integral(u, a: float, t: float) -> float:
    """Riemann-Liouville integral of order ``a`` of the input at ``t``: ``int (t-s)^{a-1} u(s) ds / Gamma(a)``."""
    if u is None or isinstance(u, ZeroInput) or t <= 0.0:
        return 0.0
    if isinstance(u, ConstantInput):
        return u.value * math.exp(a * math.log(t) - gammaln(a + 1.0))
    if isinstance(u, PowerLawInput):
        e = u.exponent
        return u.k * math.exp(gammaln(e + 1.0) + (a + e) * math.log(t) - gammaln(a + e + 1.0))
    if isinstance(u, PiecewiseConstantInput):
        tb = np.asarray(u.times, dtype=float)
        v = np.asarray(u.values, dtype=float)
        lag = np.clip(t - tb, 0.0, None) ** a
        return float(np.sum(v * (lag[:-1] - lag[1:]))) / math.exp(gammaln(a + 1.0))
    if isinstance(u, ImpulseTrain):
        ts, amt = u.impulses()
        sel = ts < t
        if not np.any(sel):
            return 0.0
        return float(np.sum(amt[sel] * (t - ts[sel]) ** (a - 1.0))) / math.exp(gammaln(a))
    rate = _rate_fn(u)
    # substitute s = t - r^(1/a) to remove the endpoint singularity
    val, _ = quad(lambda r: rate(t - r ** (1.0 / a)), 0.0, t**a, limit=200)
    return val / (a * math.exp(gammaln(a)))


def linear_fde_closed_form(
    system: CommensurateSystem, u=None, t: float = 1.0, k_max: int = 2000, tol: float = 1e-10
) -> ClosedFormResult:
    """``x(t) = E_g(A t^g) x0 + sum_k A^k B (I^{(k+1)g} u)(t)``.

    The series is summed until a window of ``2 d`` consecutive terms is
    negligible or ``k_max`` terms are used. The tail is estimated from the
    last terms and the spectral radius of ``A``; a warning is issued if it
    exceeds ``tol`` (relative), and another if cancellation among large
    terms has destroyed more than half of the significant digits.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    a, g = system.a, system.gamma
    x0 = system.x0
    bcol = system.b[:, 0]
    if t == 0.0:
        return ClosedFormResult(x0.copy(), 0.0, 0, 0.0)
    d = system.d
    lt = math.log(t)
    has_u = not (u is None or isinstance(u, ZeroInput))
    v = x0.copy()
    w = bcol.copy() if has_u else None
    total = np.zeros(d)
    biggest = 0.0
    window = 2 * d
    small_run = 0
    k = 0
    recent: list[float] = []
    while k < k_max:
        coef = math.exp(k * g * lt - gammaln(k * g + 1.0))
        term = coef * v
        if has_u:
            term = term + _rl_integral(u, (k + 1) * g, t) * w
            w = a @ w
        nrm = float(np.linalg.norm(term))
        total += term
        biggest = max(biggest, nrm)
        recent.append(nrm)
        scale = max(np.linalg.norm(total), 1e-300)
        small_run = small_run + 1 if nrm <= 1e-17 * scale else 0
        k += 1
        if small_run >= window or not np.all(np.isfinite(total)):
            break
        v = a @ v
    if not np.all(np.isfinite(total)):
        raise NumericalError("matrix Mittag-Leffler series overflowed")
    # tail: continue the largest of the last terms with the spectral radius of A
    rho = float(np.max(np.abs(np.linalg.eigvals(a)))) if d else 0.0
    last = max(recent[-window:]) if recent else 0.0
    tail = 0.0
    if last > 0 and rho > 0:
        base = gammaln(k * g + 1.0)
        for j in range(1, 200):
            inc = last * math.exp(j * (math.log(rho) + g * lt) + base - gammaln((k + j) * g + 1.0))
            tail += inc
            if inc < 1e-20 * max(tail, 1e-300):
                break
    xnorm = max(float(np.linalg.norm(total)), 1e-300)
    # a wrecked sum can itself be huge, so also measure against the initial state
    ref = min(xnorm, float(np.linalg.norm(x0))) if np.any(x0) else xnorm
    canc = biggest * np.finfo(float).eps / max(ref, 1e-300)
    if tail > tol * xnorm:
        warnings.warn(
            f"closed-form series truncated at {k} terms with tail estimate {tail:.2e}", RuntimeWarning, stacklevel=2
        )
    if canc > 1e-8:
        warnings.warn(
            f"closed-form series suffers cancellation (relative error ~ {canc:.1e})", RuntimeWarning, stacklevel=2
        )
    return ClosedFormResult(total, tail, k, canc)


# --------------------------------------------------------------------------
# Two-compartment convenience dispatcher
# --------------------------------------------------------------------------

SOLVERS = ("gl", "abmpc", "flmm", "closed_form", "series", "nilt")


def simulate_two_comp(
    params: TwoCompParams,
    times,
    solver: str = "gl",
    *,
    u=None,
    h: float | None = None,
    q_denom: int = 5,
    nu: int | None = None,
    tol: float = 1e-12,
):
    """``(q1, q2)`` of the two-compartment model at ``times`` with the chosen solver.

    Defaults: ``gl`` uses ``t_c = 1e-3`` with a 5-day memory; ``abmpc`` and
    ``flmm`` use ``h = 1e-3`` on the ``gamma = 1/q_denom`` expansion;
    ``closed_form`` uses the same expansion; ``series`` and ``nilt`` are
    evaluated pointwise (free response only for ``series``).
    """
    from . import glkernel, laplace, pkmodels

    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    t_end = float(times.max())
    if solver == "gl":
        t_c = 1e-3 if h is None else h
        steps = max(1, int(math.ceil(t_end / t_c - 1e-9)))
        system = glkernel.discretize_two_comp(params, t_c, nu)
        urates = None if u is None else _step_rates(u, t_c, steps)
        tr = glkernel.simulate_gl(system, [params.q10, 0.0], urates, steps)
        return np.interp(times, tr.times, tr.q1), np.interp(times, tr.times, tr.q2)
    if solver in ("abmpc", "flmm"):
        sysm = expand_commensurate(params, q_denom)
        step = 1e-3 if h is None else h
        horizon = step * max(1, int(math.ceil(t_end / step - 1e-9)))
        prob = linear_problem(sysm, u, horizon, step)
        tr = abmpc_solve(prob) if solver == "abmpc" else flmm_trapezoidal_solve(prob)
        q = sysm.q
        return np.interp(times, tr.times, tr.states[:, 0]), np.interp(times, tr.times, tr.states[:, q])
    if solver == "closed_form":
        sysm = expand_commensurate(params, q_denom)
        out = np.array([linear_fde_closed_form(sysm, u, float(t), tol=tol).x for t in times])
        return out[:, 0], out[:, sysm.q]
    if solver == "series":
        if u is not None and not isinstance(u, ZeroInput):
            raise ValueError("the series solution covers the free response only")
        res = [pkmodels.two_comp_series(params, float(t)) for t in times]
        return np.array([r.q1 for r in res]), np.array([r.q2 for r in res])
    if solver == "nilt":
        if u is not None and not isinstance(u, ZeroInput):
            raise ValueError("the NILT route covers the free response only")
        f1, f2 = pkmodels.two_comp_transfer(params)
        pos = times > 0
        q1 = np.full(times.shape, params.q10)
        q2 = np.zeros(times.shape)
        if np.any(pos):
            q1[pos] = laplace.nilt(f1, times[pos], tol=tol)
            q2[pos] = laplace.nilt(f2, times[pos], tol=tol)
        return q1, q2
    raise ValueError(f"unknown solver {solver!r}; choose one of {', '.join(SOLVERS)}")


def _step_rates(u, t_c: float, steps: int) -> np.ndarray:
    if hasattr(u, "step_rates"):
        return u.step_rates(t_c, steps)
    return np.asarray(u, dtype=float)
