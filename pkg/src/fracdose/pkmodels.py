"""Fractional pharmacokinetic models: closed forms, regimens, two-compartment and n-compartment builders.

Units: time in days, integer-order rates in 1/day, a rate attached to a
derivative of order ``1 - alpha`` in ``day^-alpha``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import specialfn as sf
from .errors import MassBalanceError, NumericalError, UnitError
from .glkernel import gl_coefficients
from .laplace import FracTransferFunction

__all__ = [
    "TwoCompParams",
    "AMIODARONE",
    "DoseSchedule",
    "ZeroInput",
    "ConstantInput",
    "PowerLawInput",
    "PiecewiseConstantInput",
    "ImpulseTrain",
    "input_from_dict",
    "zero_order_frac",
    "one_comp_bolus",
    "one_comp_infusion",
    "one_comp_powerlaw_infusion",
    "dose_times",
    "dose_amounts",
    "two_comp_transfer",
    "two_comp_series",
    "SeriesResult",
    "Transfer",
    "Elimination",
    "CompartmentModel",
    "NCompModel",
    "build_ncomp",
    "rl_to_caputo_correction",
    "concentration",
]


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoCompParams:
    """Two-compartment model with fractional peripheral-to-central return.

    Attributes
    ----------
    k10, k12 : float
        Elimination and central-to-peripheral rates [1/day].
    k21f : float
        Fractional return rate [day^-alpha].
    alpha : float
        Order in (0, 1].
    q10 : float
        Initial central amount.
    v : float
        Apparent volume of distribution.
    """

    k10: float
    k12: float
    k21f: float
    alpha: float
    q10: float = 1.0
    v: float = 1.0

    def __post_init__(self):
        for name in ("k10", "k12", "k21f"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0.0):
                raise ValueError(f"{name} must be a non-negative finite rate, got {val!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.v > 0.0:
            raise ValueError("v must be positive")

    def with_(self, **changes) -> "TwoCompParams":
        return replace(self, **changes)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.k10, self.k12, self.k21f, self.alpha)


# Fitted amiodarone values (q0/V = 4.72 ng/ml, V normalised to 1).
AMIODARONE = TwoCompParams(k10=1.49, k12=2.95, k21f=0.48, alpha=0.587, q10=4.72, v=1.0)


# --------------------------------------------------------------------------
# Input signals
# --------------------------------------------------------------------------


class _Input:
    kind = "abstract"

    def cumulative(self, t):
        raise NotImplementedError

    def rate(self, t):
        raise NotImplementedError

    def step_rates(self, t_c: float, steps: int) -> np.ndarray:
        """Average rate on each ``[k t_c, (k+1) t_c)``; impulses land in the step containing them."""
        edges = t_c * np.arange(steps + 1)
        return np.diff(self.cumulative(edges)) / t_c

    def impulses(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([]), np.array([])


@dataclass(frozen=True)
class ZeroInput(_Input):
    kind = "zero"

    def cumulative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def rate(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ConstantInput(_Input):
    value: float
    kind = "constant"

    def cumulative(self, t):
        return self.value * np.asarray(t, dtype=float)

    def rate(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)


@dataclass(frozen=True)
class PowerLawInput(_Input):
    """Rate ``k t^exponent`` (``exponent > -1``)."""

    k: float
    exponent: float
    kind = "power_law"

    def __post_init__(self):
        if not self.exponent > -1.0:
            raise ValueError("exponent must exceed -1 for an integrable rate")

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        return self.k * t ** (self.exponent + 1.0) / (self.exponent + 1.0)

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.k * t**self.exponent


@dataclass(frozen=True)
class PiecewiseConstantInput(_Input):
    """Rate ``values[i]`` on ``[times[i], times[i+1])``; zero before the first and after the last breakpoint."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    kind = "piecewise"

    def __post_init__(self):
        if len(self.times) != len(self.values) + 1:
            raise ValueError("need one more breakpoint than values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        tb = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(v * np.diff(tb))))
        return np.interp(t, tb, cum, left=0.0, right=cum[-1])

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        ok = (idx >= 0) & (idx < len(self.values))
        return np.where(ok, np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)], 0.0)


@dataclass(frozen=True)
class ImpulseTrain(_Input):
    """Bolus doses ``amounts[i]`` at ``times[i]``."""

    times: tuple[float, ...]
    amounts: tuple[float, ...]
    kind = "impulse_train"

    def __post_init__(self):
        if len(self.times) != len(self.amounts):
            raise ValueError("times and amounts must have equal length")

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        ts = np.asarray(self.times, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(self.amounts)))
        # dose at T counts for every cumulative point strictly after T
        return cum[np.searchsorted(ts, t, side="left")]

    def rate(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def impulses(self):
        return np.asarray(self.times, dtype=float), np.asarray(self.amounts, dtype=float)


def input_from_dict(d: dict | None) -> _Input:
    """Build an input signal from its JSON description."""
    if d is None:
        return ZeroInput()
    kind = d.get("kind", "zero")
    if kind == "zero":
        return ZeroInput()
    if kind == "constant":
        return ConstantInput(float(d["value"]))
    if kind == "power_law":
        return PowerLawInput(float(d["k"]), float(d["exponent"]))
    if kind == "piecewise":
        return PiecewiseConstantInput(tuple(d["times"]), tuple(d["values"]))
    if kind == "impulse_train":
        return ImpulseTrain(tuple(d["times"]), tuple(d["amounts"]))
    raise ValueError(f"unknown input kind {kind!r}")


@dataclass(frozen=True)
class DoseSchedule:
    times: tuple[float, ...]
    amounts: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.amounts):
            raise ValueError("times and amounts must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("dose times must be strictly increasing")
        if np.any(np.asarray(self.amounts) <= 0):
            raise ValueError("dose amounts must be positive")

    def as_input(self) -> ImpulseTrain:
        return ImpulseTrain(self.times, self.amounts)


# --------------------------------------------------------------------------
# One-compartment closed forms
# --------------------------------------------------------------------------


def _map_t(fn, t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("t must be non-negative")
    out = np.vectorize(fn, otypes=[float])(arr)
    return float(out) if out.ndim == 0 else out


def zero_order_frac(k0f: float, alpha: float, t):
    """Amount under a zero-order fractional input: ``k0f t^alpha / Gamma(alpha + 1)``."""
    return _map_t(lambda ti: k0f * ti**alpha / sf.gamma_real(alpha + 1.0), t)


def one_comp_bolus(q0: float, k1f: float, alpha: float, t):
    """Bolus decay ``q0 E_alpha(-k1f t^alpha)``."""
    return _map_t(lambda ti: q0 * sf.ml1(alpha, -k1f * ti**alpha).value, t)


def one_comp_infusion(k01: float, k10f: float, alpha: float, t):
    """Constant infusion with fractional elimination: ``k01 t E_{alpha,2}(-k10f t^alpha)``."""
    return _map_t(lambda ti: k01 * ti * sf.ml2(alpha, 2.0, -k10f * ti**alpha).value, t)


def one_comp_powerlaw_infusion(k01: float, k10f: float, alpha: float, t):
    """Power-law infusion ``k01 t^(alpha-1)``: ``k01 Gamma(alpha) t^alpha E_{alpha,alpha+1}(-k10f t^alpha)``.

    Tends to the steady state ``Gamma(alpha) k01 / k10f``.
    """
    g = sf.gamma_real(alpha)
    return _map_t(lambda ti: k01 * g * ti**alpha * sf.ml2(alpha, alpha + 1.0, -k10f * ti**alpha).value, t)


def dose_times(t0: float, dtau: float, alpha: float, n: int) -> np.ndarray:
    """Dose times ``T_1..T_n`` from ``T_i = (T_{i-1}^alpha + alpha dtau^alpha)^(1/alpha)``."""
    if not (t0 > 0 and dtau > 0 and n >= 1):
        raise ValueError("need t0 > 0, dtau > 0 and n >= 1")
    out = np.empty(n)
    prev = float(t0)
    for i in range(n):
        if alpha == 1.0:
            prev = prev + dtau
        else:
            prev = (prev**alpha + alpha * dtau**alpha) ** (1.0 / alpha)
        out[i] = prev
    return out


def dose_amounts(q0: float, alpha: float, n: int) -> np.ndarray:
    """Tapered doses ``q0/alpha ((i+1)^alpha - i^alpha)`` for ``i = 0..n-1``."""
    if not (q0 > 0 and n >= 1):
        raise ValueError("need q0 > 0 and n >= 1")
    if alpha == 1.0:
        return np.full(n, float(q0))
    i = np.arange(n, dtype=float)
    return q0 / alpha * ((i + 1.0) ** alpha - i**alpha)


def rl_to_caputo_correction(q0_i: float, alpha_ij: float, t: float) -> float:
    """Term ``q_i(0) t^(alpha-1) / Gamma(alpha)`` separating RL and Caputo derivatives of order ``1 - alpha``.

    At ``t = 0`` with ``alpha < 1`` and a nonzero initial amount the term is
    singular; ``inf`` is returned with a RuntimeWarning.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if q0_i == 0.0:
        return 0.0
    if t == 0.0:
        if alpha_ij < 1.0:
            warnings.warn("RL-to-Caputo correction is singular at t=0", RuntimeWarning, stacklevel=2)
            return math.copysign(math.inf, q0_i)
        return q0_i / sf.gamma_real(alpha_ij)
    return q0_i * t ** (alpha_ij - 1.0) / sf.gamma_real(alpha_ij)


def concentration(q1, v: float):
    """Blood concentration ``q1 / V``."""
    if not v > 0:
        raise ValueError("volume must be positive")
    return np.asarray(q1, dtype=float) / v if np.ndim(q1) else float(q1) / v


# --------------------------------------------------------------------------
# Two-compartment model
# --------------------------------------------------------------------------


def two_comp_transfer(params: TwoCompParams) -> tuple[FracTransferFunction, FracTransferFunction]:
    """Laplace-domain amounts ``Q1(s), Q2(s)`` after a bolus ``q10`` into the central compartment.

    The common denominator ``(s + k12 + k10)(s^a + k21f) - k12 k21f``
    expands to ``s^(a+1) + (k12+k10) s^a + k21f s + k10 k21f``.
    """
    a = params.alpha
    kk = params.k12 + params.k10
    den = ((1.0, a + 1.0), (kk, a), (params.k21f, 1.0), (params.k10 * params.k21f, 0.0))
    q1 = FracTransferFunction(((params.q10, a), (params.q10 * params.k21f, 0.0)), den, "Q1")
    q2 = FracTransferFunction(((params.q10 * params.k12, a - 1.0),), den, "Q2")
    return q1, q2


class SeriesResult(NamedTuple):
    q1: float
    q2: float
    truncation_estimate: float
    shells_used: int
    diverging: bool


def two_comp_series(params: TwoCompParams, t: float, n_max: int = 60, rtol: float = 1e-13) -> SeriesResult:
    """Double-series solution in three-parameter Mittag-Leffler functions.

    ``q1 = q10 sum_n (-k21f)^n sum_l C(n,l) k10^l [t^{l+an} E^{n+1}_{1,l+an+1}(-Kt)
    + k21f t^{l+a(n+1)} E^{n+1}_{1,l+a(n+1)+1}(-Kt)]`` with ``K = k10 + k12``,
    and ``q2 = q10 k12 sum_n (-k21f)^n sum_l C(n,l) k10^l t^{l+an+1} E^{n+1}_{1,l+an+2}(-Kt)``.

    Summation stops once a shell is below ``rtol`` relative to the running
    sums, or at ``n_max``; the truncation estimate is the magnitude of the
    last shell. If shell magnitudes grow for three consecutive ``n`` and the
    sum then either fails to settle within ``n_max`` shells or loses more
    than six digits to cancellation, a RuntimeWarning is issued and
    ``diverging`` is set.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if t == 0.0:
        return SeriesResult(params.q10, 0.0, 0.0, 0, False)
    a, k10, k21f = params.alpha, params.k10, params.k21f
    z = -(params.k10 + params.k12) * t
    logt = math.log(t)
    s1 = s2 = 0.0
    last = math.inf
    grow = 0
    diverging = False
    prev_mag = None
    peak = 0.0
    converged = False
    used = 0
    for n in range(n_max + 1):
        sh1 = sh2 = 0.0
        for l in range(n + 1):
            if k10 == 0.0 and l > 0:
                break
            w = math.comb(n, l) * (k10**l if l else 1.0)
            b1 = l + a * n + 1.0
            b2 = l + a * (n + 1) + 1.0
            e1 = sf.ml3(sf.MlParams(1.0, b1, n + 1.0), z).value
            e2 = sf.ml3(sf.MlParams(1.0, b2, n + 1.0), z).value
            e3 = sf.ml3(sf.MlParams(1.0, b1 + 1.0, n + 1.0), z).value
            p1 = math.exp((b1 - 1.0) * logt)
            p2 = math.exp((b2 - 1.0) * logt)
            sh1 += w * (p1 * e1 + k21f * p2 * e2)
            sh2 += w * p1 * t * e3
        sign_pow = (-k21f) ** n
        sh1 *= sign_pow
        sh2 *= sign_pow * params.k12
        s1 += sh1
        s2 += sh2
        used = n + 1
        mag = abs(sh1) + abs(sh2)
        last = mag
        peak = max(peak, mag)
        if prev_mag is not None and mag > prev_mag:
            grow += 1
            if grow >= 3:
                diverging = True
        else:
            grow = 0
        prev_mag = mag
        if n >= 2 and mag <= rtol * (abs(s1) + abs(s2)):
            converged = True
            break
    if diverging and converged and peak * 1e-16 <= 1e-6 * (abs(s1) + abs(s2)):
        diverging = False
    if diverging:
        warnings.warn(f"two-compartment series shells grew at t={t:g}; result unreliable", RuntimeWarning, stacklevel=2)
    return SeriesResult(params.q10 * s1, params.q10 * s2, params.q10 * last, used, diverging)


# --------------------------------------------------------------------------
# General n-compartment model
# --------------------------------------------------------------------------


_UNIT_RE = re.compile(r"^\s*(?:1\s*/\s*day(?:\s*\^\s*(?P<p>[0-9.]+))?|day\s*\^\s*-\s*(?P<q>[0-9.]+)|1\s*/\s*d)\s*$")


def _units_order(units: str) -> float:
    m = _UNIT_RE.match(units)
    if not m:
        raise UnitError(f"cannot parse rate units {units!r}; use '1/day' or '1/day^a'")
    p = m.group("p") or m.group("q")
    return float(p) if p else 1.0


@dataclass(frozen=True)
class Transfer:
    """Flux from ``source`` to ``target`` driven by a derivative of order ``1 - order_out`` of q_source.

    ``order_in`` is the order used for the same flux in the target's
    equation; mass balance requires ``order_in == order_out``.
    """

    source: int
    target: int
    rate: float
    order_out: float
    order_in: float | None = None
    units: str | None = None

    @property
    def order(self) -> float:
        return self.order_out


@dataclass(frozen=True)
class Elimination:
    compartment: int
    rate: float
    order: float = 1.0
    units: str | None = None


@dataclass(frozen=True)
class CompartmentModel:
    n: int
    transfers: tuple[Transfer, ...] = ()
    eliminations: tuple[Elimination, ...] = ()
    inputs: tuple = ()
    initial: tuple[float, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CompartmentModel":
        tr = tuple(
            Transfer(
                int(x["source"]),
                int(x["target"]),
                float(x["rate"]),
                float(x["order_out"] if "order_out" in x else x["order"]),
                float(x["order_in"]) if "order_in" in x else None,
                x.get("units"),
            )
            for x in d.get("transfers", [])
        )
        el = tuple(
            Elimination(int(x["compartment"]), float(x["rate"]), float(x.get("order", 1.0)), x.get("units"))
            for x in d.get("eliminations", [])
        )
        ins = tuple(input_from_dict(x) for x in d.get("inputs", []))
        return cls(int(d["n"]), tr, el, ins, tuple(float(v) for v in d.get("initial", [])))

    @classmethod
    def two_comp(cls, p: TwoCompParams) -> "CompartmentModel":
        return cls(
            2,
            (Transfer(0, 1, p.k12, 1.0, 1.0, "1/day"), Transfer(1, 0, p.k21f, p.alpha, p.alpha, f"1/day^{p.alpha}")),
            (Elimination(0, p.k10, 1.0, "1/day"),),
            (),
            (p.q10, 0.0),
        )


@dataclass(frozen=True)
class NCompModel:
    """Validated n-compartment model; ``terms[order]`` is the matrix multiplying ``D^{1-order} q``."""

    n: int
    terms: dict = field(hash=False)
    inputs: tuple
    initial: np.ndarray = field(hash=False)

    def simulate_gl(self, t_c: float, steps: int, nu: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """GL simulation of every compartment; returns ``(times, amounts)`` with shape ``(steps+1, n)``."""
        nu = steps + 1 if nu is None else int(nu)
        rates = np.zeros((steps, self.n))
        for i, sig in enumerate(self.inputs):
            rates[:, i] = sig.step_rates(t_c, steps)
        coeffs = {o: gl_coefficients(1.0 - o, nu - 1).coeffs * t_c**o for o in self.terms}
        xs = np.zeros((steps + 1, self.n))
        xs[0] = self.initial
        for k in range(steps):
            m = min(nu, k + 1)
            hist = xs[k - m + 1 : k + 1][::-1]
            dx = np.zeros(self.n)
            for o, mat in self.terms.items():
                dx += mat @ (coeffs[o][:m] @ hist)
            nxt = xs[k] + dx + t_c * rates[k]
            if not np.all(np.isfinite(nxt)):
                raise NumericalError(f"non-finite state at step {k + 1}")
            xs[k + 1] = nxt
        return t_c * np.arange(steps + 1), xs


def build_ncomp(spec: CompartmentModel) -> NCompModel:
    """Validate an n-compartment specification and assemble its operator matrices.

    Raises
    ------
    MassBalanceError
        If a transfer uses different orders in its source and target equations.
    UnitError
        If a declared units tag implies an order different from the stated one.
    """
    n = int(spec.n)
    if n < 1:
        raise ValueError("need at least one compartment")
    seen = set()
    terms: dict[float, np.ndarray] = {}

    def add(order, i, j, val):
        if not 0.0 < order <= 1.0:
            raise ValueError(f"order {order} outside (0, 1]")
        mat = terms.setdefault(float(order), np.zeros((n, n)))
        mat[i, j] += val

    for tr in spec.transfers:
        i, j = tr.source, tr.target
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid transfer ({i}, {j})")
        if (i, j) in seen:
            raise ValueError(f"transfer ({i}, {j}) listed twice")
        seen.add((i, j))
        if tr.rate < 0:
            raise ValueError(f"negative rate on transfer ({i}, {j})")
        order_in = tr.order_out if tr.order_in is None else tr.order_in
        if not math.isclose(order_in, tr.order_out, rel_tol=0.0, abs_tol=1e-12):
            raise MassBalanceError(
                f"transfer ({i}, {j}) leaves compartment {i} with order {tr.order_out:g} "
                f"but enters compartment {j} with order {order_in:g}"
            )
        if tr.units is not None and not math.isclose(_units_order(tr.units), tr.order_out, abs_tol=1e-9):
            raise UnitError(f"transfer ({i}, {j}): units {tr.units!r} do not match order {tr.order_out:g}")
        add(tr.order_out, i, i, -tr.rate)
        add(tr.order_out, j, i, tr.rate)
    for el in spec.eliminations:
        if not 0 <= el.compartment < n:
            raise ValueError(f"invalid elimination compartment {el.compartment}")
        if el.units is not None and not math.isclose(_units_order(el.units), el.order, abs_tol=1e-9):
            raise UnitError(f"elimination from {el.compartment}: units {el.units!r} do not match order {el.order:g}")
        add(el.order, el.compartment, el.compartment, -el.rate)
    inputs = tuple(spec.inputs) + tuple(ZeroInput() for _ in range(n - len(spec.inputs)))
    init = np.zeros(n)
    init[: len(spec.initial)] = spec.initial
    return NCompModel(n, terms, inputs[:n], init)
