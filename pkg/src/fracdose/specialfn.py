"""Real-argument Gamma and Mittag-Leffler functions.

Evaluation of the Mittag-Leffler family picks between four routes:

* the defining power series, whenever its terms do not cancel badly;
* a Kummer-transformed series for ``alpha == 1`` and negative arguments,
  which turns the alternating sum into one with (mostly) positive terms;
* the algebraic asymptotic expansion for large negative arguments;
* the integral representation of Gorenflo, Loutchko and Luchko (2002) for
  ``0 < alpha < 1``, used when neither series is trustworthy.

The series is cheap and exact for small ``|z|``, but for ``alpha = 1/2`` and
``z = -15`` its largest term is about ``1e97`` while the sum is ``0.04``, so a
fixed series/asymptotic split radius is not enough on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad

from .errors import ConvergenceError, PoleError, RegimeError

__all__ = [
    "MlParams",
    "EvalResult",
    "gamma_real",
    "log_abs_gamma",
    "rgamma",
    "ml1",
    "ml2",
    "ml3",
    "ml2_asymptotic",
    "prabhakar_asymptotic",
    "ml_array",
]

SERIES_TOL = 1e-14
MAX_TERMS = 2000
R_SWITCH = 15.0
MAX_ASYMPTOTIC_TERMS = 10
ASYMPTOTIC_MIN_RADIUS = 1.0
# A route is accepted when its own error estimate is below this (relative).
ACCEPT_RTOL = 1e-12

_EPS = np.finfo(float).eps
_LOG_MAX = math.log(np.finfo(float).max)

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_GAMMA_OVERFLOW = 171.62437695630272


# --------------------------------------------------------------------------
# Gamma
# --------------------------------------------------------------------------


def _sinpi(x):
    """sin(pi x) with exact argument reduction (exact zeros at integers)."""
    x = np.asarray(x, dtype=float)
    n = np.round(x)
    r = x - n
    s = np.sin(np.pi * r)
    return np.where(np.mod(n, 2.0) == 0.0, s, -s)


def _lanczos_series(xm):
    a = np.full_like(xm, _LANCZOS_COEF[0])
    for i in range(1, 9):
        a = a + _LANCZOS_COEF[i] / (xm + i)
    return a


def _lgamma_right(x):
    """log Gamma(x) for x >= 0.5 (array)."""
    xm = x - 1.0
    t = xm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (xm + 0.5) * np.log(t) - t + np.log(_lanczos_series(xm))


def log_abs_gamma(x):
    """Return ``(sign, log|Gamma(x)|)``; sign is 0 (and log is +inf) at poles.

    Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    sign = np.ones_like(x)
    logv = np.empty_like(x)
    right = x >= 0.5
    pole = (x <= 0.0) & (x == np.floor(x))
    left = ~right & ~pole
    if right.any():
        logv[right] = _lgamma_right(x[right])
    if left.any():
        xl = x[left]
        s = _sinpi(xl)
        logv[left] = math.log(math.pi) - np.log(np.abs(s)) - _lgamma_right(1.0 - xl)
        sign[left] = np.sign(s)
    sign[pole] = 0.0
    logv[pole] = np.inf
    if scalar:
        return float(sign[0]), float(logv[0])
    return sign, logv


def gamma_real(x: float) -> float:
    """Euler Gamma function of a real argument.

    Lanczos approximation for ``x >= 0.5`` and the reflection formula
    ``Gamma(x) Gamma(1-x) = pi / sin(pi x)`` below that.

    Raises
    ------
    PoleError
        If ``x`` is zero or a negative integer.
    OverflowError
        If ``Gamma(x)`` exceeds the largest double (``x > 171.62``).
    """
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x <= 0.0 and x == math.floor(x):
        raise PoleError(f"Gamma has a pole at x={x:g}")
    if x > _GAMMA_OVERFLOW:
        raise OverflowError(f"Gamma({x:g}) exceeds the double range")
    if x == math.floor(x):
        return float(math.factorial(int(x) - 1))
    if x >= 0.5:
        xm = x - 1.0
        t = xm + _LANCZOS_G + 0.5
        a = float(_lanczos_series(np.array(xm)))
        # split the power so t**(x-0.5) cannot overflow before exp(-t) scales it
        half = t ** (0.5 * (xm + 0.5))
        return _SQRT_2PI * half * (half * math.exp(-t)) * a
    s = float(_sinpi(x))
    if 1.0 - x <= _GAMMA_OVERFLOW:
        return math.pi / (s * gamma_real(1.0 - x))
    sign, logv = log_abs_gamma(x)
    return sign * math.exp(logv)


def rgamma(x: float) -> float:
    """Reciprocal Gamma, ``1/Gamma(x)``, which is zero at the poles."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    if -_GAMMA_OVERFLOW < x <= _GAMMA_OVERFLOW:
        return 1.0 / gamma_real(x)
    sign, logv = log_abs_gamma(x)
    return sign * math.exp(-logv)


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MlParams:
    """Parameters of the three-parameter (Prabhakar) Mittag-Leffler function."""

    alpha: float
    beta: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0.0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha!r}")
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta!r}")
        if not self.rho > 0.0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be a positive finite number, got {self.rho!r}")


class EvalResult(NamedTuple):
    value: float
    abs_error_estimate: float
    terms_used: int
    method: str = "series"


# --------------------------------------------------------------------------
# Series machinery
# --------------------------------------------------------------------------


def _sum_series(
    logterms: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    tol: float = SERIES_TOL,
    max_terms: int = MAX_TERMS,
    chunk: int = 64,
) -> tuple[float, float, int, float]:
    """Sum ``sum_k sign_k exp(logmag_k)`` until past the peak and negligible.

    Returns ``(sum, first_omitted, terms_used, sum_of_abs)``.
    """
    total = 0.0
    abs_total = 0.0
    prev_log = -np.inf
    k0 = 0
    while k0 < max_terms:
        k = np.arange(k0, min(k0 + chunk + 1, max_terms + 1), dtype=float)
        sign, logmag = logterms(k)
        mag = np.where(sign == 0.0, 0.0, np.exp(np.minimum(logmag, _LOG_MAX)))
        if not np.all(np.isfinite(mag)) or np.any(logmag[sign != 0.0] > _LOG_MAX):
            raise OverflowError("Mittag-Leffler series term overflows")
        terms = sign * mag
        with np.errstate(over="ignore"):
            chunk_abs = mag[:-1].sum()
        if abs_total + chunk_abs > 1e300:
            raise OverflowError("Mittag-Leffler series partial sums overflow")
        lm = np.where(sign == 0.0, -np.inf, logmag)
        n = len(k) - 1  # last entry is a look-ahead term
        for i in range(n):
            decreasing = lm[i] < prev_log or lm[i] == -np.inf
            s_before = total
            if (
                k0 + i > 0
                and decreasing
                and mag[i] <= tol * abs(s_before)
                and mag[i + 1] <= tol * abs(s_before)
            ):
                return total, float(mag[i]), int(k0 + i), abs_total
            total += terms[i]
            abs_total += mag[i]
            if lm[i] != -np.inf:
                prev_log = lm[i]
        k0 += n
    raise ConvergenceError(f"series did not converge within {max_terms} terms")


def _ml_series(alpha: float, beta: float, rho: float, z: float, tol: float = SERIES_TOL) -> EvalResult:
    if z == 0.0:
        return EvalResult(rgamma(beta), 0.0, 1, "series")
    logz = math.log(abs(z))
    zneg = z < 0.0
    lg_rho = math.lgamma(rho)

    def logterms(k):
        sg, lg = log_abs_gamma(alpha * k + beta)
        logmag = k * logz - lg
        if rho != 1.0:
            logmag = logmag + log_abs_gamma(rho + k)[1] - lg_rho - log_abs_gamma(k + 1.0)[1]
        sign = sg * (np.where(np.mod(k, 2.0) == 1.0, -1.0, 1.0) if zneg else 1.0)
        return sign, logmag

    total, omitted, used, abs_total = _sum_series(logterms, tol)
    err = omitted + 2.0 * _EPS * abs_total * math.sqrt(max(used, 1))
    return EvalResult(float(total), float(err), max(used, 1), "series")


def _kummer_alpha1(beta: float, rho: float, x: float, tol: float = SERIES_TOL) -> EvalResult:
    """E^rho_{1,beta}(-x) for x > 0 via Kummer's transformation.

    ``E^rho_{1,beta}(-x) = exp(-x) sum_k (beta-rho)_k x^k / (k! Gamma(k+beta))``.
    """
    b = beta - rho
    logx = math.log(x)

    def logterms(k):
        # (b)_k as a running product; zero once b + i hits 0
        idx = k.astype(int)
        kmax = int(idx[-1])
        i = np.arange(kmax, dtype=float)
        fac = b + i
        zero_at = np.where(fac == 0.0)[0]
        lf = np.concatenate(([0.0], np.cumsum(np.log(np.abs(np.where(fac == 0.0, 1.0, fac))))))
        sf = np.concatenate(([1.0], np.cumprod(np.sign(np.where(fac == 0.0, 1.0, fac)))))
        lpoch = lf[idx]
        spoch = sf[idx]
        if zero_at.size:
            spoch = np.where(idx > zero_at[0], 0.0, spoch)
        sg, lg = log_abs_gamma(k + beta)
        logmag = lpoch + k * logx - log_abs_gamma(k + 1.0)[1] - lg - x
        return spoch * sg, logmag

    total, omitted, used, abs_total = _sum_series(logterms, tol, max_terms=max(MAX_TERMS, int(4 * x) + 200))
    err = omitted + 2.0 * _EPS * abs_total * math.sqrt(max(used, 1))
    return EvalResult(float(total), float(err), max(used, 1), "kummer")


def _positive_overflow_guard(alpha: float, beta: float, z: float) -> None:
    if z > 0.0 and z ** (1.0 / alpha) + (1.0 - beta) / alpha * math.log(z) - math.log(alpha) > _LOG_MAX:
        raise OverflowError(f"Mittag-Leffler value at z={z:g}, alpha={alpha:g} exceeds the double range")


# --------------------------------------------------------------------------
# Asymptotic expansions
# --------------------------------------------------------------------------


def _rgamma_snap(x: float) -> float:
    """1/Gamma(x) with arguments within rounding of a pole treated as the pole."""
    n = round(x)
    if n <= 0 and abs(x - n) <= 64.0 * _EPS * max(1.0, abs(x)):
        return 0.0
    return rgamma(x)


def prabhakar_asymptotic(alpha: float, beta: float, rho: float, z: float, p: int) -> EvalResult:
    """Algebraic expansion of ``E^rho_{alpha,beta}(z)`` for large negative ``z``.

    ``sum_{k<p} (-1)^k (rho)_k / k! * x^(-rho-k) / Gamma(beta - alpha(rho+k))``
    with ``x = -z``. The error estimate is the first omitted nonzero term.
    """
    if z >= 0.0:
        raise RegimeError("the algebraic expansion is implemented for negative arguments only")
    x = -z
    total = 0.0
    terms = []
    coef = 1.0  # (-1)^k (rho)_k / k!
    k = 0
    while len(terms) < p + 4 and k < p + 64:
        t = coef * x ** (-rho - k) * _rgamma_snap(beta - alpha * (rho + k))
        terms.append(t)
        coef *= -(rho + k) / (k + 1.0)
        k += 1
    total = math.fsum(terms[:p])
    tail = [abs(t) for t in terms[p:] if t != 0.0]
    err = tail[0] if tail else 0.0
    return EvalResult(total, err, p, "asymptotic")


def ml2_asymptotic(mu: float, nu: float, z: float, p: int, min_radius: float = ASYMPTOTIC_MIN_RADIUS) -> EvalResult:
    """Large-argument expansion ``-sum_{k=1}^{p} z^(-k) / Gamma(nu - mu k)``.

    Parameters
    ----------
    mu, nu : float
        The two Mittag-Leffler parameters (``alpha``, ``beta``).
    z : float
        Negative argument with ``|z| > min_radius``.
    p : int
        Number of terms kept.

    Notes
    -----
    The Gamma argument carries the summation index, ``Gamma(nu - mu k)``.
    The reported error is the magnitude of the first omitted nonzero term,
    i.e. of order ``|z|^-(p+1)``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if not mu > 0.0:
        raise ValueError("mu must be positive")
    if abs(z) <= min_radius:
        raise RegimeError(f"|z|={abs(z):g} is inside the asymptotic regime floor {min_radius:g}")
    return prabhakar_asymptotic(mu, nu, 1.0, z, p)


def _exponential_part(alpha: float, beta: float, x: float) -> tuple[float, float]:
    """Exponential contribution to ``E_{alpha,beta}(-x)`` and the size of the omitted one.

    For ``1 < alpha < 2`` the two branches ``w = x^(1/alpha) exp(+-i pi/alpha)``
    lie inside the sector ``|arg| <= alpha pi`` and contribute
    ``2 Re(w^(1-beta) e^w) / alpha``. For ``2/3 < alpha < 1`` they lie just
    outside it and their (decaying) magnitude is kept as a conservative error
    bound; for smaller alpha they play no role.
    """
    r = x ** (1.0 / alpha)
    ang = math.pi / alpha
    if alpha < 1.0 and math.cos(ang) >= 0.0:
        # far from the sector boundary: no exponential term at all
        return 0.0, 0.0
    mag = r ** (1.0 - beta) * math.exp(r * math.cos(ang)) / alpha
    if alpha > 1.0:
        phase = r * math.sin(ang) + (1.0 - beta) * ang
        return 2.0 * mag * math.cos(phase), 0.0
    return 0.0, 2.0 * mag


def _adaptive_asymptotic(alpha: float, beta: float, rho: float, z: float) -> EvalResult:
    best = None
    for p in range(1, MAX_ASYMPTOTIC_TERMS + 1):
        r = prabhakar_asymptotic(alpha, beta, rho, z, p)
        if best is None or r.abs_error_estimate <= best.abs_error_estimate:
            best = r
    if rho == 1.0:
        extra, omitted = _exponential_part(alpha, beta, -z)
        best = EvalResult(best.value + extra, best.abs_error_estimate + omitted, best.terms_used, best.method)
    elif alpha > 1.0:
        # exponential branches of the Prabhakar function are not implemented
        best = EvalResult(best.value, math.inf, best.terms_used, best.method)
    return best


# --------------------------------------------------------------------------
# Integral representation (0 < alpha < 1)
# --------------------------------------------------------------------------


def _ml_integral(alpha: float, beta: float, z: float) -> EvalResult:
    """Gorenflo-Loutchko-Luchko integral representation for real z != 0, 0 < alpha < 1."""
    a, b = alpha, beta
    c = (1.0 - b) / a
    sin1 = math.sin(math.pi * (1.0 - b))
    sin2 = math.sin(math.pi * (1.0 - b + a))
    cosa = math.cos(a * math.pi)

    def kern(chi):
        return (
            chi**c
            * math.exp(-(chi ** (1.0 / a)))
            * (chi * sin1 - z * sin2)
            / (chi * chi - 2.0 * chi * z * cosa + z * z)
            / (a * math.pi)
        )

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200, full_output=1)
    value = 0.0
    err = 0.0
    neval = 0
    residue = 0.0
    if z > 0.0:
        # |arg z| = 0 < alpha*pi: the pole of the kernel contributes a residue
        residue = z**c * math.exp(z ** (1.0 / a)) / a
    if b < 1.0 + a and z < 0.0:
        for lo, hi in ((0.0, 1.0), (1.0, math.inf)):
            v, e, info = quad(kern, lo, hi, **opts)[:3]
            value += v
            err += e
            neval += info["neval"]
    else:
        eps = 1.0 if z < 0.0 else 0.5 * z

        def contour(phi):
            w = eps ** (1.0 / a) * math.sin(phi / a) + phi * (1.0 + c)
            num = eps ** (1.0 + c) * math.exp(eps ** (1.0 / a) * math.cos(phi / a)) / (2.0 * a * math.pi)
            val = num * complex(math.cos(w), math.sin(w)) / (eps * complex(math.cos(phi), math.sin(phi)) - z)
            return val.real

        pieces = [(eps, 1.0 if eps < 1.0 else eps + 1.0), (1.0 if eps < 1.0 else eps + 1.0, math.inf)]
        for lo, hi in pieces:
            v, e, info = quad(kern, lo, hi, **opts)[:3]
            value += v
            err += e
            neval += info["neval"]
        v, e, info = quad(contour, -a * math.pi, a * math.pi, **opts)[:3]
        value += v
        err += e
        neval += info["neval"]
    value += residue
    err += 4.0 * _EPS * (abs(value) + abs(residue))
    return EvalResult(value, err, neval, "integral")


# --------------------------------------------------------------------------
# Public Mittag-Leffler entry points
# --------------------------------------------------------------------------


def _accepted(r: EvalResult) -> bool:
    return math.isfinite(r.value) and r.abs_error_estimate <= ACCEPT_RTOL * max(abs(r.value), 1e-300)


def _ml_dispatch(alpha: float, beta: float, rho: float, z: float) -> EvalResult:
    if z == 0.0:
        return EvalResult(rgamma(beta), 0.0, 1, "series")
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    _positive_overflow_guard(alpha, beta, z)
    if alpha == 1.0 and z < 0.0:
        return _kummer_alpha1(beta, rho, -z)

    candidates = []
    try:
        r = _ml_series(alpha, beta, rho, z)
        if _accepted(r):
            return r
        candidates.append(r)
    except (ConvergenceError, OverflowError):
        pass

    # the algebraic expansion only describes the function for alpha < 2
    if z < 0.0 and abs(z) > R_SWITCH and alpha < 2.0:
        r = _adaptive_asymptotic(alpha, beta, rho, z)
        if _accepted(r):
            return r
        candidates.append(r)

    if alpha < 1.0 and rho == 1.0:
        return _ml_integral(alpha, beta, z)

    if candidates:
        best = min(candidates, key=lambda c: c.abs_error_estimate)
        if best.abs_error_estimate <= 1e-8 * max(abs(best.value), 1e-300):
            return best
    raise ConvergenceError(
        f"no evaluation route reached tolerance for alpha={alpha:g}, beta={beta:g}, rho={rho:g}, z={z:g}"
    )


def ml1(alpha: float, z: float) -> EvalResult:
    """One-parameter Mittag-Leffler function ``sum_k z^k / Gamma(alpha k + 1)``."""
    return ml2(alpha, 1.0, z)


def ml2(alpha: float, beta: float, z: float) -> EvalResult:
    """Two-parameter Mittag-Leffler function ``sum_k z^k / Gamma(alpha k + beta)``."""
    MlParams(alpha, beta)
    return _ml_dispatch(float(alpha), float(beta), 1.0, float(z))


def ml3(params: MlParams, z: float) -> EvalResult:
    """Prabhakar function ``sum_k (rho)_k z^k / (k! Gamma(alpha k + beta))``.

    ``rho == 1`` goes through exactly the same code path as :func:`ml2`.
    For ``rho != 1`` and ``0 < alpha < 1`` only the series and the large
    argument expansion are available; in between a ConvergenceError is raised.
    """
    if not isinstance(params, MlParams):
        params = MlParams(*params)
    return _ml_dispatch(float(params.alpha), float(params.beta), float(params.rho), float(z))


def ml_array(alpha: float, beta: float, z) -> np.ndarray:
    """Elementwise ``E_{alpha,beta}(z)`` values for an array of arguments."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for idx, zi in np.ndenumerate(z):
        out[idx] = ml2(alpha, beta, zi).value
    return out
