"""Fractional transfer functions, numerical Laplace inversion and rational approximations of s^alpha."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, PoleError

__all__ = [
    "FracTransferFunction",
    "RationalTf",
    "NiltResult",
    "MatsudaModel",
    "tf_eval",
    "nilt",
    "oustaloup",
    "oustaloup_frequencies",
    "matsuda_fujii",
    "pade_s_alpha",
]


# --------------------------------------------------------------------------
# Transfer functions
# --------------------------------------------------------------------------


def _canonical(terms) -> tuple[tuple[float, float], ...]:
    merged: dict[float, float] = {}
    for coef, expo in terms:
        coef, expo = float(coef), float(expo)
        if not (math.isfinite(coef) and math.isfinite(expo)):
            raise ValueError("coefficients and exponents must be finite")
        merged[expo] = merged.get(expo, 0.0) + coef
    return tuple((c, e) for e, c in sorted(merged.items(), key=lambda it: -it[0]) if c != 0.0)


@dataclass(frozen=True)
class FracTransferFunction:
    """Ratio of generalized polynomials ``sum c_i s^{e_i}``.

    Terms are stored as ``(coef, exponent)`` pairs in descending exponent
    order with duplicates merged. Negative exponents are accepted, which lets
    ``s^(alpha-1)`` numerators be written directly.
    """

    numerator: tuple[tuple[float, float], ...]
    denominator: tuple[tuple[float, float], ...]
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "numerator", _canonical(self.numerator))
        object.__setattr__(self, "denominator", _canonical(self.denominator))
        if not self.denominator:
            raise ValueError("denominator is identically zero")

    def __call__(self, s):
        return tf_eval(self, s)

    def scaled(self, c: float) -> "FracTransferFunction":
        return FracTransferFunction(tuple((c * a, e) for a, e in self.numerator), self.denominator, self.description)

    def to_dict(self) -> dict:
        return {
            "numerator": [[c, e] for c, e in self.numerator],
            "denominator": [[c, e] for c, e in self.denominator],
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FracTransferFunction":
        return cls(
            tuple(map(tuple, d["numerator"])),
            tuple(map(tuple, d["denominator"])),
            d.get("description", ""),
        )


def _gpoly(terms, s):
    out = np.zeros_like(s)
    for c, e in terms:
        out = out + c * (s**e if e != 0.0 else 1.0)
    return out


def tf_eval(f: FracTransferFunction, s):
    """Evaluate ``f`` at complex ``s`` (scalar or array) with principal-branch powers."""
    s_arr = np.asarray(s, dtype=complex)
    num = _gpoly(f.numerator, s_arr)
    den = _gpoly(f.denominator, s_arr)
    if np.any(np.abs(den) < 1e-300):
        raise PoleError("transfer-function denominator vanishes at the requested point")
    out = num / den
    return complex(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Numerical inverse Laplace transform (de Hoog, Knight & Stokes)
# --------------------------------------------------------------------------


class NiltResult(NamedTuple):
    values: np.ndarray
    error_estimates: np.ndarray
    reduced_accuracy: np.ndarray  # True where the QD table broke down


def _qd_continued_fraction(a: np.ndarray):
    """Continued-fraction coefficients d_0..d_{2M} from power-series coefficients a_0..a_{2M}."""
    n2 = len(a) - 1
    m = n2 // 2
    d = np.zeros(n2 + 1, dtype=complex)
    d[0] = a[0]
    tiny = 1e-300
    if np.any(np.abs(a[:-1]) < tiny):
        return None
    q = a[1:] / a[:-1]  # q_1^{(i)}, i = 0..2M-1
    e = np.zeros(n2 + 1, dtype=complex)  # e_0^{(i)} = 0
    for r in range(1, m + 1):
        e_new = q[1 : n2 - 2 * r + 2] - q[: n2 - 2 * r + 1] + e[1 : n2 - 2 * r + 2]
        d[2 * r - 1] = -q[0]
        d[2 * r] = -e_new[0]
        if r < m:
            if np.any(np.abs(e_new[:-1]) < tiny):
                return None
            q = q[1 : n2 - 2 * r + 1] * e_new[1:] / e_new[:-1]
        e = e_new
    if not np.all(np.isfinite(d)):
        return None
    return d


def _cf_value(d: np.ndarray, z: complex) -> tuple[complex, complex]:
    """Accelerated and plain values of the continued fraction at ``z``."""
    n2 = len(d) - 1
    a_prev, a_cur = 0.0 + 0j, d[0]
    b_prev, b_cur = 1.0 + 0j, 1.0 + 0j
    for n in range(1, n2):
        a_prev, a_cur = a_cur, a_cur + d[n] * z * a_prev
        b_prev, b_cur = b_cur, b_cur + d[n] * z * b_prev
    # last step plain, and with the remainder estimate of de Hoog et al.
    a_plain = a_cur + d[n2] * z * a_prev
    b_plain = b_cur + d[n2] * z * b_prev
    h = 0.5 * (1.0 + (d[n2 - 1] - d[n2]) * z)
    rem = -h * (1.0 - np.sqrt(1.0 + d[n2] * z / (h * h)))
    a_acc = a_cur + rem * a_prev
    b_acc = b_cur + rem * b_prev
    return a_acc / b_acc, a_plain / b_plain


def _euler_sum(terms: np.ndarray) -> float:
    """Euler (binomial averaging) acceleration of an alternating-ish series of real terms."""
    partial = np.cumsum(terms)
    k = min(12, len(partial) - 1)
    tail = partial[-k - 1 :]
    w = np.array([math.comb(k, j) for j in range(k + 1)], dtype=float) / 2.0**k
    return float(np.dot(w, tail))


def nilt(
    f,
    t_points,
    m_terms: int = 40,
    sigma_margin: float | None = None,
    sigma0: float = 0.0,
    tol: float = 1e-12,
    full_output: bool = False,
):
    """Invert a Laplace transform numerically at positive times.

    Fourier-series discretisation of the Bromwich integral along
    ``Re s = sigma`` with period ``T = 2 t`` per output time, accelerated by a
    continued fraction built with the quotient-difference algorithm.

    Parameters
    ----------
    f : FracTransferFunction or callable
        Laplace-domain function, evaluated at complex arguments.
    t_points : array_like
        Positive output times.
    m_terms : int
        ``M``; ``2M + 1`` function evaluations per time point.
    sigma_margin : float, optional
        Shift of the contour beyond ``sigma0``. Defaults to
        ``-ln(tol) / (2 T)``, which balances discretisation error against
        round-off amplification.
    sigma0 : float
        Upper bound on the real parts of the singularities of ``f``.
    full_output : bool
        Also return error estimates and breakdown flags.

    Returns
    -------
    values : ndarray, or NiltResult if ``full_output``.
    """
    t = np.atleast_1d(np.asarray(t_points, dtype=float))
    if np.any(t <= 0.0):
        raise ValueError("all times must be positive")
    fun = f if callable(f) else None
    if fun is None:
        raise TypeError("f must be callable")
    vals = np.empty_like(t)
    errs = np.empty_like(t)
    flags = np.zeros(t.shape, dtype=bool)
    if isinstance(f, FracTransferFunction) and not f.numerator:
        vals[:] = 0.0
        errs[:] = 0.0
        return NiltResult(vals, errs, flags) if full_output else vals
    k = np.arange(2 * m_terms + 1)
    for idx, ti in enumerate(t):
        period = 2.0 * ti
        margin = -math.log(tol) / (2.0 * period) if sigma_margin is None else float(sigma_margin)
        gam = sigma0 + margin
        p = gam + 1j * math.pi * k / period
        a = np.asarray(fun(p), dtype=complex)
        a[0] = 0.5 * a[0]
        scale = math.exp(gam * ti) / period
        z = np.exp(1j * math.pi * ti / period)
        d = _qd_continued_fraction(a)
        if d is None:
            terms = (a * z**k).real
            vals[idx] = scale * _euler_sum(terms)
            errs[idx] = scale * abs(terms[-1])
            flags[idx] = True
            continue
        acc, plain = _cf_value(d, z)
        vals[idx] = scale * acc.real
        errs[idx] = scale * abs(acc.real - plain.real) + math.exp(-2.0 * margin * period) * abs(vals[idx])
    if np.any(flags):
        warnings.warn("quotient-difference breakdown in NILT; Euler-summed fallback used", RuntimeWarning, stacklevel=2)
    if full_output:
        return NiltResult(vals, errs, flags)
    return vals


# --------------------------------------------------------------------------
# Rational approximations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RationalTf:
    """``gain * prod(s - zeros) / prod(s - poles)``."""

    zeros: np.ndarray
    poles: np.ndarray
    gain: float
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        z = np.sort_complex(np.asarray(self.zeros, dtype=complex))
        p = np.sort_complex(np.asarray(self.poles, dtype=complex))
        if np.all(np.abs(z.imag) < 1e-12 * np.maximum(1.0, np.abs(z.real))):
            z = z.real
        if np.all(np.abs(p.imag) < 1e-12 * np.maximum(1.0, np.abs(p.real))):
            p = p.real
        if np.any(np.real(p) >= 0.0):
            raise ValueError("approximant has a pole with non-negative real part")
        object.__setattr__(self, "zeros", z)
        object.__setattr__(self, "poles", p)
        object.__setattr__(self, "gain", float(self.gain))

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, self.gain, dtype=complex)
        for zk in self.zeros:
            out = out * (s - zk)
        for pk in self.poles:
            out = out / (s - pk)
        return complex(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        def enc(v):
            return [[float(x.real), float(x.imag)] if np.iscomplexobj(v) else float(x) for x in v]

        return {"zeros": enc(self.zeros), "poles": enc(self.poles), "gain": self.gain, "flags": list(self.flags)}


def oustaloup_frequencies(alpha: float, wb: float, wh: float, n_half: int) -> tuple[np.ndarray, np.ndarray]:
    """Corner frequencies ``(omega_k, omega'_k)`` for ``k = -N..N`` (zeros, poles)."""
    k = np.arange(-n_half, n_half + 1, dtype=float)
    ratio = wh / wb
    zeros = wb * ratio ** ((k + n_half + 0.5 * (1.0 - alpha)) / (2 * n_half + 1))
    poles = wb * ratio ** ((k + n_half + 0.5 * (1.0 + alpha)) / (2 * n_half + 1))
    return zeros, poles


def oustaloup(alpha: float, wb: float, wh: float, n_half: int) -> RationalTf:
    """Oustaloup band-limited approximation of ``s^alpha`` on ``[wb, wh]``.

    ``H(s) = c0 prod_{k=-N}^{N} (s + w_k)/(s + w'_k)`` with the gain fixed
    by ``|H(j w_u)| = w_u^alpha`` at ``w_u = sqrt(wb wh)``, which gives
    ``c0 = wh^alpha``.
    """
    if not 0.0 < wb < wh:
        raise ValueError("need 0 < wb < wh")
    if n_half < 1:
        raise ValueError("n_half must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    wz, wp = oustaloup_frequencies(alpha, wb, wh, n_half)
    return RationalTf(-wz, -wp, wh**alpha)


@dataclass(frozen=True)
class MatsudaModel:
    """Thiele-type continued fraction ``a0 + (s - s0)/(a1 + (s - s1)/(a2 + ...))``."""

    nodes: np.ndarray
    coeffs: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.coeffs)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex if np.iscomplexobj(s) else float)
        val = np.full(s.shape, self.coeffs[-1], dtype=s.dtype)
        for i in range(len(self.coeffs) - 2, -1, -1):
            val = self.coeffs[i] + (s - self.nodes[i]) / val
        return val if val.ndim else val.item()

    def polynomials(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and denominator coefficient arrays (highest degree first)."""
        # P_i/Q_i convergent recursion: P_i = a_i P_{i-1} + (s - s_{i-1}) P_{i-2}
        p_prev, p_cur = np.array([1.0]), np.array([self.coeffs[0]])
        q_prev, q_cur = np.array([0.0]), np.array([1.0])
        for i in range(1, self.depth):
            lin = np.array([1.0, -self.nodes[i - 1]])
            p_prev, p_cur = p_cur, np.polyadd(self.coeffs[i] * p_cur, np.polymul(lin, p_prev))
            q_prev, q_cur = q_cur, np.polyadd(self.coeffs[i] * q_cur, np.polymul(lin, q_prev))
        return p_cur, q_cur

    def as_rational(self) -> RationalTf:
        num, den = self.polynomials()
        num = np.trim_zeros(num, "f")
        den = np.trim_zeros(den, "f")
        return RationalTf(np.roots(num), np.roots(den), num[0] / den[0])


def _thiele(nodes: np.ndarray, values: np.ndarray, depth: int, rtol: float):
    v = values.astype(float).copy()
    coeffs = []
    n = len(nodes)
    scale = max(1.0, float(np.max(np.abs(values))))
    for i in range(depth):
        coeffs.append(v[i])
        if i == n - 1 or i == depth - 1:
            break
        diff = v[i + 1 :] - v[i]
        small = np.abs(diff) <= rtol * scale
        if np.all(small):
            break  # the fraction terminates: remaining data are reproduced exactly
        if np.any(small):
            return coeffs, i + 1 + int(np.argmax(small))
        v[i + 1 :] = (nodes[i + 1 :] - nodes[i]) / diff
        scale = max(1.0, float(np.max(np.abs(v[i + 1 :]))))
    return coeffs, None


def matsuda_fujii(f_samples: Sequence[tuple[float, float]], depth: int | None = None, rtol: float = 1e-13) -> MatsudaModel:
    """Continued-fraction interpolation through ``(s_k, F(s_k))`` samples.

    ``alpha_i = v_i(s_i)`` with ``v_0 = F`` and
    ``v_{i+1}(s) = (s - s_i) / (v_i(s) - alpha_i)``.

    On a breakdown (``v_i(s_k) = alpha_i`` at a node still needed) the
    offending node is moved to the end and the expansion restarted once.
    """
    data = np.asarray(f_samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("f_samples must be a sequence of (s, value) pairs")
    nodes, values = data[:, 0].copy(), data[:, 1].copy()
    if len(np.unique(nodes)) != len(nodes):
        raise ValueError("nodes must be distinct")
    depth = len(nodes) if depth is None else int(depth)
    if not 1 <= depth <= len(nodes):
        raise ValueError("depth must be between 1 and the number of nodes")
    for _attempt in range(2):
        coeffs, bad = _thiele(nodes, values, depth, rtol)
        if bad is None:
            return MatsudaModel(nodes[: len(coeffs)].copy(), np.array(coeffs))
        order = [i for i in range(len(nodes)) if i != bad] + [bad]
        nodes, values = nodes[order], values[order]
    raise ConvergenceError("continued-fraction recursion broke down after node reordering")


def pade_s_alpha(alpha: float, s0: float, m: int, n: int) -> RationalTf:
    """Padé ``[m/n]`` approximant of ``s^alpha`` about ``s0 > 0``.

    Built from the Taylor coefficients ``binom(alpha, k) s0^(alpha-k)`` in
    ``x = s - s0``. A singular denominator system lowers ``n`` by one at a
    time; the reduction is recorded in ``flags``.
    """
    if not s0 > 0.0:
        raise ValueError("s0 must be positive")
    if m < 0 or n < 0:
        raise ValueError("orders must be non-negative")
    flags: list[str] = []
    if n == 0 and m == 0:
        return RationalTf(np.array([]), np.array([]), s0**alpha, ("constant",))
    nn = n
    while True:
        kmax = m + nn
        c = np.empty(kmax + 1)
        c[0] = 1.0
        for k in range(1, kmax + 1):
            c[k] = c[k - 1] * (alpha - k + 1) / (k * s0)
        c *= s0**alpha
        if nn == 0:
            q = np.array([1.0])
            break
        # denominator q_0 = 1, sum_{j=0..n} q_j c_{k-j} = 0 for k = m+1..m+n
        mat = np.array([[c[k - j] if k - j >= 0 else 0.0 for j in range(1, nn + 1)] for k in range(m + 1, m + nn + 1)])
        rhs = -c[m + 1 : m + nn + 1]
        if np.linalg.cond(mat) < 1e12:
            q = np.concatenate(([1.0], np.linalg.solve(mat, rhs)))
            break
        flags.append(f"denominator order reduced from {nn} to {nn - 1}")
        nn -= 1
    p = np.array([sum(q[j] * c[k - j] for j in range(0, min(k, nn) + 1)) for k in range(m + 1)])
    # polynomials in x with ascending coefficients -> roots in s
    p_desc = np.trim_zeros(p[::-1], "f")
    q_desc = np.trim_zeros(q[::-1], "f")
    zeros = s0 + np.roots(p_desc) if len(p_desc) > 1 else np.array([])
    poles = s0 + np.roots(q_desc) if len(q_desc) > 1 else np.array([])
    gain = p_desc[0] / q_desc[0]
    return RationalTf(zeros, poles, gain, tuple(flags))
