"""Grünwald-Letnikov coefficients, truncated differences and finite-memory LTI models.

The discretisation used throughout is

    x_{k+1} = x_k + t_c (A x_k + F t_c^{-(1-alpha)} sum_{j<nu} c_j^{1-alpha} x_{k-j} + B u_k)

with zero pre-history (``x_k = 0`` for ``k < 0``). Stacking
``(x_k, x_{k-1}, ..., x_{k-nu+1})`` turns this into a time-invariant linear
system whose transition matrix has dense blocks only along its first block
row plus an identity shift register below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ._conv import HistoryConvolution
from .errors import NumericalError

__all__ = [
    "GlCoefficients",
    "AugmentedLtiSystem",
    "GlTrajectory",
    "gl_coefficients",
    "gl_difference",
    "default_memory",
    "discretize",
    "discretize_two_comp",
    "simulate_gl",
]


@dataclass(frozen=True)
class GlCoefficients:
    alpha: float
    coeffs: np.ndarray

    def __len__(self):
        return len(self.coeffs)


def gl_coefficients(alpha: float, n: int) -> GlCoefficients:
    """Coefficients ``c_0..c_n`` of the GL difference of order ``alpha``.

    Uses ``c_j = c_{j-1} (1 - (1 + alpha)/j)``, which equals
    ``(-1)^j prod_{i<j} (alpha - i)/(i + 1)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    j = np.arange(1, n + 1, dtype=float)
    c = np.empty(n + 1)
    c[0] = 1.0
    if n:
        c[1:] = np.cumprod((j - 1.0 - alpha) / j)
    return GlCoefficients(float(alpha), c)


def default_memory(t_c: float, memory_days: float = 5.0) -> int:
    """Memory depth ``ceil(memory_days / t_c)`` (5 days by default)."""
    return max(1, int(math.ceil(memory_days / t_c - 1e-9)))


def gl_difference(samples, alpha: float, h: float, nu: int | None = None) -> float:
    """Truncated GL difference of order ``alpha`` at the last sample.

    Parameters
    ----------
    samples : array_like
        ``f(0), f(h), ..., f(t)``; the last entry is the evaluation time.
    alpha : float
        Order.
    h : float
        Step.
    nu : int, optional
        Memory depth; the sum runs over ``j = 0..min(nu, t/h)``. ``None``
        means the full history.
    """
    f = np.asarray(samples, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("samples must be a non-empty 1-D sequence")
    if not h > 0:
        raise ValueError("h must be positive")
    n = f.size - 1
    m = n if nu is None else min(int(nu), n)
    if m < 0:
        raise ValueError("nu must be non-negative")
    c = gl_coefficients(alpha, m).coeffs
    return float(np.dot(c, f[::-1][: m + 1]) / h**alpha)


@dataclass
class AugmentedLtiSystem:
    """Finite-memory GL model ``X_{k+1} = a_hat X_k + b_hat u_k``.

    ``blocks[j]`` is the ``n x n`` block multiplying ``x_{k-j}`` in the
    update of ``x_{k+1}``; the remaining rows shift the history down.
    """

    blocks: np.ndarray  # (nu, n, n)
    b: np.ndarray  # (n, m) physical input map, already multiplied by t_c
    t_c: float
    nu: int
    state_dim: int = 2
    frac_order: float = 1.0
    # factored form blocks[0] = a0 + fmat * coeffs[0], blocks[j] = fmat * coeffs[j]
    a0: np.ndarray | None = field(default=None, repr=False)
    fmat: np.ndarray | None = field(default=None, repr=False)
    coeffs: np.ndarray | None = field(default=None, repr=False)
    _a_hat: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.state_dim * self.nu

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def a_hat(self) -> sp.csr_matrix:
        if self._a_hat is None:
            n, nu = self.state_dim, self.nu
            top = sp.hstack([sp.csr_matrix(blk) for blk in self.blocks], format="csr")
            if nu > 1:
                shift = sp.hstack([sp.identity(n * (nu - 1), format="csr"), sp.csr_matrix((n * (nu - 1), n))])
                self._a_hat = sp.vstack([top, shift], format="csr")
            else:
                self._a_hat = top
        return self._a_hat

    @property
    def b_hat(self) -> np.ndarray:
        out = np.zeros((self.dim, self.n_inputs))
        out[: self.state_dim] = self.b
        return out

    def stack(self, x0) -> np.ndarray:
        """Augmented initial state with ``x0`` on top and zero pre-history."""
        z = np.zeros(self.dim)
        z[: self.state_dim] = np.asarray(x0, dtype=float)
        return z


def discretize(a, f, b, frac_order: float, t_c: float, nu: int) -> AugmentedLtiSystem:
    """Finite-memory system for ``dx/dt = A x + F D^{frac_order} x + B u``.

    ``frac_order`` is the order of the GL difference applied to ``x``
    (``1 - alpha`` for the compartment models).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    f = np.atleast_2d(np.asarray(f, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    n = a.shape[0]
    if a.shape != (n, n) or f.shape != (n, n) or b.shape[0] != n:
        raise ValueError("A, F must be square and B must have matching rows")
    if not t_c > 0:
        raise ValueError("t_c must be positive")
    if int(nu) < 1:
        raise ValueError("nu must be at least 1")
    if not 0.0 <= frac_order <= 1.0:
        raise ValueError("frac_order must lie in [0, 1]")
    nu = int(nu)
    c = gl_coefficients(frac_order, nu - 1).coeffs
    scale = t_c * t_c ** (-frac_order)
    blocks = scale * c[:, None, None] * f[None, :, :]
    a0 = np.eye(n) + t_c * a
    blocks[0] += a0
    return AugmentedLtiSystem(
        blocks, t_c * b, float(t_c), nu, n, float(frac_order), a0=a0, fmat=scale * f, coeffs=c
    )


def discretize_two_comp(model, t_c: float, nu: int | None = None) -> AugmentedLtiSystem:
    """GL discretisation of the two-compartment model with tissue trapping.

    ``A = [[-(k12+k10), 0], [k12, 0]]``, ``F = [[0, k21f], [0, -k21f]]``,
    ``B = [1, 0]'``; the fractional difference has order ``1 - alpha``.
    """
    if nu is None:
        nu = default_memory(t_c)
    for name in ("k10", "k12", "k21f"):
        if getattr(model, name) < 0:
            raise ValueError(f"{name} must be non-negative")
    if not 0.0 < model.alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    a = np.array([[-(model.k12 + model.k10), 0.0], [model.k12, 0.0]])
    f = np.array([[0.0, model.k21f], [0.0, -model.k21f]])
    b = np.array([[1.0], [0.0]])
    return discretize(a, f, b, 1.0 - model.alpha, t_c, nu)


class GlTrajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray  # (steps + 1, n)

    @property
    def q1(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def q2(self) -> np.ndarray:
        return self.states[:, 1]


def _input_sequence(u, steps: int, m: int, extend: str) -> np.ndarray:
    if u is None:
        return np.zeros((steps, m))
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return np.full((steps, m), float(u))
    if u.ndim == 1:
        u = u[:, None] if m == 1 else u[None, :]
    if u.shape[0] < steps:
        if extend == "error":
            raise ValueError(f"input has {u.shape[0]} samples but {steps} steps were requested")
        pad = np.zeros((steps - u.shape[0], u.shape[1]))
        if extend == "hold" and u.shape[0]:
            pad[:] = u[-1]
        u = np.vstack([u, pad])
    return u[:steps]


def simulate_gl(system: AugmentedLtiSystem, x0, u=None, steps: int = 0, extend: str = "error") -> GlTrajectory:
    """Run the finite-memory recursion.

    Parameters
    ----------
    system : AugmentedLtiSystem
    x0 : array_like
        Physical initial state (the history before ``t = 0`` is zero).
    u : array_like or float, optional
        Input per step (rate). A scalar is held constant.
    steps : int
        Number of steps; returns ``steps + 1`` states including ``x0``.
    extend : {"error", "hold", "zero"}
        How to treat an input shorter than ``steps``.

    Notes
    -----
    The history sum only runs over the ``min(nu, k + 1)`` available states,
    so any ``nu >= steps`` reproduces the untruncated recursion exactly.
    """
    n, nu = system.state_dim, system.nu
    uu = _input_sequence(u, steps, system.n_inputs, extend)
    xs = np.zeros((steps + 1, n))
    xs[0] = np.asarray(x0, dtype=float)
    bu = uu @ system.b.T
    if system.coeffs is not None and steps > 0:
        # memory term through the block-FFT convolution: cost no longer scales with nu
        conv = HistoryConvolution(system.coeffs[: min(nu, steps + 1)], n, steps)
        conv.set(0, xs[0])
        a0, fm = system.a0, system.fmat
        for k in range(steps):
            nxt = a0 @ xs[k] + fm @ conv.lag_sum(k) + bu[k]
            if not np.all(np.isfinite(nxt)):
                raise NumericalError(f"non-finite state at step {k + 1} (t={(k + 1) * system.t_c:g})")
            xs[k + 1] = nxt
            conv.set(k + 1, nxt)
        return GlTrajectory(system.t_c * np.arange(steps + 1), xs)
    blocks = system.blocks
    for k in range(steps):
        m = min(nu, k + 1)
        hist = xs[k - m + 1 : k + 1][::-1]  # x_k, x_{k-1}, ...
        nxt = np.einsum("jab,jb->a", blocks[:m], hist) + bu[k]
        if not np.all(np.isfinite(nxt)):
            raise NumericalError(f"non-finite state at step {k + 1} (t={(k + 1) * system.t_c:g})")
        xs[k + 1] = nxt
    return GlTrajectory(system.t_c * np.arange(steps + 1), xs)
