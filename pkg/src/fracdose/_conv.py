"""Online history convolution ``s_n = sum_j w[n-j] f_j`` with block FFT acceleration.

Time-stepping schemes for fractional equations need, at every step, a lag
sum over the whole past. Evaluating it directly costs O(N^2). Here the past
is split into the current block, summed directly, and everything before it,
whose contribution to all targets of the block is obtained with one FFT
convolution when the block starts. Total cost is O(N^2 / B + (N/B) N log N).
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve


class HistoryConvolution:
    """Lag sums against a fixed weight sequence as samples arrive.

    Parameters
    ----------
    weights : array_like
        ``w[0..n_max]``.
    dim : int
        Dimension of each sample ``f_j``.
    n_max : int
        Largest index that will be stored.
    block : int, optional
        Block length; direct summation is used throughout when
        ``n_max < 2 * block``.
    """

    def __init__(self, weights, dim: int, n_max: int, block: int = 512):
        w = np.asarray(weights, dtype=float)
        if w.shape[0] < n_max + 1:
            w = np.concatenate([w, np.zeros(n_max + 1 - w.shape[0])])
        self.w = w[: n_max + 1]
        self.f = np.zeros((n_max + 1, dim))
        self.n_max = n_max
        self.block = int(block)
        self.direct = n_max < 2 * self.block
        self._far_start = -1
        self._far = None
        # trailing zeros in the weights cap the useful history (finite memory)
        nz = np.nonzero(self.w)[0]
        self.support = int(nz[-1]) + 1 if nz.size else 1

    def set(self, j: int, value) -> None:
        self.f[j] = value

    def _ensure_far(self, n: int) -> None:
        start = (n // self.block) * self.block
        if start == self._far_start:
            return
        self._far_start = start
        stop = min(start + self.block, self.n_max + 1)
        lo = max(0, start - self.support + 1)
        if start == 0 or lo >= start:
            self._far = np.zeros((stop - start, self.f.shape[1]))
            return
        src = self.f[lo:start]
        ker = self.w[: stop - lo]
        full = fftconvolve(src, ker[:, None], axes=0)
        # full[i] = sum_j src[j] ker[i - j] with global index lo + i
        self._far = full[start - lo : stop - lo]

    def lag_sum(self, n: int, min_lag: int = 0) -> np.ndarray:
        """``sum_{j=0}^{n-min_lag} w[n-j] f_j``."""
        hi = n - min_lag
        if hi < 0:
            return np.zeros(self.f.shape[1])
        if self.direct:
            lo = max(0, n - self.support + 1)
            if lo > hi:
                return np.zeros(self.f.shape[1])
            return self.w[n - hi : n - lo + 1][::-1] @ self.f[lo : hi + 1]
        self._ensure_far(n)
        start = self._far_start
        lo = max(start, n - self.support + 1)
        near = self.w[n - hi : n - lo + 1][::-1] @ self.f[lo : hi + 1] if lo <= hi else 0.0
        return self._far[n - start] + near
