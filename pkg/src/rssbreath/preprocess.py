"""Sliding-window mean removal."""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import ChannelVector, VectorKind


class MeanRemover:
    """Subtract the running mean of the last ``L`` cycles from each new cycle.

    While fewer than ``L`` cycles have been seen the mean is taken over what
    is available, so output indices stay aligned with the input.
    """

    def __init__(self, num_channels: int, L: int):
        if L < 1:
            raise ValueError("window length L must be >= 1")
        if num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        self.L = int(L)
        self.num_channels = int(num_channels)
        self.window: deque[np.ndarray] = deque()
        self.running_sum = np.zeros(self.num_channels)
        self._pushes = 0

    def push(self, y: ChannelVector | np.ndarray) -> ChannelVector:
        values = y.values if isinstance(y, ChannelVector) else np.asarray(y, dtype=float).reshape(-1)
        if values.size != self.num_channels:
            raise ValueError(f"expected {self.num_channels} channels, got {values.size}")
        self.window.append(values)
        self.running_sum = self.running_sum + values
        if len(self.window) > self.L:
            self.running_sum = self.running_sum - self.window.popleft()
        self._pushes += 1
        if self._pushes % self.L == 0:
            # resum once per window so rounding error cannot accumulate
            self.running_sum = np.sum(self.window, axis=0)
        mu = self.running_sum / len(self.window)
        return ChannelVector(values - mu, VectorKind.MEAN_REMOVED)


def remove_mean(samples: np.ndarray, L: int) -> np.ndarray:
    """Batch equivalent of feeding every row of ``samples`` through :class:`MeanRemover`."""
    if L < 1:
        raise ValueError("window length L must be >= 1")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    K = x.shape[0]
    # centring on the first row keeps the cumulative sums small
    ref = x[:1] if K else np.zeros((1, x.shape[1]))
    c = np.cumsum(x - ref, axis=0)
    c = np.vstack([np.zeros((1, x.shape[1])), c])
    k = np.arange(K)
    lo = np.maximum(0, k - L + 1)
    counts = (k - lo + 1)[:, None]
    mu = (c[k + 1] - c[lo]) / counts + ref
    return x - mu
