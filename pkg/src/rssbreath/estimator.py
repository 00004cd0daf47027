"""Maximum-likelihood estimation of a common-frequency sinusoid across channels.

With equal noise variance on every channel the likelihood depends on the
frequency only through the energy each channel puts into the span of
``cos(2 pi f t)`` and ``sin(2 pi f t)``.  For long windows that energy is
proportional to the channel-averaged periodogram; :func:`ml_objective`
evaluates it exactly, which matters for short windows and frequencies near
the band edges.  Amplitudes and phases follow from the complex projection at
the chosen frequency.  Sample ``n`` of a window sits at ``n * M / fs`` seconds
after the window start (n = 0..N-1), so phases are referenced to the first
sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class InsufficientDataError(RuntimeError):
    """The estimation window is not full yet."""


@dataclass(frozen=True)
class FrequencyGrid:
    f_min: float
    f_max: float
    spacing: float = 0.0005

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if not 0 <= self.f_min <= self.f_max:
            raise ValueError("need 0 <= f_min <= f_max")

    @property
    def f_values(self) -> np.ndarray:
        return _grid_values(self.f_min, self.f_max, self.spacing)

    def __len__(self):
        return self.f_values.size


@lru_cache(maxsize=32)
def _grid_values(f_min: float, f_max: float, spacing: float) -> np.ndarray:
    n = int(np.floor((f_max - f_min) / spacing + 1e-9)) + 1
    values = f_min + spacing * np.arange(n)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class EstimationWindow:
    """``N`` x ``C`` decimated samples at ``effective_fs`` Hz."""

    buffer: np.ndarray
    effective_fs: float

    def __post_init__(self):
        buf = np.asarray(self.buffer, dtype=float)
        if buf.ndim == 1:
            buf = buf[:, None]
        object.__setattr__(self, "buffer", buf)

    @property
    def N(self) -> int:
        return self.buffer.shape[0]

    @property
    def num_channels(self) -> int:
        return self.buffer.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N) / self.effective_fs


@dataclass(frozen=True)
class BreathingParams:
    freq_hz: float
    amplitudes: np.ndarray
    phases: np.ndarray
    psd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    window_len: int = 0
    degenerate: np.ndarray | None = None

    @property
    def bpm(self) -> float:
        return 60.0 * self.freq_hz


@lru_cache(maxsize=8)
def _basis(f_min: float, f_max: float, spacing: float, N: int, fs: float) -> np.ndarray:
    """G x N matrix of exp(-j 2 pi f t_n)."""
    f = _grid_values(f_min, f_max, spacing)
    t = np.arange(N) / fs
    E = np.exp(-2j * np.pi * np.outer(f, t))
    E.setflags(write=False)
    return E


@lru_cache(maxsize=8)
def _gram_inverse(f_min: float, f_max: float, spacing: float, N: int, fs: float) -> np.ndarray:
    """Per-frequency (pseudo-)inverse of the 2x2 Gram matrix of the cos/sin regressors."""
    E = _basis(f_min, f_max, spacing, N, fs)
    s2 = (E * E).sum(axis=1).conj()  # sum_n exp(+j 2 theta_n)
    scc = N / 2 + s2.real / 2
    sss = N / 2 - s2.real / 2
    scs = s2.imag / 2
    G = np.stack([np.stack([scc, scs], axis=-1), np.stack([scs, sss], axis=-1)], axis=-2)
    inv = np.linalg.pinv(G, rcond=1e-10, hermitian=True)
    inv.setflags(write=False)
    return inv


def _grid_projection(window: EstimationWindow, grid: FrequencyGrid) -> np.ndarray:
    if len(grid) == 0:
        raise ValueError("empty frequency grid")
    if window.N == 0:
        raise InsufficientDataError("empty estimation window")
    E = _basis(grid.f_min, grid.f_max, grid.spacing, window.N, float(window.effective_fs))
    return E @ window.buffer


def _projection(window: EstimationWindow, freqs_hz) -> np.ndarray:
    """Complex sums sum_n r_c(n) exp(-j 2 pi f t_n); shape (len(freqs), C)."""
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    E = np.exp(-2j * np.pi * np.outer(f, window.times))
    return E @ window.buffer


def periodogram(window: EstimationWindow, grid: FrequencyGrid, per_channel: bool = False) -> np.ndarray:
    """Channel-averaged squared magnitude of the projection at every grid frequency."""
    X = _grid_projection(window, grid)
    power = X.real**2 + X.imag**2
    return power if per_channel else power.mean(axis=1)


def _ml_from_projection(X: np.ndarray, window: EstimationWindow, grid: FrequencyGrid) -> np.ndarray:
    inv = _gram_inverse(grid.f_min, grid.f_max, grid.spacing, window.N, float(window.effective_fs))
    c, s = X.real, -X.imag  # sum r cos, sum r sin
    a, b, d = inv[:, 0, 0, None], inv[:, 0, 1, None], inv[:, 1, 1, None]
    return (a * c * c + 2 * b * c * s + d * s * s).mean(axis=1)


def ml_objective(window: EstimationWindow, grid: FrequencyGrid) -> np.ndarray:
    """Channel-averaged energy captured by a least-squares sinusoid fit at each grid frequency.

    Maximizing it over the grid maximizes the Gaussian log-likelihood; for
    ``N`` much larger than a period it tends to ``(2/N)`` times the periodogram.
    """
    return _ml_from_projection(_grid_projection(window, grid), window, grid)


def estimate_frequency(psd: np.ndarray, grid: FrequencyGrid) -> float:
    """Grid frequency of the largest power; the first (lowest) one wins ties."""
    psd = np.asarray(psd)
    if psd.shape != (len(grid),):
        raise ValueError("psd is not aligned with the grid")
    return float(grid.f_values[int(np.argmax(psd))])


def estimate_amplitude(window: EstimationWindow, freq_hz: float) -> np.ndarray:
    return 2.0 / window.N * np.abs(_projection(window, freq_hz)[0])


def estimate_phase(window: EstimationWindow, freq_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel phase in [-pi, pi) plus a mask of channels with zero projection.

    Degenerate channels report phase 0.
    """
    t = window.times
    arg = 2 * np.pi * freq_hz * t
    s = np.sin(arg) @ window.buffer
    c = np.cos(arg) @ window.buffer
    degenerate = (s == 0) & (c == 0)
    phase = np.arctan2(-s, c)
    phase = np.where(phase >= np.pi, phase - 2 * np.pi, phase)
    return np.where(degenerate, 0.0, phase), degenerate


def model_signal(params: BreathingParams, N: int, effective_fs: float) -> np.ndarray:
    t = np.arange(N) / effective_fs
    return params.amplitudes * np.cos(2 * np.pi * params.freq_hz * t[:, None] + params.phases)


def log_likelihood(window: EstimationWindow, params: BreathingParams) -> float:
    """Equal-variance Gaussian log-likelihood up to constants: -1/2 sum of squared residuals."""
    resid = window.buffer - model_signal(params, window.N, window.effective_fs)
    return -0.5 * float(np.sum(resid * resid))


def estimate(window: EstimationWindow, grid: FrequencyGrid, expected_len: int | None = None) -> BreathingParams:
    """Frequency, amplitudes and phases of the breathing sinusoid in ``window``."""
    if window.N == 0 or (expected_len is not None and window.N < expected_len):
        raise InsufficientDataError(f"window holds {window.N} samples, need {expected_len or 1}")
    X = _grid_projection(window, grid)
    psd = (X.real**2 + X.imag**2).mean(axis=1)
    f_hat = estimate_frequency(_ml_from_projection(X, window, grid), grid)
    X = _projection(window, f_hat)[0]
    amps = 2.0 / window.N * np.abs(X)
    phases, degenerate = estimate_phase(window, f_hat)
    return BreathingParams(f_hat, amps, phases, psd, window.N, degenerate)


def residuals(window: EstimationWindow, params: BreathingParams) -> np.ndarray:
    return window.buffer - model_signal(params, window.N, window.effective_fs)
