"""Linear-phase FIR low-pass decimator.

Oversampled, coarsely quantized RSS gains effective resolution when it is
low-pass filtered; keeping every M-th output then cuts the estimator's work.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

MAX_TAPS = 4096
RESPONSE_GRID_POINTS = 10_000


class DesignError(ValueError):
    """The requested response cannot be met within ``MAX_TAPS``."""


@dataclass(frozen=True)
class FilterSpec:
    fs_hz: float
    passband_hz: float
    stopband_hz: float
    ripple_db: float
    atten_db: float


def frequency_response(taps: np.ndarray, freqs_hz: np.ndarray, fs_hz: float) -> np.ndarray:
    """Complex response H(f) = sum_i h[i] exp(-j 2 pi f i / fs), evaluated directly."""
    taps = np.asarray(taps, dtype=float)
    i = np.arange(taps.size)
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)[:, None] / fs_hz
    return np.exp(-1j * w * i) @ taps


def check_response(taps: np.ndarray, spec: FilterSpec, points: int = RESPONSE_GRID_POINTS) -> dict:
    """Measure worst-case passband deviation and stopband gain on a dense grid.

    The grid spreads ``points`` frequencies over [0, fs/2] and always includes
    both band edges.
    """
    grid = np.union1d(np.linspace(0, spec.fs_hz / 2, points), [spec.passband_hz, spec.stopband_hz])
    _, H = signal.freqz(taps, worN=grid, fs=spec.fs_hz)
    mag_db = 20 * np.log10(np.maximum(np.abs(H), 1e-300))
    passband = mag_db[grid <= spec.passband_hz]
    stopband = mag_db[grid >= spec.stopband_hz]
    return {
        "ripple_db": float(np.max(np.abs(passband))),
        "stop_db": float(np.max(stopband)),
        "ok": bool(np.max(np.abs(passband)) <= spec.ripple_db and np.max(stopband) <= -spec.atten_db),
    }


def _kaiser_taps(spec: FilterSpec, numtaps: int, atten: float) -> np.ndarray:
    beta = signal.kaiser_beta(atten)
    cutoff = 0.5 * (spec.passband_hz + spec.stopband_hz)
    return signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=spec.fs_hz)


def design_taps(spec: FilterSpec, max_taps: int = MAX_TAPS) -> np.ndarray:
    """Kaiser-window low-pass meeting ``spec``.

    The window is sized from the tighter of the passband ripple and stopband
    attenuation; the length is then grown (odd lengths only, so the filter
    stays type I) until the measured response meets the spec.
    """
    return np.array(_design_taps(spec, max_taps))


@lru_cache(maxsize=64)
def _design_taps(spec: FilterSpec, max_taps: int) -> tuple[float, ...]:
    if not 0 < spec.passband_hz < spec.stopband_hz < spec.fs_hz / 2:
        raise DesignError(
            f"need 0 < passband ({spec.passband_hz}) < stopband ({spec.stopband_hz}) "
            f"< fs/2 ({spec.fs_hz / 2})"
        )
    delta_pass = min(10 ** (spec.ripple_db / 20) - 1, 1 - 10 ** (-spec.ripple_db / 20))
    delta = min(delta_pass, 10 ** (-spec.atten_db / 20))
    atten = -20 * np.log10(delta)
    width = (spec.stopband_hz - spec.passband_hz) / (spec.fs_hz / 2)
    numtaps, _ = signal.kaiserord(atten, width)
    numtaps |= 1
    if numtaps > max_taps:
        raise DesignError(f"spec needs about {numtaps} taps, more than the cap of {max_taps}")
    while numtaps <= max_taps:
        taps = _kaiser_taps(spec, numtaps, atten)
        if check_response(taps, spec)["ok"]:
            return tuple(taps)
        numtaps += 2
    raise DesignError(f"no Kaiser design with <= {max_taps} taps meets the spec")


class FirDecimator:
    """Streaming per-channel FIR filter that keeps inputs with index = 0 (mod M).

    Output ``n`` is ``sum_i h[i] x[nM - i]`` with zero history before the
    first input.
    """

    def __init__(self, taps: np.ndarray, M: int, spec: FilterSpec | None = None):
        taps = np.asarray(taps, dtype=float).reshape(-1)
        if taps.size == 0:
            raise ValueError("empty tap vector")
        if M < 1:
            raise ValueError("decimation factor M must be >= 1")
        self.taps = taps
        self.M = int(M)
        self.spec = spec
        self._history: np.ndarray | None = None  # last len(taps)-1 inputs per channel
        self._count = 0  # inputs consumed so far

    @classmethod
    def design(
        cls,
        fs_hz: float,
        passband_hz: float,
        stopband_hz: float,
        ripple_db: float,
        atten_db: float,
        M: int = 1,
        max_taps: int = MAX_TAPS,
    ) -> "FirDecimator":
        spec = FilterSpec(fs_hz, passband_hz, stopband_hz, ripple_db, atten_db)
        return cls(design_taps(spec, max_taps), M, spec)

    @property
    def group_delay_samples(self) -> float:
        return (self.taps.size - 1) / 2

    @property
    def dc_gain(self) -> float:
        return float(np.sum(self.taps))

    def reset(self) -> None:
        self._history = None
        self._count = 0

    def process(self, block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Filter a K x C block of new inputs.

        Returns the decimated outputs and the absolute input index each one
        was evaluated at.
        """
        x = np.asarray(block, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        ntap = self.taps.size
        if self._history is None:
            self._history = np.zeros((ntap - 1, x.shape[1]))
        elif self._history.shape[1] != x.shape[1]:
            raise ValueError("channel count changed mid-stream")
        ext = np.vstack([self._history, x])
        start = self._count
        first = -start % self.M  # offset in x of the first kept index
        keep = np.arange(first, x.shape[0], self.M)
        if keep.size:
            # windows[k] covers ext[k : k + ntap], i.e. inputs start+k-ntap+1 .. start+k
            windows = sliding_window_view(ext, ntap, axis=0)[keep]  # (n_out, C, ntap)
            out = windows @ self.taps[::-1]
        else:
            out = np.zeros((0, x.shape[1]))
        self._history = ext[ext.shape[0] - (ntap - 1):] if ntap > 1 else ext[:0]
        self._count += x.shape[0]
        return out, start + keep

    def export_taps(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{float(h)!r}\n" for h in self.taps), encoding="utf-8")


def read_taps(path: str | Path) -> np.ndarray:
    return np.array([float(line) for line in Path(path).read_text().split()], dtype=float)
