"""Evaluation helpers: error metric, channel ranking, peak picking, phase
dispersion, KS goodness of fit and parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .core import ConfigError, PipelineConfig
from .estimator import BreathingParams, FrequencyGrid

FAILURE_THRESHOLD_BPM = 1.0
KS_CRITICAL_95 = 1.358


@dataclass(frozen=True)
class ErrorSummary:
    """Signed mean error (bpm) plus magnitude diagnostics."""

    mean_bpm: float
    mean_abs_bpm: float
    std_bpm: float
    count: int

    def __float__(self):
        return self.mean_bpm


def mean_error_bpm(estimates: Sequence[float], truth_hz) -> ErrorSummary:
    f_hat = np.asarray(estimates, dtype=float)
    if f_hat.size == 0:
        raise ValueError("no estimates to score")
    err = 60.0 * (f_hat - np.asarray(truth_hz, dtype=float))
    return ErrorSummary(float(err.mean()), float(np.abs(err).mean()), float(err.std()), int(f_hat.size))


def failure_rate(estimates: Sequence[float], truth_hz, threshold_bpm: float = FAILURE_THRESHOLD_BPM) -> float:
    err = 60.0 * np.abs(np.asarray(estimates, dtype=float) - np.asarray(truth_hz, dtype=float))
    if err.size == 0:
        raise ValueError("no estimates to score")
    return float(np.mean(err > threshold_bpm))


def rank_channels(params: BreathingParams | np.ndarray, k: int) -> list[int]:
    """Indices of the ``k`` largest amplitudes, largest first; ties go to the lower index."""
    amps = np.asarray(params.amplitudes if isinstance(params, BreathingParams) else params, dtype=float)
    if not 1 <= k <= amps.size:
        raise ValueError(f"k must be in [1, {amps.size}], got {k}")
    order = np.argsort(-amps, kind="stable")
    return [int(i) for i in order[:k]]


def detect_peaks(
    psd: np.ndarray,
    grid: FrequencyGrid | np.ndarray,
    min_separation_hz: float = 0.03,
    rel_threshold: float = 0.25,
) -> list[tuple[float, float]]:
    """Local maxima of ``psd`` at least ``rel_threshold`` times the global maximum.

    Peaks closer than ``min_separation_hz`` to a stronger accepted peak are
    dropped.  Returns ``(frequency, power)`` pairs, strongest first.
    """
    psd = np.asarray(psd, dtype=float)
    f = grid.f_values if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    if psd.shape != f.shape:
        raise ValueError("psd is not aligned with the grid")
    if psd.size == 0:
        return []
    top = psd.max()
    if not top > 0:
        return []
    # plateaus count once, at their first sample
    left = np.concatenate([[-np.inf], psd[:-1]])
    right = np.concatenate([psd[1:], [-np.inf]])
    is_max = (psd > left) & (psd >= right)
    idx = np.flatnonzero(is_max & (psd >= rel_threshold * top))
    idx = idx[np.argsort(-psd[idx], kind="stable")]
    kept: list[int] = []
    for i in idx:
        if all(abs(f[i] - f[j]) >= min_separation_hz for j in kept):
            kept.append(int(i))
    return [(float(f[i]), float(psd[i])) for i in kept]


def phase_dispersion(phases, amplitudes, degenerate=None) -> float:
    """Amplitude-weighted resultant length of the doubled phase angles.

    Doubling folds antipodal channels together, so a single breather (whose
    channel phases sit at two modes pi apart) scores near 1 while a spread of
    phases scores lower.
    """
    phases = np.asarray(phases, dtype=float)
    w = np.asarray(amplitudes, dtype=float)
    if phases.shape != w.shape:
        raise ValueError("phases and amplitudes differ in length")
    if phases.size < 2:
        raise ValueError("need at least two channels")
    valid = w > 0
    if degenerate is not None:
        valid &= ~np.asarray(degenerate, dtype=bool)
    if not np.any(valid):
        raise ValueError("every channel is degenerate")
    z = np.sum(w[valid] * np.exp(2j * phases[valid]))
    return float(min(1.0, abs(z) / np.sum(w[valid])))


@dataclass(frozen=True)
class KsResult:
    D: float
    n: int
    critical: float

    @property
    def passed(self) -> bool:
        return self.D <= self.critical


def ks_statistic(samples, sigma: float, confidence_coef: float = KS_CRITICAL_95) -> KsResult:
    """One-sample Kolmogorov-Smirnov distance to N(0, sigma^2).

    The 95% decision uses the asymptotic critical value 1.358 / sqrt(n).
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 50:
        raise ValueError(f"KS test needs at least 50 samples, got {n}")
    if not sigma > 0:
        raise ValueError("reference sigma must be positive")
    cdf = ndtr(x / sigma)
    i = np.arange(1, n + 1)
    D = max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n))
    return KsResult(float(D), n, confidence_coef / math.sqrt(n))


# --- sweeps -----------------------------------------------------------------

SWEEP_AXES = ("M", "delta", "channel_count")

# fraction of the new Nyquist rate the search band may reach after downsampling
_NYQUIST_MARGIN = 0.95


@dataclass
class SweepPoint:
    value: float
    mean_error_bpm: float
    failure_rate: float
    signed_error_bpm: float = float("nan")
    estimates: int = 0
    mean_freq_hz: float = float("nan")


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint] = field(default_factory=list)
    failure_threshold_bpm: float = FAILURE_THRESHOLD_BPM

    def to_csv(self) -> str:
        lines = ["value,mean_error_bpm,failure_rate"]
        for p in self.points:
            lines.append(f"{p.value:g},{p.mean_error_bpm:.6f},{p.failure_rate:.6f}")
        return "\n".join(lines) + "\n"


def config_for_decimation(config: PipelineConfig, M: int) -> PipelineConfig:
    """Same setup with decimation ``M``; the search band is clipped to the decimated Nyquist rate."""
    if int(M) != M or M < 1:
        raise ValueError(f"invalid decimation factor {M}")
    f_max = min(config.f_max, config.fs_hz / (2 * M))
    if f_max <= config.f_min:
        raise ValueError(f"fs/M = {config.fs_hz / M:g} Hz leaves no search band above f_min")
    try:
        return config.replace(decimation=int(M), f_max=f_max, mean_window=config.mean_window,
                              passband_hz=None, stopband_hz=None)
    except ConfigError as exc:
        raise ValueError(str(exc)) from None


def config_for_rate(config: PipelineConfig, fs_hz: float) -> PipelineConfig:
    """Adapt ``config`` to a lower per-channel sampling rate.

    The search band is clipped below the new Nyquist rate, the mean window
    keeps its one-``1/f_max`` length and the decimation factor shrinks so the
    decimated rate still covers the band.
    """
    f_max = min(config.f_max, _NYQUIST_MARGIN * fs_hz / 2)
    if f_max <= config.f_min:
        raise ValueError(f"fs = {fs_hz:g} Hz leaves no search band above f_min")
    M = max(1, min(config.decimation, int(math.floor(fs_hz / (2 * f_max)))))
    try:
        return config.replace(fs_hz=fs_hz, f_max=f_max, decimation=M, mean_window=None,
                              passband_hz=None, stopband_hz=None)
    except ConfigError as exc:
        raise ValueError(str(exc)) from None


def run_sweep(
    scenario,
    axis: str,
    values: Sequence[float],
    config: PipelineConfig | None = None,
    hmm=None,
    estimate_interval_s: float = 1.0,
    gate: bool = True,
) -> SweepResult:
    """Run the full pipeline on ``scenario`` once per axis value.

    ``M`` changes the decimation factor, ``delta`` keeps every delta-th cycle
    of the generated trace, and ``channel_count`` estimates the frequency from
    the highest-amplitude channels only.  Every estimate is scored against the
    ground-truth frequency of the first person at the window's end.
    ``gate=False`` bypasses the motion detector, for scenarios known to be
    motion free.
    """
    from .pipeline import run_pipeline
    from .synth import downsample_trace, downsample_truth, generate

    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ValueError("no sweep values given")
    trace, truth = generate(scenario)
    if truth.num_persons == 0:
        raise ValueError("scenario has nobody breathing")
    if config is None:
        config = PipelineConfig(fs_hz=scenario.fs_hz, num_channels=scenario.num_channels)

    result = SweepResult(axis)
    for value in values:
        kwargs = {}
        tr, tt, cfg = trace, truth, config
        if axis == "M":
            cfg = config_for_decimation(config, value)
        elif axis == "delta":
            if int(value) != value or value < 1:
                raise ValueError(f"invalid delta {value}")
            tr = downsample_trace(trace, int(value))
            tt = downsample_truth(truth, int(value))
            cfg = config_for_rate(config, tr.fs_hz)
        else:
            if int(value) != value or not 1 <= value <= config.num_channels:
                raise ValueError(f"invalid channel count {value}")
            kwargs["top_k"] = int(value)
        stride = max(1, round(estimate_interval_s * cfg.decimated_fs))
        report = run_pipeline(tr, cfg, hmm, stride=stride, gate=gate, **kwargs)
        point = SweepPoint(float(value), float("nan"), float("nan"))
        if report.estimates:
            f_hat = report.frequencies
            f_true = tt.person_freqs[[e.end_index for e in report.estimates], 0]
            err = mean_error_bpm(f_hat, f_true)
            point = SweepPoint(
                float(value), err.mean_abs_bpm, failure_rate(f_hat, f_true),
                err.mean_bpm, len(report.estimates), float(np.mean(f_hat)),
            )
        result.points.append(point)
    return result
