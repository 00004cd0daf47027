"""End-to-end processing: mean removal, motion gating, decimation, estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import detect_peaks, failure_rate, mean_error_bpm, phase_dispersion, rank_channels
from .core import ConfigError, PipelineConfig, RssTrace, State, _fmt
from .estimator import BreathingParams, EstimationWindow, FrequencyGrid, estimate
from .fir import FirDecimator
from .motion import HmmFilter, HmmParams
from .preprocess import remove_mean


@dataclass
class Estimate:
    t_s: float
    end_index: int  # input cycle index of the newest sample in the window
    start_index: int  # oldest input cycle that influenced the window
    params: BreathingParams
    peaks: list[tuple[float, float]] = field(default_factory=list)
    r2: float = float("nan")
    channels: tuple[int, ...] | None = None

    @property
    def freq_hz(self) -> float:
        return self.params.freq_hz


@dataclass
class RunReport:
    config: PipelineConfig
    hmm: HmmParams
    estimates: list[Estimate]
    states: np.ndarray
    p_s2: np.ndarray
    num_taps: int
    gated: bool = True
    version: str = __version__

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([e.freq_hz for e in self.estimates])

    @property
    def s2_fraction(self) -> float:
        return float(np.mean(self.states == int(State.S2))) if self.states.size else 0.0

    def peak_summary(self, n: int) -> list[float]:
        """Median over windows of the ``n`` strongest peak frequencies, sorted ascending."""
        rows = [sorted(f for f, _ in e.peaks[:n]) for e in self.estimates if len(e.peaks) >= n]
        if not rows:
            return []
        return [float(v) for v in np.median(np.array(rows), axis=0)]

    def summary(self, truth_hz: np.ndarray | None = None, peaks: int = 0) -> dict[str, object]:
        out: dict[str, object] = {
            "version": self.version,
            "estimates": len(self.estimates),
            "cycles": int(self.states.size),
            "s2_fraction": self.s2_fraction,
            "gating": "on" if self.gated else "off",
            "filter_taps": self.num_taps,
        }
        if not self.estimates:
            if self.gated and self.s2_fraction > 0:
                out["note"] = "no estimates: motion gating left no S1 span long enough to fill the estimation window"
            else:
                out["note"] = "no estimates: trace is shorter than one estimation window"
            return out
        f = self.frequencies
        out["mean_freq_hz"] = float(f.mean())
        out["mean_bpm"] = float(60 * f.mean())
        r2 = np.array([e.r2 for e in self.estimates])
        if np.any(np.isfinite(r2)):
            out["median_r2"] = float(np.nanmedian(r2))
        if truth_hz is not None:
            truth = np.asarray(truth_hz, dtype=float)
            err = mean_error_bpm(f, truth)
            out["error_bpm"] = err.mean_bpm
            out["abs_error_bpm"] = err.mean_abs_bpm
            out["std_error_bpm"] = err.std_bpm
            out["failure_rate"] = failure_rate(f, truth)
        if peaks:
            for i, pf in enumerate(self.peak_summary(peaks), start=1):
                out[f"peak_{i}_hz"] = pf
                out[f"peak_{i}_bpm"] = 60 * pf
        return out

    def write(self, path: str | Path, truth_hz=None, peaks: int = 0) -> dict[str, Path]:
        """Write estimates CSV at ``path`` plus ``.summary``, ``.states`` (and ``.peaks``) siblings."""
        path = Path(path)
        C = self.config.num_channels
        header = ["t_s", "f_hat_hz", "bpm"] + [f"amp_{c + 1}" for c in range(C)] + [f"phase_{c + 1}" for c in range(C)]
        lines = [",".join(header)]
        for e in self.estimates:
            cells = [_fmt(round(e.t_s, 9)), _fmt(e.freq_hz), _fmt(60 * e.freq_hz)]
            cells += [_fmt(a) for a in e.params.amplitudes] + [_fmt(p) for p in e.params.phases]
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        written = {"estimates": path}
        summary_path = path.with_suffix(".summary.txt")
        items = self.summary(truth_hz, peaks)
        items.update({f"config.{k}": v for k, v in self.config.to_mapping().items()})
        items.update({f"hmm.{k}": v for k, v in self.hmm.to_mapping().items()})
        summary_path.write_text(
            "".join(f"{k}={v if isinstance(v, str) else _fmt(v)}\n" for k, v in items.items()), encoding="utf-8"
        )
        written["summary"] = summary_path

        states_path = path.with_suffix(".states.csv")
        state_lines = ["cycle,state,p_s2"]
        state_lines += [f"{k},{State(int(s)).name},{float(p):.6g}" for k, (s, p) in enumerate(zip(self.states, self.p_s2))]
        states_path.write_text("\n".join(state_lines) + "\n", encoding="utf-8")
        written["states"] = states_path

        if peaks:
            peaks_path = path.with_suffix(".peaks.csv")
            cols = ["t_s"] + [x for i in range(peaks) for x in (f"peak_{i + 1}_hz", f"peak_{i + 1}_power")] + ["r2"]
            plines = [",".join(cols)]
            for e in self.estimates:
                cells = [_fmt(round(e.t_s, 9))]
                for i in range(peaks):
                    cells += [_fmt(e.peaks[i][0]), _fmt(e.peaks[i][1])] if i < len(e.peaks) else ["", ""]
                cells.append(_fmt(e.r2) if math.isfinite(e.r2) else "")
                plines.append(",".join(cells))
            peaks_path.write_text("\n".join(plines) + "\n", encoding="utf-8")
            written["peaks"] = peaks_path
        return written


def clean_mask(states: np.ndarray, span: int) -> np.ndarray:
    """True at cycle ``k`` when cycles ``k - span .. k`` all exist and are S1."""
    K = states.size
    idx = np.where(states == int(State.S2), np.arange(K), -1)
    last_s2 = np.maximum.accumulate(idx) if K else idx
    return (np.arange(K) - span) > last_s2


def run_pipeline(
    trace: RssTrace,
    config: PipelineConfig,
    hmm: HmmParams | None = None,
    *,
    stride: int = 1,
    top_k: int | None = None,
    peaks: int = 0,
    gate: bool = True,
    min_separation_hz: float = 0.03,
    rel_threshold: float = 0.25,
) -> RunReport:
    """Process a whole trace and return every breathing estimate.

    Estimates are produced each ``stride`` decimated samples once the window
    is full.  A window is only filled from decimated samples whose entire
    input support (filter taps plus mean window) lies in detector state S1;
    any S2 sample flushes it.  ``top_k`` re-estimates the frequency from the
    ``top_k`` highest-amplitude channels of each window.
    """
    if trace.num_channels != config.num_channels:
        raise ConfigError(f"trace has {trace.num_channels} channels, config expects {config.num_channels}")
    if not math.isclose(trace.fs_hz, config.fs_hz, rel_tol=1e-9):
        raise ConfigError(f"trace is sampled at {trace.fs_hz} Hz, config expects {config.fs_hz} Hz")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if top_k is not None and not 1 <= top_k <= config.num_channels:
        raise ValueError(f"top_k must be in [1, {config.num_channels}]")
    hmm = hmm or HmmParams()

    L = config.mean_window
    y_tilde = remove_mean(trace.samples, L)
    x = y_tilde.mean(axis=1) if trace.num_cycles else np.zeros(0)
    if gate:
        states, p_s2 = HmmFilter(hmm).run(x)
    else:
        states = np.full(x.size, int(State.S1), dtype=np.int8)
        p_s2 = np.zeros(x.size)

    dec = FirDecimator.design(
        config.fs_hz, config.passband_hz, config.stopband_hz, config.ripple_db, config.atten_db, config.decimation
    )
    r, idx = dec.process(y_tilde)
    span = dec.taps.size - 1 + L - 1
    clean = clean_mask(states, span)[idx] if idx.size else np.zeros(0, dtype=bool)

    N = config.window_len
    grid = FrequencyGrid(config.f_min, config.f_max, config.freq_grid_hz)
    fs_dec = config.decimated_fs
    delay_s = dec.group_delay_samples / config.fs_hz

    estimates: list[Estimate] = []
    run_len = 0
    for j in range(idx.size):
        if not clean[j]:
            run_len = 0
            continue
        run_len += 1
        if run_len < N or (run_len - N) % stride:
            continue
        window = EstimationWindow(r[j - N + 1 : j + 1], fs_dec)
        params = estimate(window, grid, N)
        channels = None
        if top_k is not None and top_k < config.num_channels:
            channels = tuple(rank_channels(params, top_k))
            sub = estimate(EstimationWindow(window.buffer[:, list(channels)], fs_dec), grid, N)
            params = BreathingParams(sub.freq_hz, params.amplitudes, params.phases, sub.psd, N, params.degenerate)
        found = detect_peaks(params.psd, grid, min_separation_hz, rel_threshold) if peaks else []
        try:
            r2 = phase_dispersion(params.phases, params.amplitudes, params.degenerate)
        except ValueError:
            r2 = float("nan")
        end = int(idx[j])
        estimates.append(
            Estimate(
                t_s=end / config.fs_hz - delay_s,
                end_index=end,
                start_index=int(idx[j - N + 1]) - span,
                params=BreathingParams(params.freq_hz, params.amplitudes, params.phases,
                                       np.zeros(0), N, params.degenerate),
                peaks=found[:peaks] if peaks else [],
                r2=r2,
                channels=channels,
            )
        )
    return RunReport(config, hmm, estimates, states, p_s2, dec.taps.size, gate)
