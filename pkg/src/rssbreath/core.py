"""Shared domain types, configuration and trace file I/O."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class ConfigError(ValueError):
    """A parameter combination violates a configuration invariant."""


class TraceFormatError(ValueError):
    """A trace file does not follow the CSV trace format."""


class State(enum.IntEnum):
    """System state. S0 (nobody present) is not modelled."""

    S1 = 1  # breathing, no motion interference
    S2 = 2  # motion interference

    @classmethod
    def parse(cls, text: str) -> "State":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown state {text!r}") from None


class VectorKind(enum.Enum):
    RAW = "raw"
    MEAN_REMOVED = "mean_removed"
    DECIMATED = "decimated"


@dataclass(frozen=True)
class ChannelVector:
    """One communication cycle worth of per-channel dB values."""

    values: np.ndarray
    kind: VectorKind = VectorKind.RAW

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class PipelineConfig:
    """Processing parameters. Defaults reproduce the experimental setup
    (16 channels hopped every 1 ms, so 62.5 Hz per channel).

    ``mean_window`` defaults to ``round(fs_hz / f_max)`` and the decimating
    filter edges default to ``f_min`` (passband) and ``f_max`` (stopband).
    """

    fs_hz: float = 62.5
    num_channels: int = 16
    f_min: float = 0.1
    f_max: float = 1.0
    mean_window: int | None = None
    decimation: int = 10
    est_window_s: float = 30.0
    freq_grid_hz: float = 0.0005
    ripple_db: float = 0.05
    atten_db: float = 40.0
    passband_hz: float | None = None
    stopband_hz: float | None = None

    def __post_init__(self):
        if self.mean_window is None and self.f_max > 0 and self.fs_hz > 0:
            object.__setattr__(self, "mean_window", max(1, round(self.fs_hz / self.f_max)))
        if self.passband_hz is None:
            object.__setattr__(self, "passband_hz", self.f_min)
        if self.stopband_hz is None:
            object.__setattr__(self, "stopband_hz", self.f_max)
        self.validate()

    def validate(self) -> None:
        if not (self.fs_hz > 0 and math.isfinite(self.fs_hz)):
            raise ConfigError(f"fs_hz must be positive, got {self.fs_hz}")
        if self.num_channels < 1:
            raise ConfigError("num_channels must be >= 1")
        if not 0 < self.f_min < self.f_max:
            raise ConfigError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if not self.f_max < self.fs_hz / 2:
            raise ConfigError(
                f"f_max={self.f_max} Hz is not below the Nyquist frequency {self.fs_hz / 2} Hz"
            )
        if self.decimation < 1:
            raise ConfigError("decimation must be >= 1")
        if self.f_max > self.decimated_fs / 2:
            raise ConfigError(
                f"decimated rate fs/M = {self.decimated_fs:.4g} Hz cannot represent "
                f"f_max = {self.f_max} Hz (need f_max <= fs/(2M))"
            )
        if self.mean_window < 1:
            raise ConfigError("mean_window must be >= 1")
        if self.freq_grid_hz <= 0:
            raise ConfigError("freq_grid_hz must be positive")
        if self.est_window_s <= 0:
            raise ConfigError("est_window_s must be positive")
        if self.ripple_db <= 0 or self.atten_db <= 0:
            raise ConfigError("ripple_db and atten_db must be positive")
        if not 0 < self.passband_hz < self.stopband_hz < self.fs_hz / 2:
            raise ConfigError("need 0 < passband_hz < stopband_hz < fs_hz/2")

    @property
    def decimated_fs(self) -> float:
        return self.fs_hz / self.decimation

    @property
    def window_len(self) -> int:
        """Number of decimated samples per estimate."""
        return max(1, round(self.est_window_s * self.fs_hz / self.decimation))

    def replace(self, **changes) -> "PipelineConfig":
        # derived defaults are recomputed unless explicitly given
        base = dataclasses.asdict(self)
        for key in ("mean_window", "passband_hz", "stopband_hz"):
            if key not in changes and _was_derived(self, key):
                base[key] = None
        base.update(changes)
        return PipelineConfig(**base)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "PipelineConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in values:
                raw = values[f.name]
                kwargs[f.name] = int(raw) if f.name in _INT_FIELDS else float(raw)
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, str]:
        return {k: _fmt(v) for k, v in dataclasses.asdict(self).items()}


_INT_FIELDS = {"num_channels", "mean_window", "decimation"}


def _was_derived(cfg: PipelineConfig, key: str) -> bool:
    if key == "mean_window":
        return cfg.mean_window == max(1, round(cfg.fs_hz / cfg.f_max))
    if key == "passband_hz":
        return cfg.passband_hz == cfg.f_min
    return cfg.stopband_hz == cfg.f_max


@dataclass(frozen=True)
class RssTrace:
    """K x C matrix of per-cycle RSS readings in dBm.

    Row ``k`` holds one full communication cycle; ``cycle`` carries the
    original cycle numbers so decimated copies keep their provenance.
    """

    samples: np.ndarray
    fs_hz: float
    quant_step_db: float = 1.0
    cycle: np.ndarray | None = field(default=None)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2:
            raise TraceFormatError("samples must be a K x C matrix")
        if samples.shape[1] < 1:
            raise TraceFormatError("trace needs at least one channel")
        if not np.all(np.isfinite(samples)):
            raise TraceFormatError("trace contains non-finite samples")
        if self.fs_hz <= 0:
            raise TraceFormatError("fs_hz must be positive")
        if self.quant_step_db < 0:
            raise TraceFormatError("quant_step_db must be >= 0")
        if self.quant_step_db > 0 and samples.size:
            steps = samples / self.quant_step_db
            if np.max(np.abs(steps - np.round(steps))) > 1e-6:
                raise TraceFormatError(
                    f"samples are not multiples of the {self.quant_step_db} dB quantization step"
                )
        cycle = np.arange(samples.shape[0]) if self.cycle is None else np.asarray(self.cycle, dtype=np.int64)
        if cycle.shape != (samples.shape[0],):
            raise TraceFormatError("cycle index length does not match row count")
        samples.setflags(write=False)
        cycle.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "cycle", cycle)

    @property
    def num_cycles(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_cycles / self.fs_hz

    def row(self, k: int) -> ChannelVector:
        return ChannelVector(self.samples[k], VectorKind.RAW)

    def select_channels(self, channels: Iterable[int]) -> "RssTrace":
        idx = list(channels)
        return RssTrace(self.samples[:, idx], self.fs_hz, self.quant_step_db, self.cycle)


def _fmt(value) -> str:
    """Shortest text that round-trips a number; integral floats lose the '.0'."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _fmt_header_float(value: float) -> str:
    return repr(float(value))


def write_trace(trace: RssTrace, path: str | Path) -> None:
    """Write ``trace`` in canonical CSV form (inverse of :func:`read_trace`)."""
    lines = [
        f"#fs_hz={_fmt_header_float(trace.fs_hz)}",
        f"#channels={trace.num_channels}",
        f"#quant_step_db={_fmt_header_float(trace.quant_step_db)}",
    ]
    for k, row in zip(trace.cycle, trace.samples):
        lines.append(",".join([str(int(k))] + [_fmt(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_HEADER_KEYS = ("fs_hz", "channels", "quant_step_db")


def read_trace(path: str | Path) -> RssTrace:
    """Parse a CSV trace with a ``#key=value`` header.

    Raises
    ------
    TraceFormatError
        On a malformed or incomplete header, ragged rows or non-numeric cells.
        Messages carry the 1-based line number.
    """
    header: dict[str, str] = {}
    cycles: list[int] = []
    rows: list[list[float]] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if rows:
                raise TraceFormatError(f"line {lineno}: header line after data rows")
            key, sep, value = line[1:].partition("=")
            if not sep:
                raise TraceFormatError(f"line {lineno}: malformed header {line!r}")
            header[key.strip()] = value.strip()
            continue
        missing = [k for k in _HEADER_KEYS if k not in header]
        if missing:
            raise TraceFormatError(f"line {lineno}: header is missing {', '.join(missing)}")
        channels = _header_int(header, "channels")
        cells = line.split(",")
        if len(cells) != channels + 1:
            raise TraceFormatError(
                f"line {lineno}: expected {channels} RSS values, found {len(cells) - 1}"
            )
        try:
            cycles.append(int(cells[0]))
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise TraceFormatError(f"header is missing {', '.join(missing)}")
    channels = _header_int(header, "channels")
    if channels < 1:
        raise TraceFormatError("channels must be >= 1")
    try:
        fs = float(header["fs_hz"])
        quant = float(header["quant_step_db"])
    except ValueError as exc:
        raise TraceFormatError(f"bad header value: {exc}") from None
    samples = np.array(rows, dtype=float).reshape(len(rows), channels)
    return RssTrace(samples, fs, quant, np.array(cycles, dtype=np.int64))


def _header_int(header: Mapping[str, str], key: str) -> int:
    try:
        return int(header[key])
    except ValueError:
        raise TraceFormatError(f"header {key}={header[key]!r} is not an integer") from None


def read_keyvalue(path: str | Path) -> dict[str, str]:
    """Read a flat ``key=value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def write_keyvalue(values: Mapping[str, object], path: str | Path, comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines += [f"{k}={v if isinstance(v, str) else _fmt(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
