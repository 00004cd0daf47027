"""Synthetic RSS traces with ground truth.

Each channel carries the sum of the breathing sinusoids of everyone present,
a per-channel mean level, Gaussian noise whose scale depends on the segment
state, and finally the receiver's quantizer.  Motion interference (S2) is
dB-domain Gaussian fading shared by all channels, which is the log-normal
fading model the motion detector assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, RssTrace, State, _fmt

# Conditional observation scales of the detector (dB).
SIGMA_S1 = 0.197
SIGMA_S2 = 2.385

MEAN_LEVEL_RANGE_DBM = (-80.0, -40.0)


@dataclass(frozen=True)
class PersonSignal:
    freq_hz: float
    amplitudes: np.ndarray
    phases: np.ndarray
    phase_jitter_rad: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float).reshape(-1)
        phases = np.array(self.phases, dtype=float).reshape(-1)
        if amps.shape != phases.shape:
            raise ConfigError("amplitudes and phases must have one entry per channel")
        if np.any(amps < 0):
            raise ConfigError("amplitudes must be >= 0")
        if self.freq_hz <= 0:
            raise ConfigError("breathing frequency must be positive")
        if self.phase_jitter_rad < 0:
            raise ConfigError("phase_jitter_rad must be >= 0")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)


@dataclass(frozen=True)
class Segment:
    """A stretch of constant system state.

    ``common_mode`` selects noise shared by every channel (fading) rather than
    independent per-channel noise; it defaults to True for S2 only.
    """

    state: State
    duration_s: float
    noise_sigma_db: float
    persons: tuple[PersonSignal, ...] = ()
    common_mode: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "state", State(self.state))
        object.__setattr__(self, "persons", tuple(self.persons))
        if self.common_mode is None:
            object.__setattr__(self, "common_mode", self.state is State.S2)
        if not self.duration_s > 0:
            raise ConfigError("segment duration must be positive")
        # zero noise is allowed for analytic checks
        if self.noise_sigma_db < 0:
            raise ConfigError("noise_sigma_db must be >= 0")


@dataclass(frozen=True)
class SynthScenario:
    fs_hz: float
    num_channels: int
    segments: tuple[Segment, ...]
    seed: int = 0
    quant_step_db: float = 1.0
    channel_means: np.ndarray | None = None
    f_min: float = 0.1
    f_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ConfigError("scenario has no segments")
        if self.num_channels < 1:
            raise ConfigError("num_channels must be >= 1")
        if self.fs_hz <= 0:
            raise ConfigError("fs_hz must be positive")
        if self.quant_step_db < 0:
            raise ConfigError("quant_step_db must be >= 0")
        for seg in self.segments:
            for p in seg.persons:
                if p.amplitudes.size != self.num_channels:
                    raise ConfigError("person amplitude vector length differs from num_channels")
                if not self.f_min <= p.freq_hz <= self.f_max:
                    raise ConfigError(
                        f"breathing frequency {p.freq_hz} Hz outside [{self.f_min}, {self.f_max}]"
                    )
        if self.channel_means is not None:
            means = np.array(self.channel_means, dtype=float).reshape(-1)
            if means.size != self.num_channels:
                raise ConfigError("channel_means length differs from num_channels")
            object.__setattr__(self, "channel_means", means)
        if self.num_cycles < 1:
            raise ConfigError("scenario is shorter than one communication cycle")

    @property
    def segment_cycles(self) -> list[int]:
        bounds = np.round(np.cumsum([0.0] + [s.duration_s for s in self.segments]) * self.fs_hz)
        return [int(b) for b in np.diff(bounds)]

    @property
    def num_cycles(self) -> int:
        return int(round(sum(s.duration_s for s in self.segments) * self.fs_hz))

    @property
    def duration_s(self) -> float:
        return sum(s.duration_s for s in self.segments)


@dataclass(frozen=True)
class GroundTruth:
    """Per-row state and breathing frequency of each person (NaN when absent)."""

    states: np.ndarray
    person_freqs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def num_persons(self) -> int:
        return self.person_freqs.shape[1]


def bimodal_phases(num_channels: int, base: float, rng: np.random.Generator) -> np.ndarray:
    """Half of the channels (chosen at random) at ``base``, the rest at ``base + pi``."""
    flip = np.zeros(num_channels, dtype=bool)
    flip[rng.permutation(num_channels)[: num_channels // 2]] = True
    return base + np.pi * flip


def _phase_track(person: PersonSignal, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random-walk phase deviation, one step per breath, linearly interpolated."""
    if person.phase_jitter_rad == 0 or t.size == 0:
        return np.zeros_like(t)
    period = 1.0 / person.freq_hz
    n_knots = int(np.ceil((t[-1] - t[0]) / period)) + 2
    knots_t = t[0] + period * np.arange(n_knots)
    steps = rng.normal(0.0, person.phase_jitter_rad, n_knots)
    steps[0] = 0.0
    return np.interp(t, knots_t, np.cumsum(steps))


def quantize(values: np.ndarray, step: float) -> np.ndarray:
    """Round to the nearest multiple of ``step`` (ties to even); ``step=0`` is a no-op."""
    if step == 0:
        return np.asarray(values, dtype=float)
    return np.round(np.asarray(values) / step) * step


def generate(scenario: SynthScenario) -> tuple[RssTrace, GroundTruth]:
    """Render ``scenario`` to a quantized trace plus its ground truth."""
    rng = np.random.default_rng(scenario.seed)
    C = scenario.num_channels
    K = scenario.num_cycles
    if scenario.channel_means is None:
        means = rng.uniform(*MEAN_LEVEL_RANGE_DBM, size=C)
    else:
        means = scenario.channel_means

    y = np.empty((K, C))
    states = np.empty(K, dtype=np.int8)
    max_persons = max(len(s.persons) for s in scenario.segments)
    freqs = np.full((K, max_persons), np.nan)

    start = 0
    for seg, n in zip(scenario.segments, scenario.segment_cycles):
        stop = start + n
        k = np.arange(start, stop)
        t = k / scenario.fs_hz
        block = np.broadcast_to(means, (n, C)).copy()
        for j, person in enumerate(seg.persons):
            jitter = _phase_track(person, t, rng)
            arg = 2 * np.pi * person.freq_hz * t + jitter
            block += person.amplitudes * np.cos(arg[:, None] + person.phases)
            freqs[start:stop, j] = person.freq_hz
        if seg.noise_sigma_db > 0:
            if seg.common_mode:
                block += rng.normal(0.0, seg.noise_sigma_db, size=(n, 1))
            else:
                block += rng.normal(0.0, seg.noise_sigma_db, size=(n, C))
        y[start:stop] = block
        states[start:stop] = int(seg.state)
        start = stop

    y = quantize(y, scenario.quant_step_db)
    trace = RssTrace(y, scenario.fs_hz, scenario.quant_step_db)
    return trace, GroundTruth(states, freqs)


def downsample_trace(trace: RssTrace, delta: int) -> RssTrace:
    """Keep every ``delta``-th cycle; the per-channel rate drops by ``delta``."""
    if int(delta) != delta or delta < 1:
        raise ValueError(f"delta must be an integer >= 1, got {delta}")
    delta = int(delta)
    return RssTrace(
        trace.samples[::delta], trace.fs_hz / delta, trace.quant_step_db, trace.cycle[::delta]
    )


def downsample_truth(truth: GroundTruth, delta: int) -> GroundTruth:
    return GroundTruth(truth.states[::delta], truth.person_freqs[::delta])


# --- canned scenarios -------------------------------------------------------


def random_person(
    num_channels: int,
    freq_hz: float,
    rng: np.random.Generator,
    amp_range: tuple[float, float] = (0.1, 0.4),
    phase: float | None = None,
    bimodal: bool = True,
    active_channels: Sequence[int] | None = None,
    phase_jitter_rad: float = 0.0,
) -> PersonSignal:
    """Person with uniformly drawn amplitudes and (by default) bimodal phases.

    Channels not listed in ``active_channels`` get zero amplitude.
    """
    amps = rng.uniform(*amp_range, size=num_channels)
    if active_channels is not None:
        mask = np.zeros(num_channels, dtype=bool)
        mask[list(active_channels)] = True
        amps = np.where(mask, amps, 0.0)
    base = rng.uniform(-np.pi, np.pi) if phase is None else phase
    if bimodal:
        phases = bimodal_phases(num_channels, base, rng)
    else:
        phases = rng.uniform(-np.pi, np.pi, size=num_channels)
    return PersonSignal(freq_hz, amps, phases, phase_jitter_rad)


def breathing_scenario(
    duration_s: float = 300.0,
    freq_hz: float = 0.2,
    seed: int = 0,
    fs_hz: float = 62.5,
    num_channels: int = 16,
    sigma_db: float = SIGMA_S1,
    quant_step_db: float = 1.0,
    amp_range: tuple[float, float] = (0.1, 0.4),
    active_channels: Sequence[int] | None = None,
    phase_jitter_rad: float = 0.0,
) -> SynthScenario:
    """A single person breathing with no motion interference."""
    rng = np.random.default_rng([seed, 1])
    person = random_person(
        num_channels, freq_hz, rng, amp_range,
        active_channels=active_channels, phase_jitter_rad=phase_jitter_rad,
    )
    seg = Segment(State.S1, duration_s, sigma_db, (person,))
    return SynthScenario(fs_hz, num_channels, (seg,), seed, quant_step_db)


def motion_scenario(
    cycles: int = 4,
    s1_s: float = 60.0,
    s2_s: float = 10.0,
    freq_hz: float = 0.2,
    seed: int = 0,
    fs_hz: float = 62.5,
    num_channels: int = 16,
    quant_step_db: float = 1.0,
) -> SynthScenario:
    """Alternating breathing-only and motion-interference segments."""
    rng = np.random.default_rng([seed, 2])
    person = random_person(num_channels, freq_hz, rng)
    segs = []
    for _ in range(cycles):
        segs.append(Segment(State.S1, s1_s, SIGMA_S1, (person,)))
        segs.append(Segment(State.S2, s2_s, SIGMA_S2, (person,)))
    segs.append(Segment(State.S1, s1_s, SIGMA_S1, (person,)))
    return SynthScenario(fs_hz, num_channels, tuple(segs), seed, quant_step_db)


def two_person_scenario(
    freqs_hz: tuple[float, float] = (0.2, 0.25),
    timing_offset_rad: float = 0.0,
    duration_s: float = 300.0,
    seed: int = 0,
    fs_hz: float = 62.5,
    num_channels: int = 16,
    sigma_db: float = SIGMA_S1,
    quant_step_db: float = 1.0,
) -> SynthScenario:
    """Two people in the link. Each person's channel phases are bimodal about
    a shared reference; the second person's breathing lags by ``timing_offset_rad``.
    """
    rng = np.random.default_rng([seed, 3])
    base = rng.uniform(-np.pi, np.pi)
    p1 = random_person(num_channels, freqs_hz[0], rng, phase=base)
    p2 = random_person(num_channels, freqs_hz[1], rng, phase=base + timing_offset_rad)
    seg = Segment(State.S1, duration_s, sigma_db, (p1, p2))
    return SynthScenario(fs_hz, num_channels, (seg,), seed, quant_step_db)


# --- scenario files ---------------------------------------------------------
#
# Flat key=value lines.  Persons are declared with dotted keys and segments
# are listed in order:
#
#   fs_hz=62.5
#   channels=16
#   seed=7
#   person.a.freq_hz=0.2
#   person.a.amp_min=0.1
#   person.a.amp_max=0.4
#   segment=S1,300,0.197,a
#   segment=S2,10,2.385,a
#
# A fifth segment field, ``common`` or ``independent``, overrides whether the
# noise is shared by all channels (default: shared in S2 only).


_PERSON_KEYS = {"freq_hz", "amp_min", "amp_max", "phase", "bimodal", "jitter", "channels"}


def parse_scenario(text: str) -> SynthScenario:
    top: dict[str, str] = {}
    persons: dict[str, dict[str, str]] = {}
    segments: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key == "segment":
            segments.append((lineno, value))
        elif key.startswith("person."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _PERSON_KEYS:
                raise ConfigError(f"line {lineno}: unknown person key {key!r}")
            persons.setdefault(parts[1], {})[parts[2]] = value
        else:
            top[key] = value

    try:
        fs = float(top.get("fs_hz", 62.5))
        C = int(top.get("channels", 16))
        seed = int(top.get("seed", 0))
        quant = float(top.get("quant_step_db", 1.0))
        f_min = float(top.get("f_min", 0.1))
        f_max = float(top.get("f_max", 1.0))
    except ValueError as exc:
        raise ConfigError(f"bad scenario value: {exc}") from None

    rng = np.random.default_rng([seed, 4])
    built: dict[str, PersonSignal] = {}
    for name in sorted(persons):
        spec = persons[name]
        if "freq_hz" not in spec:
            raise ConfigError(f"person {name!r} has no freq_hz")
        try:
            active = None
            if "channels" in spec:
                active = [int(c) for c in spec["channels"].split(";") if c.strip()]
            built[name] = random_person(
                C,
                float(spec["freq_hz"]),
                rng,
                (float(spec.get("amp_min", 0.1)), float(spec.get("amp_max", 0.4))),
                phase=float(spec["phase"]) if "phase" in spec else None,
                bimodal=spec.get("bimodal", "1").lower() in ("1", "true", "yes"),
                active_channels=active,
                phase_jitter_rad=float(spec.get("jitter", 0.0)),
            )
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"person {name!r}: {exc}") from None

    segs = []
    for lineno, value in segments:
        cells = [c.strip() for c in value.split(",")]
        if len(cells) < 3:
            raise ConfigError(f"line {lineno}: segment needs state,duration_s,noise_sigma_db[,persons[,noise_mode]]")
        try:
            state = State.parse(cells[0])
            duration = float(cells[1])
            sigma = float(cells[2])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        names = [n for n in (cells[3].split("+") if len(cells) > 3 else []) if n]
        unknown = [n for n in names if n not in built]
        if unknown:
            raise ConfigError(f"line {lineno}: undeclared person(s) {unknown}")
        common = None
        if len(cells) > 4:
            if cells[4] not in ("common", "independent"):
                raise ConfigError(f"line {lineno}: noise mode must be 'common' or 'independent'")
            common = cells[4] == "common"
        segs.append(Segment(state, duration, sigma, tuple(built[n] for n in names), common))
    return SynthScenario(fs, C, tuple(segs), seed, quant, f_min=f_min, f_max=f_max)


def read_scenario(path: str | Path) -> SynthScenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


DEFAULT_SCENARIO = """\
# one person breathing at 12 bpm for 300 s, no motion
fs_hz=62.5
channels=16
seed=1
quant_step_db=1.0
person.a.freq_hz=0.2
person.a.amp_min=0.1
person.a.amp_max=0.4
segment=S1,300,0.197,a
"""


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    """Ground-truth sidecar: ``cycle,state,f_person1[,f_person2...]``."""
    header = ["cycle", "state"] + [f"f_person{j + 1}" for j in range(truth.num_persons)]
    lines = [",".join(header)]
    for k, state in enumerate(truth.states):
        cells = [str(k), State(int(state)).name]
        cells += ["" if np.isnan(f) else _fmt(f) for f in truth.person_freqs[k]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path: str | Path) -> GroundTruth:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    n_persons = len(lines[0].split(",")) - 2
    states, freqs = [], []
    for line in lines[1:]:
        cells = line.split(",")
        states.append(int(State.parse(cells[1])))
        freqs.append([float(c) if c else np.nan for c in cells[2:]])
    return GroundTruth(np.array(states, dtype=np.int8), np.array(freqs, dtype=float).reshape(-1, n_persons))


__all__ = [
    "PersonSignal", "Segment", "SynthScenario", "GroundTruth", "generate", "downsample_trace",
    "breathing_scenario", "motion_scenario", "two_person_scenario", "read_scenario",
    "parse_scenario", "write_truth", "read_truth", "quantize",
]
