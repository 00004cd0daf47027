"""Command-line interface.

Subcommands::

    rssbreath synth [SCENARIO] --out trace.csv [--truth truth.csv]
    rssbreath run TRACE --out report.csv [--truth truth.csv] [--peaks N]
    rssbreath sweep [SCENARIO] --axis {M,delta,channel_count} --values 1,10,50 --out sweep.csv
    rssbreath fit-density TRACE_S1 TRACE_S2 --out params.txt

Exit codes: 0 success, 2 usage or configuration error, 3 bad input data.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import SWEEP_AXES, run_sweep
from .core import ConfigError, PipelineConfig, TraceFormatError, read_keyvalue, read_trace, write_keyvalue, write_trace
from .fir import DesignError
from .motion import HmmParams, fit_densities
from .pipeline import run_pipeline
from .synth import DEFAULT_SCENARIO, generate, parse_scenario, read_scenario, read_truth, write_truth

log = logging.getLogger("rssbreath")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

_HMM_KEYS = set(HmmParams().to_mapping())
_CONFIG_KEYS = set(PipelineConfig().to_mapping())


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on its own; raise instead so main() stays in charge
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _configure_logging() -> None:
    level_name = os.environ.get("RSSBREATH_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    log.setLevel(level)
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)


def default_config_text() -> str:
    lines = ["# pipeline"]
    lines += [f"{k}={v}" for k, v in PipelineConfig().to_mapping().items()]
    lines += ["# motion detector"]
    lines += [f"{k}={v}" for k, v in HmmParams().to_mapping().items()]
    return "\n".join(lines) + "\n"


def load_config(path: str | None, fs_hz: float | None = None, channels: int | None = None) -> tuple[PipelineConfig, HmmParams]:
    """Read a key=value config; without a file, Table defaults adapted to ``fs_hz``/``channels``."""
    if path is None:
        values: dict[str, str] = {}
        if fs_hz is not None:
            values["fs_hz"] = repr(float(fs_hz))
        if channels is not None:
            values["num_channels"] = str(channels)
    else:
        values = read_keyvalue(path)
        unknown = sorted(set(values) - _CONFIG_KEYS - _HMM_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    try:
        cfg = PipelineConfig.from_mapping({k: v for k, v in values.items() if k in _CONFIG_KEYS})
        hmm = HmmParams.from_mapping({k: v for k, v in values.items() if k in _HMM_KEYS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, hmm


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    changes = {}
    if getattr(args, "grid_hz", None) is not None:
        changes["freq_grid_hz"] = args.grid_hz
    if getattr(args, "window_s", None) is not None:
        changes["est_window_s"] = args.window_s
    if getattr(args, "decimation", None) is not None:
        changes["decimation"] = args.decimation
    return cfg.replace(**changes) if changes else cfg


def _load_scenario(path: str | None, seed: int | None):
    scenario = read_scenario(path) if path else parse_scenario(DEFAULT_SCENARIO)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    return scenario


def _parse_values(text: str) -> list[float]:
    cells = [c.strip() for c in text.split(",") if c.strip()]
    if not cells:
        raise ConfigError("no sweep values given")
    out = []
    for c in cells:
        if ".." in c:
            lo, hi = c.split("..", 1)
            try:
                out.extend(float(v) for v in range(int(lo), int(hi) + 1))
            except ValueError:
                raise ConfigError(f"bad range {c!r}") from None
        else:
            try:
                out.append(float(c))
            except ValueError:
                raise ConfigError(f"bad sweep value {c!r}") from None
    return out


# --- subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    trace, truth = generate(scenario)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.csv")
    write_trace(trace, out)
    write_truth(truth, truth_path)
    log.info("seed=%d cycles=%d channels=%d", scenario.seed, trace.num_cycles, trace.num_channels)
    print(f"wrote {out} ({trace.num_cycles} cycles x {trace.num_channels} channels) and {truth_path}")
    return EXIT_OK


def cmd_run(args) -> int:
    trace = read_trace(args.trace)
    cfg, hmm = load_config(args.config, trace.fs_hz, trace.num_channels)
    cfg = _apply_overrides(cfg, args)
    report = run_pipeline(trace, cfg, hmm, stride=args.stride, top_k=args.top_k, peaks=args.peaks, gate=not args.no_gate)
    truth_hz = None
    if args.truth:
        truth = read_truth(args.truth)
        if truth.states.size != trace.num_cycles:
            raise TraceFormatError(f"truth has {truth.states.size} rows, trace has {trace.num_cycles}")
        if truth.num_persons and report.estimates:
            truth_hz = truth.person_freqs[[e.end_index for e in report.estimates], 0]
    written = report.write(args.out, truth_hz, args.peaks)
    summary = report.summary(truth_hz, args.peaks)
    for key, value in summary.items():
        print(f"{key}={value}")
    log.info("wrote %s", ", ".join(str(p) for p in written.values()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {args.axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    values = _parse_values(args.values)
    scenario = _load_scenario(args.scenario, args.seed)
    cfg, hmm = load_config(args.config, scenario.fs_hz, scenario.num_channels)
    cfg = _apply_overrides(cfg, args)
    result = run_sweep(scenario, args.axis, values, cfg, hmm, args.interval_s, gate=not args.no_gate)
    Path(args.out).write_text(result.to_csv(), encoding="utf-8")
    sys.stdout.write(result.to_csv())
    return EXIT_OK


def cmd_fit_density(args) -> int:
    t1 = read_trace(args.trace_s1)
    t2 = read_trace(args.trace_s2)
    cfg, base = load_config(args.config, t1.fs_hz, t1.num_channels)
    fit = fit_densities(t1, t2, cfg.mean_window, base, ks_samples=args.ks_samples, seed=args.seed or 0)
    out = Path(args.out)
    write_keyvalue(fit.params.to_mapping(), out, comment="fitted motion detector parameters")
    ks_path = out.with_suffix(".ks.txt")
    ks_lines = {}
    for name, ks in (("s1", fit.ks_s1), ("s2", fit.ks_s2)):
        ks_lines[f"{name}.D"] = ks.D
        ks_lines[f"{name}.n"] = ks.n
        ks_lines[f"{name}.critical"] = ks.critical
        ks_lines[f"{name}.accepted"] = "yes" if ks.passed else "no"
    write_keyvalue(ks_lines, ks_path, comment="one-sample KS test at the 95% level")
    print(f"sigma1={fit.params.sigma1:.6g} sigma2={fit.params.sigma2:.6g} "
          f"ks_s1={'pass' if fit.ks_s1.passed else 'fail'} ks_s2={'pass' if fit.ks_s2.passed else 'fail'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file of pipeline and detector parameters")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--peaks", type=int, default=0, metavar="N", help="report the N strongest spectral peaks")
    common.add_argument("--grid-hz", type=float, help="frequency grid spacing")
    common.add_argument("--window-s", type=float, help="estimation window length in seconds")
    common.add_argument("--decimation", type=int, metavar="M", help="decimation factor")

    parser = _Parser(prog="rssbreath", description="Breathing rate estimation from multi-channel RSS traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--print-config", action="store_true", help="print the default config file and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace with ground truth")
    p.add_argument("scenario", nargs="?", help="scenario file (default: 300 s, one person at 12 bpm)")
    p.add_argument("--out", required=True, help="trace CSV to write")
    p.add_argument("--truth", help="ground-truth CSV (default: <out>.truth.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="estimate breathing rate from a trace")
    p.add_argument("trace")
    p.add_argument("--out", required=True, help="estimates CSV; summary and state files are written alongside")
    p.add_argument("--truth", help="ground-truth CSV to score against")
    p.add_argument("--stride", type=int, default=1, help="decimated samples between estimates")
    p.add_argument("--top-k", type=int, help="estimate the frequency from the K strongest channels")
    p.add_argument("--no-gate", action="store_true", help="ignore the motion detector")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter over a synthetic scenario")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--axis", required=True, help=f"one of {', '.join(SWEEP_AXES)}")
    p.add_argument("--values", required=True, help="comma-separated values; a..b expands to an integer range")
    p.add_argument("--out", required=True)
    p.add_argument("--interval-s", type=float, default=1.0, help="seconds between scored estimates")
    p.add_argument("--no-gate", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-density", parents=[common], help="fit detector scales from labelled traces")
    p.add_argument("trace_s1")
    p.add_argument("trace_s2")
    p.add_argument("--out", required=True)
    p.add_argument("--ks-samples", type=int, default=1000)
    p.set_defaults(func=cmd_fit_density)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.print_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
