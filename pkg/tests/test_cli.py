import logging

import numpy as np
import pytest

from rssbreath.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from rssbreath.core import read_trace

TWO_PERSON = """\
fs_hz=62.5
channels=16
seed=2
person.a.freq_hz=0.2
person.b.freq_hz=0.25
segment=S1,300,0.197,a+b
"""


def _summary(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture(scope="module")
def default_trace(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d / "t.csv")]) == EXIT_OK
    return d / "t.csv", d / "t.truth.csv"


def test_synth_default(default_trace):
    trace_path, truth_path = default_trace
    tr = read_trace(trace_path)
    assert tr.num_channels == 16 and tr.duration_s == 300
    assert truth_path.read_text().splitlines()[0] == "cycle,state,f_person1"


def test_synth_is_byte_identical(default_trace, tmp_path):
    assert main(["synth", "--out", str(tmp_path / "b.csv"), "--truth", str(tmp_path / "b_truth.csv")]) == EXIT_OK
    assert (tmp_path / "b.csv").read_bytes() == default_trace[0].read_bytes()
    assert main(["synth", "--seed", "99", "--out", str(tmp_path / "c.csv")]) == EXIT_OK
    assert (tmp_path / "c.csv").read_bytes() != default_trace[0].read_bytes()


def test_synth_zero_duration(tmp_path, capsys):
    sc = tmp_path / "bad.txt"
    sc.write_text("segment=S1,0,0.197\n")
    assert main(["synth", str(sc), "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE
    assert "duration" in capsys.readouterr().err


def test_run_single_person(default_trace, tmp_path, capsys):
    trace_path, truth_path = default_trace
    out = tmp_path / "rep.csv"
    assert main(["run", str(trace_path), "--out", str(out), "--truth", str(truth_path), "--stride", "5"]) == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert float(s["abs_error_bpm"]) <= 0.1
    assert out.exists() and out.with_suffix(".summary.txt").exists() and out.with_suffix(".states.csv").exists()


def test_run_channel_mismatch(default_trace, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("num_channels=8\n")
    assert main(["run", str(default_trace[0]), "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == EXIT_USAGE


def test_run_bad_config_key(default_trace, tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("decimation=10\nwarp_factor=9\n")
    assert main(["run", str(default_trace[0]), "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == EXIT_USAGE
    assert "warp_factor" in capsys.readouterr().err


def test_run_decimation_below_nyquist(default_trace, tmp_path):
    assert main(["run", str(default_trace[0]), "--decimation", "50", "--out", str(tmp_path / "r.csv")]) == EXIT_USAGE


def test_run_all_motion(tmp_path, capsys):
    sc = tmp_path / "motion.txt"
    sc.write_text("seed=4\nsegment=S2,120,2.385\n")
    assert main(["synth", str(sc), "--out", str(tmp_path / "m.csv")]) == EXIT_OK
    assert main(["run", str(tmp_path / "m.csv"), "--out", str(tmp_path / "r.csv")]) == EXIT_OK
    s = _summary(capsys.readouterr().out)
    assert s["estimates"] == "0" and "gating" in s["note"]


def test_run_two_person_peaks(tmp_path, capsys):
    sc = tmp_path / "two.txt"
    sc.write_text(TWO_PERSON)
    assert main(["synth", str(sc), "--out", str(tmp_path / "two.csv")]) == EXIT_OK
    capsys.readouterr()
    rc = main(["run", str(tmp_path / "two.csv"), "--peaks", "2", "--stride", "5", "--out", str(tmp_path / "r.csv")])
    assert rc == EXIT_OK
    s = _summary(capsys.readouterr().out)
    got = sorted([float(s["peak_1_bpm"]), float(s["peak_2_bpm"])])
    assert abs(got[0] - 12) <= 0.6 and abs(got[1] - 15) <= 0.6
    assert (tmp_path / "r.peaks.csv").exists()


def test_run_malformed_trace(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("#fs_hz=62.5\n#channels=2\n#quant_step_db=1.0\n0,-60\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA
    assert main(["run", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA


def test_sweep(tmp_path, capsys):
    sc = tmp_path / "s.txt"
    sc.write_text("seed=3\nperson.a.freq_hz=0.2\nsegment=S1,60,0.197,a\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(sc), "--axis", "M", "--values", "1,10,50,100", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "value,mean_error_bpm,failure_rate" and len(lines) == 5
    assert main(["sweep", str(sc), "--axis", "delta", "--values", "1..3", "--out", str(out)]) == EXIT_OK
    assert [ln.split(",")[0] for ln in out.read_text().splitlines()[1:]] == ["1", "2", "3"]


@pytest.mark.parametrize("args", [["--axis", "Q", "--values", "1"], ["--axis", "M", "--values", ""], ["--axis", "M", "--values", "a"]])
def test_sweep_usage_errors(tmp_path, args):
    assert main(["sweep", *args, "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE


def _labelled_pair(tmp_path):
    s1 = tmp_path / "s1.txt"
    s1.write_text("seed=1\nquant_step_db=0\nsegment=S1,60,0.197,,common\n")
    s2 = tmp_path / "s2.txt"
    s2.write_text("seed=2\nquant_step_db=0\nsegment=S2,60,2.385\n")
    for name in ("s1", "s2"):
        assert main(["synth", str(tmp_path / f"{name}.txt"), "--out", str(tmp_path / f"{name}.csv")]) == EXIT_OK
    return tmp_path / "s1.csv", tmp_path / "s2.csv"


def test_fit_density(tmp_path):
    t1, t2 = _labelled_pair(tmp_path)
    out = tmp_path / "params.txt"
    assert main(["fit-density", str(t1), str(t2), "--out", str(out)]) == EXIT_OK
    params = _summary(out.read_text())
    assert float(params["sigma1"]) == pytest.approx(0.197, rel=0.05)
    assert float(params["sigma2"]) == pytest.approx(2.385, rel=0.05)
    assert params["p11"] == "0.9"
    ks = _summary(out.with_suffix(".ks.txt").read_text())
    assert ks["s1.accepted"] == "yes" and ks["s2.accepted"] == "yes"
    # fitted parameters feed straight back in as a config file
    assert main(["run", str(t1), "--config", str(out), "--out", str(tmp_path / "r.csv")]) == EXIT_OK


def test_fit_density_same_file_warns(tmp_path, caplog):
    t1, _ = _labelled_pair(tmp_path)
    with caplog.at_level(logging.WARNING):
        assert main(["fit-density", str(t1), str(t1), "--out", str(tmp_path / "p.txt")]) == EXIT_OK
    assert "identical" in caplog.text


def test_fit_density_short_trace(tmp_path):
    sc = tmp_path / "short.txt"
    sc.write_text("segment=S1,10,0.197\n")
    assert main(["synth", str(sc), "--out", str(tmp_path / "short.csv")]) == EXIT_OK
    short = str(tmp_path / "short.csv")
    assert main(["fit-density", short, short, "--out", str(tmp_path / "p.txt")]) == EXIT_USAGE


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE


def test_print_config(capsys):
    assert main(["--print-config"]) == EXIT_OK
    text = capsys.readouterr().out
    for key in ("fs_hz=62.5", "num_channels=16", "mean_window=62", "decimation=10", "sigma1=0.197", "sigma2=2.385", "p21=0.9"):
        assert key in text.splitlines()


def test_log_level_env(monkeypatch, tmp_path):
    monkeypatch.setenv("RSSBREATH_LOG", "debug")
    sc = tmp_path / "s.txt"
    sc.write_text("segment=S1,1,0.197\n")
    assert main(["synth", str(sc), "--out", str(tmp_path / "x.csv")]) == EXIT_OK
    assert logging.getLogger("rssbreath").level == logging.DEBUG
