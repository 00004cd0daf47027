import math

import numpy as np
import pytest
from scipy.special import ndtri

from rssbreath.analysis import (
    KS_CRITICAL_95,
    SweepResult,
    SweepPoint,
    config_for_decimation,
    config_for_rate,
    detect_peaks,
    failure_rate,
    ks_statistic,
    mean_error_bpm,
    phase_dispersion,
    rank_channels,
    run_sweep,
)
from rssbreath.core import PipelineConfig
from rssbreath.estimator import BreathingParams, FrequencyGrid
from rssbreath.synth import breathing_scenario

GRID = FrequencyGrid(0.1, 1.0, 0.0005)


def test_mean_error_examples():
    assert mean_error_bpm([0.2, 0.2, 0.2], 0.2).mean_bpm == 0.0
    e = mean_error_bpm([0.2 + 1 / 60] * 4, 0.2)
    assert e.mean_bpm == pytest.approx(1.0) and e.mean_abs_bpm == pytest.approx(1.0)
    assert e.std_bpm == pytest.approx(0.0, abs=1e-12) and e.count == 4
    signed = mean_error_bpm([0.2 + 1 / 60, 0.2 - 1 / 60], 0.2)
    assert signed.mean_bpm == pytest.approx(0.0, abs=1e-12) and signed.mean_abs_bpm == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mean_error_bpm([], 0.2)


def test_mean_error_translation(rng):
    f = rng.uniform(0.15, 0.25, 50)
    base = mean_error_bpm(f, 0.2).mean_bpm
    for delta in (0.001, -0.013, 0.05):
        assert mean_error_bpm(f + delta, 0.2).mean_bpm == pytest.approx(base + 60 * delta, abs=1e-9)


def test_failure_rate():
    assert failure_rate([0.2, 0.2 + 0.5 / 60, 0.2 + 1.5 / 60, 0.2 - 2 / 60], 0.2) == 0.5
    with pytest.raises(ValueError):
        failure_rate([], 0.2)


def test_rank_channels_examples():
    assert rank_channels(np.array([0.3, 0.1, 0.2]), 1) == [0]
    assert rank_channels(np.array([0.5, 0.5, 0.5]), 2) == [0, 1]
    params = BreathingParams(0.2, np.array([0.1, 0.4, 0.3]), np.zeros(3))
    assert rank_channels(params, 3) == [1, 2, 0]
    for k in (0, 4):
        with pytest.raises(ValueError):
            rank_channels(np.array([0.3, 0.1, 0.2]), k)


def test_rank_channels_permutation_equivariant(rng):
    for _ in range(50):
        a = rng.uniform(size=10)
        perm = rng.permutation(10)
        ranked = rank_channels(a[perm], 4)
        assert [perm[i] for i in ranked] == rank_channels(a, 4)


def _psd_with_peaks(peaks):
    f = GRID.f_values
    return sum(p * np.exp(-0.5 * ((f - f0) / 0.005) ** 2) for f0, p in peaks)


def test_detect_peaks_examples():
    one = detect_peaks(_psd_with_peaks([(0.2, 1.0)]), GRID)
    assert len(one) == 1 and one[0][0] == pytest.approx(0.2)
    two = detect_peaks(_psd_with_peaks([(0.2, 1.0), (0.25, 0.6)]), GRID)
    assert [round(f, 4) for f, _ in two] == [0.2, 0.25]
    assert detect_peaks(np.zeros(len(GRID)), GRID) == []
    # a weaker neighbour inside the separation is dropped
    close = detect_peaks(_psd_with_peaks([(0.2, 1.0), (0.22, 0.8)]), GRID, min_separation_hz=0.03)
    assert len(close) == 1
    # below the relative threshold
    assert len(detect_peaks(_psd_with_peaks([(0.2, 1.0), (0.5, 0.1)]), GRID)) == 1
    with pytest.raises(ValueError):
        detect_peaks(np.zeros(3), GRID)


def test_detect_peaks_scale_invariant(rng):
    psd = _psd_with_peaks([(0.2, 1.0), (0.4, 0.7), (0.8, 0.3)]) + rng.uniform(0, 0.01, len(GRID))
    assert [f for f, _ in detect_peaks(psd, GRID)] == [f for f, _ in detect_peaks(psd * 123.0, GRID)]


def test_phase_dispersion_examples():
    w = np.ones(6)
    assert phase_dispersion(np.full(6, 0.4), w) == pytest.approx(1.0)
    assert phase_dispersion(np.array([0.4, 0.4 + np.pi] * 3), w) == pytest.approx(1.0)
    assert phase_dispersion(np.array([0.0, np.pi / 2]), np.ones(2)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        phase_dispersion(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        phase_dispersion(np.zeros(2), np.ones(2), degenerate=[True, True])
    with pytest.raises(ValueError):
        phase_dispersion(np.zeros(1), np.ones(1))


def test_phase_dispersion_invariances(rng):
    ph = rng.uniform(-np.pi, np.pi, 16)
    w = rng.uniform(0.1, 1, 16)
    r = phase_dispersion(ph, w)
    assert phase_dispersion(ph + 1.234, w) == pytest.approx(r, abs=1e-12)
    flip = rng.uniform(size=16) < 0.5
    assert phase_dispersion(np.where(flip, ph + np.pi, ph), w) == pytest.approx(r, abs=1e-12)


def test_phase_dispersion_uniform_phases(rng):
    # for independent uniform phases and equal weights, C * R^2 is Exp(1),
    # so the 95th percentile of R is sqrt(ln 20 / C)
    for C in (16, 64, 400):
        r = np.array([phase_dispersion(rng.uniform(-np.pi, np.pi, C), np.ones(C)) for _ in range(4000)])
        assert np.percentile(r, 95) == pytest.approx(math.sqrt(math.log(20) / C), rel=0.06)
    assert np.percentile(r, 95) < 0.3


def test_ks_examples(rng):
    n, sigma = 1000, 0.197
    accepted = sum(ks_statistic(rng.normal(0, sigma, n), sigma).passed for _ in range(100))
    assert accepted >= 90
    rejected = sum(not ks_statistic(rng.normal(0, 3 * sigma, n), sigma).passed for _ in range(100))
    assert rejected >= 99
    # samples placed at the reference's mid-quantiles: D = 1/(2n)
    q = sigma * ndtri((np.arange(1, n + 1) - 0.5) / n)
    res = ks_statistic(q, sigma)
    assert res.D <= 1 / n
    assert res.critical == pytest.approx(KS_CRITICAL_95 / math.sqrt(n))
    with pytest.raises(ValueError):
        ks_statistic(np.zeros(49), 1.0)


def test_ks_matches_scipy(rng):
    from scipy import stats

    x = rng.normal(0, 1.3, 300)
    assert ks_statistic(x, 1.2).D == pytest.approx(stats.kstest(x, "norm", args=(0, 1.2)).statistic, abs=1e-12)


def test_config_for_decimation():
    base = PipelineConfig()
    assert config_for_decimation(base, 10) == base
    c50 = config_for_decimation(base, 50)
    assert c50.f_max == 0.625 and c50.stopband_hz == 0.625 and c50.mean_window == base.mean_window
    with pytest.raises(ValueError):
        config_for_decimation(base, 400)


def test_config_for_rate():
    base = PipelineConfig()
    c = config_for_rate(base, 62.5 / 62)
    assert c.f_max < c.fs_hz / 2 and c.decimation == 1
    assert config_for_rate(base, 62.5) == base
    assert config_for_rate(base, 6.25).decimation == 3


def test_sweep_result_csv():
    r = SweepResult("M", [SweepPoint(1, 0.03, 0.0), SweepPoint(10, 0.031, 0.01)])
    assert r.to_csv().splitlines() == ["value,mean_error_bpm,failure_rate", "1,0.030000,0.000000", "10,0.031000,0.010000"]


def test_run_sweep_shapes_and_errors():
    sc = breathing_scenario(duration_s=60, seed=2)
    res = run_sweep(sc, "M", [1, 10, 50, 100])
    assert [p.value for p in res.points] == [1, 10, 50, 100]
    assert all(0 <= p.failure_rate <= 1 for p in res.points)
    with pytest.raises(ValueError):
        run_sweep(sc, "bogus", [1])
    with pytest.raises(ValueError):
        run_sweep(sc, "M", [])
    with pytest.raises(ValueError):
        run_sweep(sc, "delta", [0])
    with pytest.raises(ValueError):
        run_sweep(sc, "channel_count", [17])


def test_channel_count_all_equals_baseline():
    sc = breathing_scenario(duration_s=60, seed=5)
    res = run_sweep(sc, "channel_count", [16])
    base = run_sweep(sc, "M", [10])
    assert res.points[0].mean_freq_hz == base.points[0].mean_freq_hz
    assert res.points[0].mean_error_bpm == base.points[0].mean_error_bpm
