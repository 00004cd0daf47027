import logging
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from rssbreath.core import ChannelVector, RssTrace, State
from rssbreath.motion import HmmFilter, HmmParams, fit_densities, gaussian_pdf, observe, observations
from rssbreath.synth import Segment, SynthScenario, generate


def test_observe():
    assert observe(ChannelVector([1.0, -1.0])) == 0.0
    assert observe([0.2, 0.2, 0.2, 0.2]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        observe([])


def test_observe_matches_recomputation(rng):
    for _ in range(100):
        v = rng.normal(size=rng.integers(1, 40))
        assert abs(observe(v) - v.sum() / v.size) <= 1e-15


def test_gaussian_pdf_values():
    assert gaussian_pdf(0.0, 1.0) == pytest.approx(0.39894228, abs=1e-8)
    assert gaussian_pdf(2.0, 2.0) == pytest.approx(0.24197072 / 2.0, abs=1e-8)
    assert gaussian_pdf(0.0, 0.197) == pytest.approx(1 / (0.197 * math.sqrt(2 * math.pi)))
    assert gaussian_pdf(0.0, 0.197) == pytest.approx(2.02509, abs=1e-5)
    np.testing.assert_allclose(gaussian_pdf(np.array([0.0, 1.0]), 1.0), [0.39894228, 0.24197072], atol=1e-8)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            gaussian_pdf(0.0, bad)


def test_params_validation_and_mapping():
    p = HmmParams()
    assert p.P.tolist() == [[0.9, 0.1], [0.9, 0.1]]
    assert p.pi.tolist() == [1.0, 0.0]
    assert HmmParams.from_mapping(p.to_mapping()).to_mapping() == p.to_mapping()
    assert HmmParams.from_mapping({"sigma1": "0.3"}).sigma1 == 0.3
    with pytest.raises(ValueError):
        HmmParams(P=np.array([[0.5, 0.6], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        HmmParams(pi=np.array([0.3, 0.3]))
    with pytest.raises(ValueError):
        HmmParams(sigma1=0.0)


@pytest.mark.parametrize("x", [0.0, 0.3, 5.0, -20.0])
def test_first_state_is_s1(x):
    state, p2 = HmmFilter().step(x)
    assert state is State.S1 and p2 == 0.0


def test_quiet_stream_stays_s1():
    f = HmmFilter()
    assert all(f.step(0.0)[0] is State.S1 for _ in range(1000))


def test_motion_stream_switches_by_second_step():
    states, _ = HmmFilter().run(np.full(200, 5.0))
    assert states[0] == State.S1
    assert np.all(states[1:] == State.S2)


def test_tie_goes_to_s2():
    # equal priors and densities give alpha = (0.5, 0.5)
    p = HmmParams(P=np.array([[0.5, 0.5], [0.5, 0.5]]), pi=np.array([0.5, 0.5]), sigma1=1.0, sigma2=1.0)
    assert HmmFilter(p).step(0.3)[0] is State.S2


def test_underflow_resets_to_pi(caplog):
    f = HmmFilter()
    f.step(0.0)
    with caplog.at_level(logging.WARNING):
        state, _ = f.step(1e6)
    assert f.degenerate_events == 1
    assert state is State.S1
    np.testing.assert_array_equal(f.alpha, [1.0, 0.0])
    assert "vanished" in caplog.text


def _oracle_states(xs, params, scale=1.0):
    """Unnormalized forward recursion carried in the log domain."""
    P = np.asarray(params.P)
    logd = np.stack(
        [np.log(scale) - 0.5 * (xs / s) ** 2 - np.log(s * math.sqrt(2 * math.pi)) for s in (params.sigma1, params.sigma2)],
        axis=1,
    )
    with np.errstate(divide="ignore"):
        la = np.log(params.pi) + logd[0]
        logP = np.log(P)
    out = [1 if la[0] > la[1] else 2]
    for k in range(1, xs.size):
        la = logsumexp(la[:, None] + logP, axis=0) + logd[k]
        out.append(1 if la[0] > la[1] else 2)
    return np.array(out)


@pytest.mark.parametrize(
    "P", [[[0.9, 0.1], [0.9, 0.1]], [[0.95, 0.05], [0.2, 0.8]], [[0.7, 0.3], [0.4, 0.6]]]
)
def test_matches_log_domain_oracle(rng, P):
    params = HmmParams(P=np.array(P), pi=np.array([0.6, 0.4]))
    xs = np.concatenate([rng.normal(0, 0.197, 300), rng.normal(0, 2.385, 100), rng.normal(0, 0.197, 300)])
    states, p2 = HmmFilter(params).run(xs)
    np.testing.assert_array_equal(states, _oracle_states(xs, params))
    # a common positive scale on both densities changes nothing
    np.testing.assert_array_equal(states, _oracle_states(xs, params, scale=1e-3))
    np.testing.assert_array_equal(states, _oracle_states(xs, params, scale=7.0))


def test_step_and_run_agree(rng):
    xs = rng.normal(0, 1.0, 500)
    a = HmmFilter()
    stepped = [a.step(x) for x in xs]
    states, p2 = HmmFilter().run(xs)
    np.testing.assert_array_equal(states, [int(s) for s, _ in stepped])
    np.testing.assert_allclose(p2, [p for _, p in stepped], atol=1e-15)


def test_alpha_stays_normalized_on_long_stream(rng):
    xs = rng.normal(0, 1.0, 1_000_000)
    f = HmmFilter(HmmParams(P=np.array([[0.9, 0.1], [0.3, 0.7]])))
    _, p2 = f.run(xs)
    assert np.all((p2 >= 0) & (p2 <= 1))
    assert np.all(f.alpha >= 0) and abs(f.alpha.sum() - 1) <= 1e-12
    assert f.degenerate_events == 0


def _noise_trace(sigma, seed, seconds=60.0, common=True):
    seg = Segment(State.S1, seconds, sigma, common_mode=common)
    return generate(SynthScenario(62.5, 16, (seg,), seed=seed, quant_step_db=0.0))[0]


def test_fit_densities_recovers_scales():
    t1 = _noise_trace(0.197, 1)
    t2 = _noise_trace(2.385, 2)
    fit = fit_densities(t1, t2, 62)
    assert fit.params.sigma1 == pytest.approx(0.197, rel=0.05)
    assert fit.params.sigma2 == pytest.approx(2.385, rel=0.05)
    assert fit.accepted
    np.testing.assert_array_equal(fit.params.P, HmmParams().P)


def test_fit_identical_traces_warns(caplog):
    t = _noise_trace(0.5, 3)
    with caplog.at_level(logging.WARNING):
        fit = fit_densities(t, t, 62)
    assert fit.params.sigma1 == fit.params.sigma2
    assert "identical" in caplog.text


def test_fit_needs_enough_samples():
    short = RssTrace(np.zeros((999, 2)), 62.5)
    with pytest.raises(ValueError, match="1000"):
        fit_densities(short, short, 62)


def test_observations_shape(breathing_trace):
    trace, _ = breathing_trace
    x = observations(trace, 62)
    assert x.shape == (trace.num_cycles,)
