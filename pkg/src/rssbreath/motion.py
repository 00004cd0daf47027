"""Two-state HMM detector for motion interference.

The observation is the channel average of the mean-removed RSS.  Under both
states it is modelled as zero-mean Gaussian; only the scale differs.  The
forward variables are renormalized every step so arbitrarily long streams
neither underflow nor drift, which leaves the argmax decision untouched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import ChannelVector, RssTrace, State, _fmt
from .preprocess import remove_mean

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)

MIN_FIT_SAMPLES = 1000


@dataclass(frozen=True)
class HmmParams:
    """Transition matrix ``P[j, i] = P(next = i | current = j)`` (rows sum to 1),
    initial distribution ``pi`` and the two observation scales in dB.

    ``sigma1``/``sigma2`` are standard deviations: they enter the density as
    the Gaussian scale.
    """

    P: np.ndarray = field(default_factory=lambda: np.array([[0.90, 0.10], [0.90, 0.10]]))
    pi: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    sigma1: float = 0.197
    sigma2: float = 2.385

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        pi = np.array(self.pi, dtype=float)
        if P.shape != (2, 2) or pi.shape != (2,):
            raise ValueError("P must be 2x2 and pi of length 2")
        if np.any(P < 0) or np.any(P > 1) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("rows of P must be probability vectors")
        if np.any(pi < 0) or not math.isclose(pi.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("pi must be a probability vector")
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigma1 and sigma2 must be positive")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2])

    def to_mapping(self) -> dict[str, str]:
        return {
            "p11": _fmt(self.P[0, 0]), "p12": _fmt(self.P[0, 1]),
            "p21": _fmt(self.P[1, 0]), "p22": _fmt(self.P[1, 1]),
            "pi1": _fmt(self.pi[0]), "pi2": _fmt(self.pi[1]),
            "sigma1": _fmt(self.sigma1), "sigma2": _fmt(self.sigma2),
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "HmmParams":
        d = cls()
        get = lambda k, default: float(values[k]) if k in values else float(default)  # noqa: E731
        P = [[get("p11", d.P[0, 0]), get("p12", d.P[0, 1])], [get("p21", d.P[1, 0]), get("p22", d.P[1, 1])]]
        pi = [get("pi1", d.pi[0]), get("pi2", d.pi[1])]
        return cls(np.array(P), np.array(pi), get("sigma1", d.sigma1), get("sigma2", d.sigma2))


def observe(y_tilde: ChannelVector | np.ndarray) -> float:
    """Channel average of one mean-removed cycle."""
    values = y_tilde.values if isinstance(y_tilde, ChannelVector) else np.asarray(y_tilde, dtype=float)
    if values.size == 0:
        raise ValueError("cannot observe an empty channel vector")
    return float(np.sum(values) / values.size)


def gaussian_pdf(x, sigma: float):
    """Zero-mean normal density with standard deviation ``sigma``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / (2.0 * sigma * sigma)) / (sigma * _SQRT_2PI)
    return float(out) if out.ndim == 0 else out


class HmmFilter:
    """Causal forward-procedure state estimator."""

    def __init__(self, params: HmmParams | None = None):
        self.params = params or HmmParams()
        self.alpha: np.ndarray | None = None
        self.current_state: State | None = None
        self.degenerate_events = 0

    def reset(self) -> None:
        self.alpha = None
        self.current_state = None

    def step(self, x: float) -> tuple[State, float]:
        """Absorb one observation; return the most probable state and P(S2)."""
        p = self.params
        dens = np.array([gaussian_pdf(x, p.sigma1), gaussian_pdf(x, p.sigma2)])
        prior = p.pi if self.alpha is None else self.alpha @ p.P
        alpha = prior * dens
        total = alpha.sum()
        if not total > 0 or not math.isfinite(total):
            self.degenerate_events += 1
            log.warning("both observation densities vanished at x=%r; resetting to pi", x)
            alpha = p.pi.copy()
            total = 1.0
        self.alpha = alpha / total
        # ties go to S2 so estimation is suppressed when undecided
        self.current_state = State.S1 if self.alpha[0] > self.alpha[1] else State.S2
        return self.current_state, float(self.alpha[1])

    def run(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Filter a whole observation sequence; returns (states, p_s2) arrays."""
        xs = np.asarray(xs, dtype=float)
        states = np.empty(xs.size, dtype=np.int8)
        p2 = np.empty(xs.size)
        p = self.params
        # densities vectorized up front, recursion kept sequential
        d1 = gaussian_pdf(xs, p.sigma1) if xs.size else np.zeros(0)
        d2 = gaussian_pdf(xs, p.sigma2) if xs.size else np.zeros(0)
        P = p.P
        alpha = self.alpha
        for k in range(xs.size):
            if alpha is None:
                a1, a2 = p.pi[0], p.pi[1]
            else:
                a1 = alpha[0] * P[0, 0] + alpha[1] * P[1, 0]
                a2 = alpha[0] * P[0, 1] + alpha[1] * P[1, 1]
            a1 *= d1[k]
            a2 *= d2[k]
            total = a1 + a2
            if not total > 0 or not math.isfinite(total):
                self.degenerate_events += 1
                log.warning("both observation densities vanished at x=%r; resetting to pi", xs[k])
                a1, a2, total = p.pi[0], p.pi[1], 1.0
            alpha = (a1 / total, a2 / total)
            states[k] = 1 if alpha[0] > alpha[1] else 2
            p2[k] = alpha[1]
        if xs.size:
            self.alpha = np.array(alpha)
            self.current_state = State(int(states[-1]))
        return states, p2


def observations(trace: RssTrace, L: int) -> np.ndarray:
    """Per-cycle detector observations of a raw trace."""
    return remove_mean(trace.samples, L).mean(axis=1)


def detect_states(trace: RssTrace, L: int, params: HmmParams | None = None) -> np.ndarray:
    states, _ = HmmFilter(params).run(observations(trace, L))
    return states


@dataclass(frozen=True)
class DensityFit:
    params: HmmParams
    ks_s1: "KsResult"
    ks_s2: "KsResult"

    @property
    def accepted(self) -> bool:
        return self.ks_s1.passed and self.ks_s2.passed


def fit_densities(
    trace_s1: RssTrace,
    trace_s2: RssTrace,
    L: int,
    base: HmmParams | None = None,
    ks_samples: int = 1000,
    seed: int = 0,
) -> DensityFit:
    """Fit both observation scales from labelled recordings.

    The scales are the sample standard deviations of the observations; the
    transition matrix and initial distribution are copied from ``base``.  Each
    fit is checked with a one-sample KS test on ``ks_samples`` observations
    drawn without replacement.
    """
    from .analysis import ks_statistic

    base = base or HmmParams()
    x1 = observations(trace_s1, L)
    x2 = observations(trace_s2, L)
    for name, x in (("S1", x1), ("S2", x2)):
        if x.size < MIN_FIT_SAMPLES:
            raise ValueError(f"{name} trace has {x.size} observations, need >= {MIN_FIT_SAMPLES}")
    s1 = float(np.std(x1, ddof=1))
    s2 = float(np.std(x2, ddof=1))
    if s1 == s2:
        log.warning("S1 and S2 recordings give identical scales (%.4g dB)", s1)
    params = HmmParams(base.P, base.pi, s1, s2)
    rng = np.random.default_rng(seed)
    n = min(ks_samples, x1.size, x2.size)
    ks1 = ks_statistic(rng.choice(x1, n, replace=False), s1)
    ks2 = ks_statistic(rng.choice(x2, n, replace=False), s2)
    return DensityFit(params, ks1, ks2)
