"""Renewal event times with intensity ``lambda(s) = delta * s**(alpha - 1)``.

``s`` is the time elapsed since the previous event.  The integrated hazard is
``delta * s**alpha / alpha``, so interarrival times are sampled exactly by
inverse transform.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RenewalRate:
    delta: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.alpha > 0.5:
            warnings.warn(
                f"alpha={self.alpha} > 1/2: incremental weights need not have bounded moments",
                RuntimeWarning,
                stacklevel=3,
            )

    def rate(self, s):
        s = np.asarray(s, dtype=float)
        if self.alpha == 1.0:
            return np.full(s.shape, self.delta) if s.ndim else self.delta
        return self.delta * s ** (self.alpha - 1.0)

    def cumulative_hazard(self, s):
        return self.delta * np.asarray(s, dtype=float) ** self.alpha / self.alpha

    def survival(self, s):
        return np.exp(-self.cumulative_hazard(s))

    def density(self, s):
        return self.rate(s) * self.survival(s)


def sample_interarrival(rate: RenewalRate, u, elapsed=0.0):
    """Waiting time until the next event from uniform variate(s) ``u``.

    With ``elapsed = 0`` this is ``(-alpha log(u) / delta)**(1/alpha)``.  A
    positive ``elapsed`` gives the total time since the last event conditioned
    on exceeding ``elapsed`` (the residual law of a renewal process that is
    already ``elapsed`` into its current gap).
    """
    u = np.asarray(u, dtype=float)
    a, d = rate.alpha, rate.delta
    tail = -a * np.log(u) / d
    elapsed = np.asarray(elapsed, dtype=float)
    if np.any(elapsed > 0):
        tail = elapsed**a + tail
    return tail ** (1.0 / a) if a != 1.0 else tail


def interarrival_cdf(rate: RenewalRate, s):
    """``P(tau <= s) = 1 - exp(-delta s^alpha / alpha)``."""
    s = np.asarray(s, dtype=float)
    return -np.expm1(-rate.cumulative_hazard(np.maximum(s, 0.0)))


def simulate_event_counts(rate: RenewalRate, T: float, uniforms_fn, n: int) -> np.ndarray:
    """Number of renewal events in ``[0, T]`` for ``n`` independent processes.

    ``uniforms_fn(active_index, event_index)`` must return one uniform per
    active process; it is the hook through which callers supply their streams.
    """
    counts = np.zeros(n, dtype=np.int64)
    clock = np.zeros(n)
    active = np.arange(n)
    while active.size:
        tau = sample_interarrival(rate, uniforms_fn(active, counts[active]))
        clock[active] += tau
        hit = clock[active] <= T
        counts[active[hit]] += 1
        active = active[hit]
    return counts
