"""Wagner's unbiased transition-density estimator.

The density solves the integral equation

    p(x0, z, t) = p_z(x0, t) + int_0^t int p(x0, y, s) C(y, z, t - s) dy ds

with ``p_z`` the Gaussian kernel of the diffusion frozen at ``z`` and ``C`` the
backward-operator difference applied to it (:func:`cisim.weights.backward_kernel`).
Its Neumann series is sampled by a chain of decreasing time points
``t = t_0 > t_1 > ...`` absorbed at ``t_n`` with probability ``p_u(t_n)``; the
states at ``t_1, t_2, ...`` are drawn from Brownian bridges pinned at ``x0``.

Two time kernels are provided.  WGR1 uses the resolvent of ``delta s^(alpha-1)``
(for ``alpha = 1`` a Poisson process of rate ``delta``).  WGR2 steps back by the
renewal interarrivals of :mod:`cisim.renewal`, absorbing when a gap exceeds the
remaining time, which ties its time points to those of a CIS run on the same
uniforms.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import rng
from .models import DiffusionModel
from .proposals import bridge_moments, gaussian_logpdf, _cholesky
from .renewal import RenewalRate, sample_interarrival
from .weights import backward_kernel, frozen_density

SERIES_RTOL = 1e-15
MAX_REJECTION_ROUNDS = 10_000


class Variant(enum.Enum):
    WGR1 = "wgr1"
    WGR2 = "wgr2"


@dataclass(frozen=True)
class WagnerConfig:
    variant: Variant = Variant.WGR2
    delta: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def renewal_driven(self) -> bool:
        """Time points come from plain interarrival draws (no rejection step)."""
        return self.variant is Variant.WGR2 or self.alpha == 1.0


def _rate(cfg: WagnerConfig) -> RenewalRate:
    # Built without the alpha > 1/2 warning: no weight moments are involved here.
    r = object.__new__(RenewalRate)
    object.__setattr__(r, "delta", cfg.delta)
    object.__setattr__(r, "alpha", cfg.alpha)
    return r


def resolvent_series(cfg: WagnerConfig, t) -> np.ndarray:
    """``h(t) = sum_m delta^m Gamma(alpha)^m t^(m alpha) / Gamma(m alpha + 1)``."""
    t = np.asarray(t, dtype=float)
    if cfg.alpha == 1.0:
        return np.exp(cfg.delta * t)
    a = cfg.alpha
    total = np.ones_like(t)
    logbase = np.log(cfg.delta) + gammaln(a) + a * np.log(np.where(t > 0, t, 1.0))
    prev = np.ones_like(t)
    m = 1
    while True:
        term = np.where(t > 0, np.exp(m * logbase - gammaln(m * a + 1.0)), 0.0)
        total = total + term
        # Terms rise before they fall; stop only on the decreasing tail.
        if np.all((term <= SERIES_RTOL * total) & (term <= prev)):
            return total
        prev = term
        m += 1


def absorption_prob(cfg: WagnerConfig, t) -> np.ndarray:
    """``p_u(t)``: 1 / resolvent series for WGR1, ``exp(-delta t^alpha / alpha)`` for WGR2."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    if cfg.variant is Variant.WGR2:
        return np.exp(-cfg.delta * t**cfg.alpha / cfg.alpha)
    if cfg.alpha == 1.0:
        return np.exp(-cfg.delta * t)
    return 1.0 / resolvent_series(cfg, t)


def step_density(cfg: WagnerConfig, t_prev, t_next) -> np.ndarray:
    """``q_u(t_prev, t_next) * (1 - p_u(t_prev))``: sub-density of a non-absorbed step."""
    t_prev = np.asarray(t_prev, dtype=float)
    t_next = np.asarray(t_next, dtype=float)
    gap = t_prev - t_next
    if cfg.renewal_driven:
        r = _rate(cfg)
        return r.rate(gap) * r.survival(gap)
    kernel = cfg.delta * gap ** (cfg.alpha - 1.0)
    return kernel * resolvent_series(cfg, t_next) / resolvent_series(cfg, t_prev)


def sample_steps(cfg: WagnerConfig, t_prev, keys, step_index):
    """One backward step for each chain; returns ``(t_next, absorbed)``.

    Renewal-driven kernels read the interarrival uniform at the same counter a
    CIS run would use for its ``step_index``-th gap.  The general WGR1 kernel
    draws absorption first, then ``t_next`` by rejection from the
    ``(t_prev - t)^(alpha - 1)`` envelope.
    """
    t_prev = np.asarray(t_prev, dtype=float)
    keys = np.asarray(keys, dtype=np.uint64)
    step_index = np.asarray(step_index, dtype=np.uint64)
    if cfg.renewal_driven:
        u = rng.uniforms(keys, rng.counter(step_index, rng.SLOT_INTERARRIVAL))
        tau = sample_interarrival(_rate(cfg), u)
        return t_prev - tau, tau >= t_prev
    u = rng.uniforms(keys, rng.counter(step_index, rng.SLOT_INTERARRIVAL))
    absorbed = u < absorption_prob(cfg, t_prev)
    sub = rng.bits(keys, rng.counter(step_index, rng.SLOT_AUX))
    t_next = np.full(t_prev.shape, np.nan)
    todo = np.flatnonzero(~absorbed)
    h_prev = resolvent_series(cfg, t_prev)
    for r in range(MAX_REJECTION_ROUNDS):
        if not todo.size:
            break
        v = rng.uniforms(sub[todo], np.uint64(2 * r))
        w = rng.uniforms(sub[todo], np.uint64(2 * r + 1))
        cand = t_prev[todo] * (1.0 - v ** (1.0 / cfg.alpha))
        ok = w * h_prev[todo] <= resolvent_series(cfg, cand)
        t_next[todo[ok]] = cand[ok]
        todo = todo[~ok]
    if todo.size:
        raise RuntimeError("time-step rejection sampler did not terminate")
    return t_next, absorbed


def sample_time_step(cfg: WagnerConfig, t_prev: float, key, step_index: int = 0):
    """Scalar form of :func:`sample_steps`: a new time point or ``None`` when absorbed."""
    if not t_prev > 0:
        raise ValueError("t_prev must be positive")
    t_next, absorbed = sample_steps(cfg, np.array([t_prev]), np.atleast_1d(np.asarray(key, dtype=np.uint64)),
                                    np.array([step_index]))
    return None if absorbed[0] else float(t_next[0])


def time_points(cfg: WagnerConfig, t: float, key) -> list[float]:
    """The full chain ``t_1 > t_2 > ... > t_n`` for one key (``t_0 = t`` excluded)."""
    out, cur, k = [], float(t), 0
    while True:
        nxt = sample_time_step(cfg, cur, key, k)
        if nxt is None:
            return out
        out.append(nxt)
        cur, k = nxt, k + 1


@dataclass
class WgrResult:
    estimate: np.ndarray
    n_points: np.ndarray  # time points used, t_0 included
    aborted: np.ndarray

    @property
    def eval_count(self) -> np.ndarray:
        return self.n_points


def wgr_density_estimate(model: DiffusionModel, x0, x_t, t: float, cfg: WagnerConfig, keys) -> WgrResult:
    """Unbiased estimates of ``p(x0, x_t, t)``, one per key.

    The estimate of a chain absorbed after ``n`` steps is

        p_frozen(x0, x_{t_n}, t_n) / p_u(t_n)
          * prod_k C(x_{t_k}, x_{t_{k-1}}, t_{k-1} - t_k) / [g_bb(x_{t_k}) q_u (1 - p_u(t_{k-1}))]

    where ``g_bb`` is the bridge from ``(0, x0)`` to ``(t_{k-1}, x_{t_{k-1}})``
    with scale ``gamma(x0)``.  Chains whose bridge draw leaves the model domain
    are flagged as aborted and return NaN.
    """
    if not t > 0:
        raise ValueError("horizon must be positive")
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    n = keys.shape[0]
    d = model.dim
    x0 = np.asarray(x0, dtype=float)
    model.check_domain(x0)
    g0 = model.gamma(x0)
    x_prev = np.broadcast_to(np.asarray(x_t, dtype=float), (n, d)).copy()
    t_prev = np.full(n, float(t))
    prod = np.ones(n)
    est = np.full(n, np.nan)
    n_points = np.ones(n, dtype=np.int64)
    aborted = np.zeros(n, dtype=bool)
    step = np.zeros(n, dtype=np.uint64)
    slots = np.uint64(rng.SLOT_NORMAL) + np.arange(d, dtype=np.uint64)
    active = np.arange(n)
    while active.size:
        t_next, absorbed = sample_steps(cfg, t_prev[active], keys[active], step[active])
        done = active[absorbed]
        if done.size:
            lead = frozen_density(model, x0, x_prev[done], t_prev[done]) / absorption_prob(cfg, t_prev[done])
            est[done] = prod[done] * lead
        go = ~absorbed
        active, t_next = active[go], t_next[go]
        if not active.size:
            break
        tp, xp = t_prev[active], x_prev[active]
        mean, cov = bridge_moments(xp, tp, g0, np.zeros_like(tp), x0, t_next)
        chol = _cholesky(cov)
        z = rng.normals(keys[active][:, None], rng.counter(step[active][:, None], 0) | slots)
        y = mean + np.einsum("nij,nj->ni", chol, z)
        ok = model.in_domain(y)
        if not np.all(ok):
            aborted[active[~ok]] = True
            n_points[active[~ok]] += 1
            keep = ok
            active, t_next, tp, xp, y, mean, chol = (a[keep] for a in (active, t_next, tp, xp, y, mean, chol))
            if not active.size:
                break
        logg = gaussian_logpdf(y, mean, chol=chol)
        c = backward_kernel(model, y, xp, tp - t_next)
        prod[active] = prod[active] * c / (np.exp(logg) * step_density(cfg, tp, t_next))
        x_prev[active] = y
        t_prev[active] = t_next
        step[active] += np.uint64(1)
        n_points[active] += 1
    return WgrResult(est, n_points, aborted)
