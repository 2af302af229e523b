"""Continuous-time importance sampling for diffusions.

The simulation kernel advances a batch of independent replicates in lock-step.
Replicate ``i`` draws its randomness from stream key ``keys[i]``: the
interarrival uniform and the proposal normals of its ``k``-th event sit at
fixed counters (see :mod:`cisim.rng`), so the output of a replicate depends on
its key alone and not on the batch it happens to be simulated in.

A run can be continued: calling :func:`propagate` again with a later horizon
re-reads the interarrival that overshot the previous horizon and carries on,
which reproduces an uninterrupted run bit for bit.  Resampling schemes build on
this.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import DomainError, UnsupportedFunctional
from .models import DiffusionModel
from .proposals import (
    EventProposal,
    GuidedBridge,
    ProposalParams,
    copycat_density,
    copycat_logdensity,
    copycat_mean,
    copycat_sample,
)
from .renewal import RenewalRate, sample_interarrival
from .weights import incremental_weight, target_coefficients


class AdaptationPolicy(enum.Enum):
    FULL_COPYCAT = "full"  # re-anchor drift and variance at every event
    DRIFT_ONLY = "drift_only"  # re-anchor the drift, keep the variance of x0
    FROZEN = "frozen"  # keep the parameters of x0 throughout


@dataclass
class CisOutput:
    """One replicate: the signed estimate ``weight * q(anchor, ., horizon - last_event_time)``."""

    last_event_time: float
    anchor: np.ndarray
    weight: float
    params: ProposalParams
    horizon: float
    event_count: int
    eval_count: int
    aborted: bool = False

    def proposal_moments(self):
        u = self.horizon - self.last_event_time
        return (self.anchor + u * self.params.anchor_drift, u * self.params.anchor_gamma)


@dataclass
class CisBatch:
    """Struct-of-arrays state for ``n`` replicates (also the output of a run)."""

    last_event_time: np.ndarray
    anchor: np.ndarray
    weight: np.ndarray
    params: ProposalParams
    horizon: np.ndarray
    event_count: np.ndarray
    eval_count: np.ndarray
    aborted: np.ndarray
    keys: np.ndarray
    event_index: np.ndarray
    gap_floor: np.ndarray | None = None  # conditioning of the pending interarrival
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gap_floor is None:
            self.gap_floor = np.zeros(self.weight.shape[0])

    def __len__(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.anchor.shape[-1]

    def __getitem__(self, i: int) -> CisOutput:
        return CisOutput(
            float(self.last_event_time[i]),
            self.anchor[i].copy(),
            float(self.weight[i]),
            self.params.take(i),
            float(self.horizon[i]),
            int(self.event_count[i]),
            int(self.eval_count[i]),
            bool(self.aborted[i]),
        )

    def outputs(self) -> list[CisOutput]:
        return [self[i] for i in range(len(self))]

    def take(self, idx) -> "CisBatch":
        return CisBatch(
            self.last_event_time[idx].copy(),
            self.anchor[idx].copy(),
            self.weight[idx].copy(),
            self.params.take(idx).copy(),
            self.horizon[idx].copy(),
            self.event_count[idx].copy(),
            self.eval_count[idx].copy(),
            self.aborted[idx].copy(),
            self.keys[idx].copy(),
            self.event_index[idx].copy(),
            self.gap_floor[idx].copy(),
        )

    def remaining(self) -> np.ndarray:
        return self.horizon - self.last_event_time

    def proposal_moments(self):
        u = self.remaining()
        return (copycat_mean(self.params, self.anchor, u), u[:, None, None] * self.params.anchor_gamma)


def stack_outputs(outputs: Sequence[CisOutput]) -> CisBatch:
    n = len(outputs)
    params = ProposalParams(
        np.stack([o.params.anchor_drift for o in outputs]),
        np.stack([o.params.anchor_gamma for o in outputs]),
        np.stack([o.params.anchor_gamma_inv for o in outputs]),
        np.stack([o.params.anchor_chol for o in outputs]),
    )
    return CisBatch(
        np.array([o.last_event_time for o in outputs]),
        np.stack([o.anchor for o in outputs]),
        np.array([o.weight for o in outputs]),
        params,
        np.array([o.horizon for o in outputs]),
        np.array([o.event_count for o in outputs]),
        np.array([o.eval_count for o in outputs]),
        np.array([o.aborted for o in outputs]),
        np.zeros(n, dtype=np.uint64),
        np.zeros(n, dtype=np.uint64),
    )


def _as_batch(outputs) -> CisBatch:
    if isinstance(outputs, CisBatch):
        return outputs
    if isinstance(outputs, CisOutput):
        return stack_outputs([outputs])
    return stack_outputs(list(outputs))


def stream_key(stream) -> np.ndarray:
    """Accept a :class:`rng.Stream`, a raw key, or an integer seed."""
    if isinstance(stream, rng.Stream):
        return stream.key
    arr = np.asarray(stream)
    if arr.dtype == np.uint64:
        return arr
    return rng.derive_key(int(stream))


def initial_state(model: DiffusionModel, x0, T, keys, policy=AdaptationPolicy.FULL_COPYCAT) -> CisBatch:
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    n = keys.shape[0]
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (n, model.dim))
    x0 = x0.copy()
    if not np.all(model.in_domain(x0)):
        raise DomainError("initial state outside the model domain")
    params = ProposalParams.from_model(model, x0)
    return CisBatch(
        last_event_time=np.zeros(n),
        anchor=x0,
        weight=np.ones(n),
        params=params,
        horizon=np.broadcast_to(np.asarray(T, dtype=float), (n,)).copy(),
        event_count=np.zeros(n, dtype=np.int64),
        eval_count=np.ones(n, dtype=np.int64),
        aborted=np.zeros(n, dtype=bool),
        keys=keys,
        event_index=np.zeros(n, dtype=np.uint64),
        extra={"reference": params.copy(), "policy": AdaptationPolicy(policy)},
    )


def _reanchor(policy: AdaptationPolicy, coef, ref: ProposalParams, idx) -> ProposalParams | None:
    if policy is AdaptationPolicy.FULL_COPYCAT:
        return ProposalParams.from_coefficients(coef.drift, coef.gamma)
    if policy is AdaptationPolicy.DRIFT_ONLY:
        r = ref.take(idx)
        return ProposalParams(coef.drift, r.anchor_gamma, r.anchor_gamma_inv, r.anchor_chol)
    return None


def propagate(model: DiffusionModel, state: CisBatch, until, rate: RenewalRate,
              proposal: EventProposal | None = None, elapsed=None, which=None) -> CisBatch:
    """Advance replicates (in place) through all events up to ``until``.

    ``elapsed`` (per replicate) conditions the pending interarrival on
    exceeding that value; it is how a freshly keyed copy of a particle resumes
    a gap that has already lasted ``elapsed``.  The condition is kept until the
    event actually happens, so a later call re-draws the same value.
    ``which`` restricts the call to a subset of replicates.
    """
    n = len(state)
    d = state.dim
    until = np.broadcast_to(np.asarray(until, dtype=float), (n,))
    state.horizon = np.where(np.ones(n, dtype=bool) if which is None else _mask(which, n), until, state.horizon)
    if elapsed is not None:
        sel = np.ones(n, dtype=bool) if which is None else _mask(which, n)
        state.gap_floor = np.where(sel, np.broadcast_to(np.asarray(elapsed, dtype=float), (n,)), state.gap_floor)
    policy = state.extra.get("policy", AdaptationPolicy.FULL_COPYCAT)
    ref = state.extra.get("reference")
    slots = np.uint64(rng.SLOT_NORMAL) + np.arange(d, dtype=np.uint64)

    active = np.flatnonzero(~state.aborted & (_mask(which, n) if which is not None else True))
    while active.size:
        keys = state.keys[active]
        ev = state.event_index[active]
        u = rng.uniforms(keys, rng.counter(ev, rng.SLOT_INTERARRIVAL))
        tau = sample_interarrival(rate, u, state.gap_floor[active])
        s = state.last_event_time[active]
        t_new = s + tau
        if proposal is None:
            go = t_new <= until[active]
        else:
            # A bridge proposal is degenerate at its terminal time.
            go = t_new < until[active]
        active, keys, ev, tau, s, t_new = active[go], keys[go], ev[go], tau[go], s[go], t_new[go]
        if not active.size:
            break
        z = rng.normals(keys[:, None], rng.counter(ev[:, None], 0) | slots)
        p = state.params.take(active)
        x = state.anchor[active]
        if proposal is None:
            y = copycat_sample(p, x, tau, z)
        else:
            y = proposal.sample(p, s, x, t_new, z)
        ok = model.in_domain(y)
        if not np.all(ok):
            state.aborted[active[~ok]] = True
            state.event_count[active[~ok]] += 1
            active, ev, tau, s, t_new, x, y = active[ok], ev[ok], tau[ok], s[ok], t_new[ok], x[ok], y[ok]
            p = p.take(ok)
            if not active.size:
                break
        coef = target_coefficients(model, y)
        rho = incremental_weight(model, p, x, y, tau, rate, coef)
        if proposal is not None:
            rho = rho * np.exp(copycat_logdensity(p, x, y, tau) - proposal.logdensity(p, s, x, t_new, y))
        state.weight[active] = state.weight[active] * rho
        state.last_event_time[active] = t_new
        state.anchor[active] = y
        state.event_index[active] = ev + np.uint64(1)
        state.gap_floor[active] = 0.0
        state.event_count[active] += 1
        state.eval_count[active] += 1
        new = _reanchor(policy, coef, ref, active)
        if new is not None:
            state.params.put(active, new)
    return state


def _mask(which, n: int) -> np.ndarray:
    which = np.asarray(which)
    if which.dtype == bool:
        return which
    m = np.zeros(n, dtype=bool)
    m[which] = True
    return m


def run_cis_batch(model: DiffusionModel, x0, T: float, rate: RenewalRate, keys,
                  policy=AdaptationPolicy.FULL_COPYCAT, proposal: EventProposal | None = None) -> CisBatch:
    """Run one CIS replicate per key up to time ``T``."""
    state = initial_state(model, x0, T, keys, policy)
    return propagate(model, state, T, rate, proposal=proposal)


def run_cis(model: DiffusionModel, x0, T: float, rate: RenewalRate,
            policy=AdaptationPolicy.FULL_COPYCAT, rng_stream=0) -> CisOutput:
    """Single CIS replicate; a DomainError exit is reported through ``aborted``."""
    return run_cis_batch(model, x0, T, rate, np.atleast_1d(stream_key(rng_stream)), policy)[0]


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


class Mode(enum.Enum):
    RAO_BLACKWELL = "rao_blackwell"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class Polynomial:
    """``f(x) = const + linear @ x + x^T quad x`` (vector valued when ``const`` is)."""

    const: np.ndarray | float = 0.0
    linear: np.ndarray | None = None
    quad: np.ndarray | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.const, dtype=float)
        out = np.broadcast_to(out, x.shape[:-1] + out.shape).copy()
        if self.linear is not None:
            out = out + np.einsum("...j,...j->...", _lift(self.linear, out), x[..., None, :]).reshape(out.shape)
        if self.quad is not None:
            q = np.asarray(self.quad, dtype=float)
            out = out + np.einsum("...i,...ij,...j->...", x[..., None, :], _lift_m(q), x[..., None, :]).reshape(out.shape)
        return out

    def gaussian_expectation(self, mean, cov):
        """``E f(Y)`` for ``Y ~ N(mean, cov)`` in closed form."""
        mean = np.asarray(mean, dtype=float)
        out = np.asarray(self.const, dtype=float)
        out = np.broadcast_to(out, mean.shape[:-1] + out.shape).copy()
        if self.linear is not None:
            out = out + np.einsum("...j,...j->...", _lift(self.linear, out), mean[..., None, :]).reshape(out.shape)
        if self.quad is not None:
            q = _lift_m(np.asarray(self.quad, dtype=float))
            m = mean[..., None, :]
            val = np.einsum("...i,...ij,...j->...", m, q, m) + np.einsum("...ij,...ji->...", q, cov[..., None, :, :])
            out = out + val.reshape(out.shape)
        return out


def _lift(linear, out):
    lin = np.asarray(linear, dtype=float)
    return lin if lin.ndim == 2 else lin[None, :]


def _lift_m(quad):
    return quad if quad.ndim == 3 else quad[None, :, :]


def identity_functional(d: int) -> Polynomial:
    return Polynomial(const=np.zeros(d), linear=np.eye(d))


def coordinate_functional(i: int, d: int) -> Polynomial:
    e = np.zeros(d)
    e[i] = 1.0
    return Polynomial(const=0.0, linear=e)


def constant_functional(c: float = 1.0) -> Polynomial:
    return Polynomial(const=float(c))


def _summary(summands: np.ndarray):
    n = summands.shape[0]
    est = summands.mean(axis=0)
    se = summands.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(est)
    return est, se


def expectation_summands(outputs, f, mode=Mode.RAO_BLACKWELL, rng_stream=None) -> np.ndarray:
    """Per-replicate terms ``w * E_q f`` (or ``w * f(x_T)``); aborted replicates are dropped."""
    batch = _as_batch(outputs)
    mode = Mode(mode)
    keep = ~batch.aborted
    mean, cov = batch.proposal_moments()
    w = batch.weight
    if mode is Mode.RAO_BLACKWELL:
        if not isinstance(f, Polynomial):
            raise UnsupportedFunctional("Rao-Blackwellised estimates need an affine or quadratic Polynomial")
        vals = f.gaussian_expectation(mean, cov)
    else:
        d = batch.dim
        slots = np.uint64(rng.SLOT_TERMINAL) + np.arange(d, dtype=np.uint64)
        if rng_stream is None:
            keys, ev = batch.keys, batch.event_index
        else:
            keys = rng.derive_key(int(stream_key(rng_stream)), np.arange(len(batch)))
            ev = np.zeros(len(batch), dtype=np.uint64)
        z = rng.normals(keys[:, None], rng.counter(ev[:, None], 0) | slots)
        x_T = mean + np.einsum("nij,nj->ni", batch.params.anchor_chol, z) * np.sqrt(batch.remaining())[:, None]
        vals = np.asarray(f(x_T), dtype=float)
    w = w.reshape((-1,) + (1,) * (vals.ndim - 1))
    return (w * vals)[keep]


def expectation_estimate(outputs, f, mode=Mode.RAO_BLACKWELL, rng_stream=None):
    """Monte Carlo estimate of ``E f(X_T)`` and its standard error."""
    return _summary(expectation_summands(outputs, f, mode, rng_stream))


def density_estimate(output, y_T) -> np.ndarray:
    """Signed density value ``w * q(x_s, y_T, T - s)`` (one per replicate)."""
    batch = _as_batch(output)
    val = batch.weight * copycat_density(batch.params, batch.anchor, y_T, batch.remaining())
    return val if not isinstance(output, CisOutput) else float(val[0])


def density_estimate_integral(output) -> np.ndarray:
    """``int density_estimate(y) dy``, which equals the weight."""
    return _as_batch(output).weight


# --------------------------------------------------------------------------
# Guided CIS
# --------------------------------------------------------------------------


@dataclass
class GcisResult:
    estimate: np.ndarray
    batch: CisBatch


def run_gcis_batch(model: DiffusionModel, x0, x_T, T: float, rate: RenewalRate, keys,
                   policy=AdaptationPolicy.FULL_COPYCAT) -> GcisResult:
    """Guided CIS density estimates of ``p(x0, x_T, T)``, one per key.

    Event states are drawn from the modified Brownian bridge towards ``x_T``
    with scale ``gamma`` at the current anchor; each increment carries the
    correction ``q / g``.  The estimate is ``q(x_s, x_T, T - s)`` times the
    product of corrected increments.
    """
    x_T = np.asarray(x_T, dtype=float)
    state = initial_state(model, x0, T, keys, policy)
    propagate(model, state, T, rate, proposal=GuidedBridge(x_T, T))
    assert np.all(state.last_event_time[~state.aborted] < T)
    est = density_estimate(state, x_T)
    est = np.where(state.aborted, np.nan, est)
    return GcisResult(est, state)


def run_gcis(model: DiffusionModel, x0, x_T, T: float, rate: RenewalRate, rng_stream=0) -> float:
    res = run_gcis_batch(model, x0, x_T, T, rate, np.atleast_1d(stream_key(rng_stream)))
    return float(res.estimate[0])


def replicate_keys(seed: int, n: int, start: int = 0, *path) -> np.ndarray:
    """Stream keys for replicates ``start .. start + n - 1`` of a run."""
    return np.atleast_1d(rng.derive_key(seed, *path, np.arange(start, start + n, dtype=np.uint64)))


def mean_weight(batch: CisBatch):
    return _summary(batch.weight[~batch.aborted])


Functional = Callable[[np.ndarray], np.ndarray]
