"""CIS with resampling at fixed checkpoints (schemes R1 and R2).

Between checkpoints each particle is a plain CIS trajectory.  At checkpoint
``t_j`` the signed population is tested with ``ESS = (sum |w|)^2 / sum w^2``
and, when it falls below the threshold:

* R1 picks ancestors with probability proportional to ``|w|`` and gives each
  copy the weight ``sign(w) * a / N`` with ``a = sum |w|``;
* R2 draws new states from the absolute mixture ``p_bar_j`` and weights them
  by ``p_hat_j / p_bar_j``; the new particles start at ``t_j``.

A particle that is not resampled keeps its random stream, so with threshold
zero both schemes reproduce plain CIS exactly.  Resampled particles get fresh
streams; an R1 copy resumes its ancestor's current gap conditioned on it having
lasted ``t_j - s`` already.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .cis import AdaptationPolicy, CisBatch, initial_state, propagate, replicate_keys
from .errors import AllZeroWeights, ConfigError, DomainError, ZeroBarDensity
from .models import DiffusionModel
from .proposals import ProposalParams, _solve_lower, copycat_sample, LOG_2PI
from .renewal import RenewalRate

DENSITY_CHUNK = 2**22  # pairwise density evaluations per block


class Scheme(enum.Enum):
    NONE = "none"
    R1 = "r1"
    R2 = "r2"


def ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    a = np.sum(np.abs(w))
    if a == 0:
        raise AllZeroWeights("every particle weight is zero")
    return float(a * a / np.sum(w * w))


@dataclass
class ParticleSystem:
    state: CisBatch
    horizon: float
    n_checkpoints: int
    ess_threshold: float
    seed: int
    j: int = 0
    resample_events: list = field(default_factory=list)
    ess_history: list = field(default_factory=list)
    density_evals: int = 0

    @classmethod
    def initialise(cls, model: DiffusionModel, x0, T: float, n_particles: int, n_checkpoints: int,
                   ess_threshold: float, seed: int, policy=AdaptationPolicy.FULL_COPYCAT) -> "ParticleSystem":
        if n_particles < 1 or n_checkpoints < 1:
            raise ConfigError("n_particles and n_checkpoints must be positive")
        if ess_threshold < 0:
            raise ConfigError("ess_threshold must be non-negative")
        state = initial_state(model, x0, T, replicate_keys(seed, n_particles), policy)
        state.horizon[:] = 0.0
        return cls(state, float(T), int(n_checkpoints), float(ess_threshold), int(seed))

    @property
    def n(self) -> int:
        return len(self.state)

    def checkpoint(self, j: int) -> float:
        return self.horizon if j == self.n_checkpoints else j * self.horizon / self.n_checkpoints

    def weights(self) -> np.ndarray:
        """Current weights; aborted particles carry zero mass."""
        return np.where(self.state.aborted, 0.0, self.state.weight)

    def fresh_keys(self, j: int) -> np.ndarray:
        return np.atleast_1d(rng.derive_key(self.seed, "regen", j, np.arange(self.n, dtype=np.uint64)))


def _remaining(ps: ParticleSystem, j: int) -> np.ndarray:
    u = ps.checkpoint(j) - ps.state.last_event_time
    if np.any(u <= 0):
        raise ValueError("mixture densities need t_j > s for every particle")
    return u


def _component_logdens(params: ProposalParams, x, u, y) -> np.ndarray:
    """``log q_k(y_i)`` for all pairs: returns an (n_points, n_components) array."""
    d = params.dim
    mean = x + u[:, None] * params.anchor_drift
    logdet = 2.0 * np.sum(np.log(np.diagonal(params.anchor_chol, axis1=-2, axis2=-1)), axis=-1) + d * np.log(u)
    rows = max(1, DENSITY_CHUNK // max(1, mean.shape[0]))
    out = np.empty((y.shape[0], mean.shape[0]))
    for lo in range(0, y.shape[0], rows):
        diff = y[lo:lo + rows, None, :] - mean[None, :, :]
        z = _solve_lower(params.anchor_chol[None], diff)
        out[lo:lo + rows] = -0.5 * (d * LOG_2PI + logdet[None, :] + np.sum(z * z, axis=-1) / u[None, :])
    return out


def _mixtures(ps: ParticleSystem, j: int, y):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    w = ps.weights()
    a = np.sum(np.abs(w))
    if a == 0:
        raise AllZeroWeights("every particle weight is zero")
    live = w != 0
    st = ps.state
    q = np.exp(_component_logdens(st.params.take(live), st.anchor[live], _remaining(ps, j)[live], y))
    ps.density_evals += q.size
    return q @ w[live] / ps.n, q @ np.abs(w[live]) / a


def mixture_density_hat(ps: ParticleSystem, j: int, y) -> np.ndarray:
    """``(1/N) sum_i w_i q_i(y)`` with ``q_i`` propagated to ``t_j``."""
    return _mixtures(ps, j, y)[0]


def mixture_density_bar(ps: ParticleSystem, j: int, y) -> np.ndarray:
    """``a^-1 sum_i |w_i| q_i(y)``: a probability density."""
    return _mixtures(ps, j, y)[1]


def _choose(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.size - 1)


def sample_mixture_bar(ps: ParticleSystem, j: int, n: int, key) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` states from ``p_bar_j``; returns the states and their components."""
    w = ps.weights()
    if not np.any(w):
        raise AllZeroWeights("every particle weight is zero")
    keys = np.atleast_1d(rng.derive_key(int(key), np.arange(n, dtype=np.uint64)))
    comp = _choose(np.abs(w), rng.uniforms(keys, rng.counter(0, rng.SLOT_AUX)))
    d = ps.state.dim
    z = rng.normals(keys[:, None], rng.counter(0, 0) | (np.uint64(rng.SLOT_NORMAL) + np.arange(d, dtype=np.uint64)))
    st = ps.state
    y = copycat_sample(st.params.take(comp), st.anchor[comp], _remaining(ps, j)[comp], z)
    return y, comp


def _check_step(ps: ParticleSystem, j: int) -> None:
    if not 0 <= j < ps.n_checkpoints:
        raise ValueError(f"checkpoint index {j} outside [0, {ps.n_checkpoints})")
    if j != ps.j:
        raise ValueError(f"particle system is at checkpoint {ps.j}, not {j}")


def _advance(ps: ParticleSystem, j: int, model: DiffusionModel, rate: RenewalRate) -> ParticleSystem:
    propagate(model, ps.state, ps.checkpoint(j + 1), rate)
    ps.j = j + 1
    return ps


def _resample_due(ps: ParticleSystem) -> bool:
    e = ess(ps.weights())
    ps.ess_history.append(e)
    return e < ps.ess_threshold


def cis_r1_step(ps: ParticleSystem, j: int, model: DiffusionModel, rate: RenewalRate) -> ParticleSystem:
    """Resample at ``t_j`` if the ESS is low, then propagate every particle to ``t_{j+1}``."""
    _check_step(ps, j)
    if _resample_due(ps):
        w = ps.weights()
        a = np.sum(np.abs(w))
        u = rng.uniforms(rng.derive_key(ps.seed, "r1", j), np.arange(ps.n, dtype=np.uint64))
        idx = _choose(np.abs(w), u)
        t_j = ps.checkpoint(j)
        new = ps.state.take(idx)
        new.weight = np.sign(w[idx]) * a / ps.n
        new.keys = ps.fresh_keys(j)
        new.event_index = np.zeros(ps.n, dtype=np.uint64)
        new.extra = ps.state.extra
        new.gap_floor = t_j - new.last_event_time
        ps.state = new
        ps.resample_events.append(j)
    return _advance(ps, j, model, rate)


def cis_r2_step(ps: ParticleSystem, j: int, model: DiffusionModel, rate: RenewalRate) -> ParticleSystem:
    """Regenerate from ``p_bar_j`` at ``t_j`` if the ESS is low, then propagate to ``t_{j+1}``."""
    _check_step(ps, j)
    if _resample_due(ps):
        t_j = ps.checkpoint(j)
        y, _ = sample_mixture_bar(ps, j, ps.n, rng.derive_key(ps.seed, "r2", j))
        p_hat, p_bar = _mixtures(ps, j, y)
        if np.any(p_bar <= 0):
            raise ZeroBarDensity(f"p_bar underflowed to zero at {int(np.sum(p_bar <= 0))} sampled points")
        st = ps.state
        ok = model.in_domain(y)
        y_safe = np.where(ok[:, None], y, st.anchor[np.argmax(ok)] if np.any(ok) else y)
        if not np.any(ok):
            raise DomainError("all regenerated particles left the model domain")
        st.params = ProposalParams.from_model(model, y_safe)
        st.anchor = y_safe
        st.weight = p_hat / p_bar
        st.last_event_time = np.full(ps.n, t_j)
        st.aborted = ~ok
        st.keys = ps.fresh_keys(j)
        st.event_index = np.zeros(ps.n, dtype=np.uint64)
        st.eval_count = st.eval_count + 1
        st.gap_floor = np.zeros(ps.n)
        ps.resample_events.append(j)
    return _advance(ps, j, model, rate)


def run_resampled(model: DiffusionModel, x0, T: float, rate: RenewalRate, n_particles: int,
                  n_checkpoints: int, ess_threshold: float, scheme=Scheme.R1, seed: int = 0,
                  policy=AdaptationPolicy.FULL_COPYCAT) -> ParticleSystem:
    scheme = Scheme(scheme)
    ps = ParticleSystem.initialise(model, x0, T, n_particles, n_checkpoints,
                                   ess_threshold if scheme is not Scheme.NONE else 0.0, seed, policy)
    step = cis_r2_step if scheme is Scheme.R2 else cis_r1_step
    for j in range(n_checkpoints):
        step(ps, j, model, rate)
    return ps
