"""Discretisation-based baselines: Euler simulation, Durham-Gallant, discrete-time SIS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError
from .models import DiffusionModel
from .proposals import (
    ProposalParams,
    _cholesky,
    bridge_moments,
    copycat_logdensity,
    copycat_sample,
    gaussian_logpdf,
)


def _keys(keys) -> np.ndarray:
    return np.atleast_1d(np.asarray(keys, dtype=np.uint64))


def _step_normals(keys, i, d) -> np.ndarray:
    slots = np.uint64(rng.SLOT_NORMAL) + np.arange(d, dtype=np.uint64)
    return rng.normals(keys[:, None], rng.counter(np.full((keys.shape[0], 1), i, dtype=np.uint64), 0) | slots)


def _check_steps(m: int) -> None:
    if int(m) < 1:
        raise ConfigError("the number of steps must be at least 1")


@dataclass
class EulerResult:
    terminal: np.ndarray
    aborted: np.ndarray


def euler_simulate(model: DiffusionModel, x0, T: float, M: int, keys) -> EulerResult:
    """Euler-Maruyama with ``M`` steps of size ``T / M``; one path per key.

    A path that leaves the model domain stops there and is flagged.
    """
    _check_steps(M)
    keys = _keys(keys)
    n, d = keys.shape[0], model.dim
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    model.check_domain(x)
    h = T / M
    aborted = np.zeros(n, dtype=bool)
    for i in range(M):
        live = np.flatnonzero(~aborted)
        if not live.size:
            break
        xl = x[live]
        z = _step_normals(keys[live], i, d)
        step = xl + h * model.drift(xl) + np.sqrt(h) * np.einsum("nij,nj->ni", model.diffusion(xl), z)
        ok = model.in_domain(step)
        aborted[live[~ok]] = True
        x[live[ok]] = step[ok]
    return EulerResult(x, aborted)


@dataclass
class DgResult:
    values: np.ndarray
    aborted: np.ndarray

    @property
    def estimate(self) -> float:
        return float(np.mean(self.values[~self.aborted]))


def dg_density_estimate(model: DiffusionModel, x0, x_T, T: float, M: int, keys,
                        fixed_anchor: bool = False) -> DgResult:
    """Durham-Gallant estimates of ``p(x0, x_T, T)``, one per key.

    Imputes ``M - 1`` interior states on a uniform grid with the modified
    Brownian bridge towards ``x_T`` (scaled by ``gamma`` at the running point,
    or at ``x0`` with ``fixed_anchor``) and returns the ratio of Euler
    transition densities to imputation densities.
    """
    _check_steps(M)
    keys = _keys(keys)
    n, d = keys.shape[0], model.dim
    x_T = np.asarray(x_T, dtype=float)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    model.check_domain(x)
    h = T / M
    logv = np.zeros(n)
    aborted = np.zeros(n, dtype=bool)
    g0 = model.gamma(x[:1])[0]
    for i in range(M - 1):
        live = np.flatnonzero(~aborted)
        if not live.size:
            break
        xl = x[live]
        s = i * h
        scale = np.broadcast_to(g0, (live.size, d, d)) if fixed_anchor else model.gamma(xl)
        mean, cov = bridge_moments(x_T, T, scale, np.full(live.size, s), xl, np.full(live.size, s + h))
        chol = _cholesky(cov)
        y = mean + np.einsum("nij,nj->ni", chol, _step_normals(keys[live], i, d))
        ok = model.in_domain(y)
        aborted[live[~ok]] = True
        live, xl, y, mean, chol = live[ok], xl[ok], y[ok], mean[ok], chol[ok]
        params = ProposalParams.from_model(model, xl)
        logv[live] += copycat_logdensity(params, xl, y, np.full(live.size, h)) - gaussian_logpdf(y, mean, chol=chol)
        x[live] = y
    live = np.flatnonzero(~aborted)
    params = ProposalParams.from_model(model, x[live])
    logv[live] += copycat_logdensity(params, x[live], np.broadcast_to(x_T, (live.size, d)), np.full(live.size, h))
    values = np.where(aborted, np.nan, np.exp(logv))
    return DgResult(values, aborted)


@dataclass
class SisResult:
    terminal: np.ndarray
    weight: np.ndarray


def sis_known_density(model: DiffusionModel, x0, T: float, M: int, keys) -> SisResult:
    """Discrete-time sequential importance sampling with the copycat proposal.

    Needs ``model.transition_density``; the weight picks up the exact ratio
    ``p / q`` at each of the ``M`` steps and is unbiased for any ``M``.
    """
    _check_steps(M)
    keys = _keys(keys)
    n, d = keys.shape[0], model.dim
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    w = np.ones(n)
    h = np.full(n, T / M)
    for i in range(M):
        params = ProposalParams.from_model(model, x)
        y = copycat_sample(params, x, h, _step_normals(keys, i, d))
        w = w * model.transition_density(x, y, h) / np.exp(copycat_logdensity(params, x, y, h))
        x = y
    return SisResult(x, w)
