"""Proposal transition densities.

* The copycat Gaussian ``q(x, y, u) = N(y; x + u b_k, u gamma_k)`` whose drift
  and variance are frozen at the most recent event.
* The modified (scaled) Brownian bridge pulled towards a terminal value.
* A small interface, :class:`EventProposal`, for drawing the state at an event
  from some other density ``g``; the weight then picks up the correction
  ``q / g``.  The variance-minimising choice is ``g ∝ |rho| q``
  (:func:`optimal_density_unnormalized`), which is rarely tractable but is the
  target to approximate when designing ``g``.

Everything is batched over a leading axis: parameters may be a single anchor
or one anchor per replicate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBridge, SingularCovariance

LOG_2PI = np.log(2.0 * np.pi)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from None


def _solve_lower(chol: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``L^{-1} v`` for batched lower-triangular ``L`` and vectors ``v``."""
    d = chol.shape[-1]
    if d == 1:
        return v / chol[..., 0, :]
    out = np.empty(np.broadcast_shapes(chol.shape[:-1], v.shape))
    for i in range(d):
        acc = v[..., i] - np.einsum("...j,...j->...", chol[..., i, :i], out[..., :i])
        out[..., i] = acc / chol[..., i, i]
    return out


def gaussian_logpdf(y, mean, cov=None, chol=None) -> np.ndarray:
    """Log density of ``N(mean, cov)`` at ``y`` (batched)."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if chol is None:
        chol = _cholesky(np.asarray(cov, dtype=float))
    d = chol.shape[-1]
    z = _solve_lower(chol, y - mean)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * LOG_2PI + logdet + np.sum(z * z, axis=-1))


def gaussian_density(y, mean, cov=None, chol=None) -> np.ndarray:
    return np.exp(gaussian_logpdf(y, mean, cov, chol))


@dataclass(frozen=True)
class ProposalParams:
    """Copycat parameters: drift and variance frozen at the current anchor."""

    anchor_drift: np.ndarray
    anchor_gamma: np.ndarray
    anchor_gamma_inv: np.ndarray
    anchor_chol: np.ndarray

    @classmethod
    def from_coefficients(cls, drift, gamma) -> "ProposalParams":
        drift = np.asarray(drift, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        chol = _cholesky(gamma)
        return cls(drift, gamma, np.linalg.inv(gamma), chol)

    @classmethod
    def from_model(cls, model, x) -> "ProposalParams":
        x = np.asarray(x, dtype=float)
        model.check_domain(x)
        return cls.from_coefficients(model.drift(x), model.gamma(x))

    @property
    def dim(self) -> int:
        return self.anchor_drift.shape[-1]

    def take(self, idx) -> "ProposalParams":
        return ProposalParams(
            self.anchor_drift[idx], self.anchor_gamma[idx], self.anchor_gamma_inv[idx], self.anchor_chol[idx]
        )

    def put(self, idx, other: "ProposalParams") -> None:
        self.anchor_drift[idx] = other.anchor_drift
        self.anchor_gamma[idx] = other.anchor_gamma
        self.anchor_gamma_inv[idx] = other.anchor_gamma_inv
        self.anchor_chol[idx] = other.anchor_chol

    def copy(self) -> "ProposalParams":
        return ProposalParams(*(np.array(a, copy=True) for a in
                                (self.anchor_drift, self.anchor_gamma, self.anchor_gamma_inv, self.anchor_chol)))

    @classmethod
    def broadcast(cls, params: "ProposalParams", n: int) -> "ProposalParams":
        d = params.dim
        return cls(
            np.broadcast_to(params.anchor_drift, (n, d)).copy(),
            np.broadcast_to(params.anchor_gamma, (n, d, d)).copy(),
            np.broadcast_to(params.anchor_gamma_inv, (n, d, d)).copy(),
            np.broadcast_to(params.anchor_chol, (n, d, d)).copy(),
        )


def _u(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("elapsed time u must be positive")
    return u


def copycat_mean(params: ProposalParams, x, u) -> np.ndarray:
    return np.asarray(x, dtype=float) + np.asarray(u, dtype=float)[..., None] * params.anchor_drift


def copycat_logdensity(params: ProposalParams, x, y, u) -> np.ndarray:
    u = _u(u)
    d = params.dim
    z = _solve_lower(params.anchor_chol, np.asarray(y, dtype=float) - copycat_mean(params, x, u))
    logdet = 2.0 * np.sum(np.log(np.diagonal(params.anchor_chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * (LOG_2PI + np.log(u)) + logdet + np.sum(z * z, axis=-1) / u)


def copycat_density(params: ProposalParams, x, y, u) -> np.ndarray:
    """``N(y; x + u b_k, u gamma_k)``."""
    return np.exp(copycat_logdensity(params, x, y, u))


def copycat_sample(params: ProposalParams, x, u, z) -> np.ndarray:
    """``x + u b_k + sqrt(u) sigma_k z`` with ``sigma_k`` the Cholesky factor of ``gamma_k``."""
    u = _u(u)
    z = np.asarray(z, dtype=float)
    noise = np.einsum("...ij,...j->...i", params.anchor_chol, z)
    return copycat_mean(params, x, u) + np.sqrt(u)[..., None] * noise


@dataclass(frozen=True)
class LogDensityDerivs:
    lambda_vec: np.ndarray  # gradient of log q in y
    k_mat: np.ndarray  # Hessian of q in y divided by q


def log_density_derivs(params: ProposalParams, x, y, u) -> LogDensityDerivs:
    u = _u(u)
    r = np.asarray(y, dtype=float) - copycat_mean(params, x, u)
    ginv = params.anchor_gamma_inv
    lam = -np.einsum("...ij,...j->...i", ginv, r) / u[..., None]
    k = lam[..., :, None] * lam[..., None, :] - ginv / u[..., None, None]
    return LogDensityDerivs(lam, k)


# --------------------------------------------------------------------------
# Modified Brownian bridge
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeProposal:
    """Scaled Brownian bridge ending at ``terminal_value`` at time ``horizon``."""

    terminal_value: np.ndarray
    horizon: float
    scale: np.ndarray

    def moments(self, s, x_s, t):
        return bridge_moments(self.terminal_value, self.horizon, self.scale, s, x_s, t)


def bridge_moments(x_T, T, a, s, x_s, t):
    """Mean and covariance of the bridge from ``(s, x_s)`` to ``(T, x_T)`` at time ``t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(t >= T):
        raise DegenerateBridge("bridge evaluated at or after its terminal time")
    if np.any(t <= s):
        raise ValueError("bridge requires s < t")
    span = T - s
    mean = (np.asarray(x_s, dtype=float) * ((T - t) / span)[..., None]
            + np.asarray(x_T, dtype=float) * ((t - s) / span)[..., None])
    cov = np.asarray(a, dtype=float) * ((T - t) * (t - s) / span)[..., None, None]
    return mean, cov


def bridge_density(bp: BridgeProposal, s, x_s, t, x_t) -> np.ndarray:
    mean, cov = bp.moments(s, x_s, t)
    return gaussian_density(x_t, mean, cov)


def bridge_logdensity(bp: BridgeProposal, s, x_s, t, x_t) -> np.ndarray:
    mean, cov = bp.moments(s, x_s, t)
    return gaussian_logpdf(x_t, mean, cov)


def bridge_sample(bp: BridgeProposal, s, x_s, t, z) -> np.ndarray:
    mean, cov = bp.moments(s, x_s, t)
    return mean + np.einsum("...ij,...j->...i", _cholesky(cov), np.asarray(z, dtype=float))


# --------------------------------------------------------------------------
# Event proposals other than the copycat
# --------------------------------------------------------------------------


class EventProposal:
    """Density ``g`` for the state at an event, replacing the copycat draw.

    ``sample`` and ``logdensity`` receive the copycat parameters of the current
    anchor, the anchor time ``s`` and value ``x``, and the event time ``t``.
    """

    def sample(self, params: ProposalParams, s, x, t, z) -> np.ndarray:
        raise NotImplementedError

    def logdensity(self, params: ProposalParams, s, x, t, y) -> np.ndarray:
        raise NotImplementedError


class GuidedBridge(EventProposal):
    """Bridge towards ``terminal_value`` at ``horizon``, scaled by the anchor's gamma."""

    def __init__(self, terminal_value, horizon: float):
        self.terminal_value = np.asarray(terminal_value, dtype=float)
        self.horizon = float(horizon)

    def _bridge(self, params):
        return BridgeProposal(self.terminal_value, self.horizon, params.anchor_gamma)

    def sample(self, params, s, x, t, z):
        return bridge_sample(self._bridge(params), s, x, t, z)

    def logdensity(self, params, s, x, t, y):
        return bridge_logdensity(self._bridge(params), s, x, t, y)


def optimal_density_unnormalized(rho, q):
    """``|rho| q``: the event density minimising the variance of the new weight."""
    return np.abs(rho) * q
