"""Incremental weights of copycat CIS and the operator kernels behind them.

For a proposal with constant drift ``b_t`` and variance ``g_t`` (the copycat
parameters), the incremental weight at an event after elapsed time ``u`` is

    rho = 1 + [ (K - K_t) q ](y) / (lambda(u) q(y))

with ``K`` the forward operator of the target.  Writing ``Lam`` and ``Kq`` for
the gradient of ``log q`` and the Hessian of ``q`` over ``q``:

    (K q) / q   = 1/2 [gamma(y) : Kq + g2(y) : 1] + [g1(y) 1 - b(y)] . Lam - b1(y) . 1
    (K_t q) / q = 1/2 g_t : Kq - b_t . Lam

and ``rho`` is their difference scaled by ``1 / lambda(u)``.  ``rho`` can be
negative; weights are kept as signed reals.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError
from .models import DiffusionModel
from .proposals import ProposalParams, copycat_density, log_density_derivs
from .renewal import RenewalRate


class TargetCoefficients(NamedTuple):
    drift: np.ndarray
    gamma: np.ndarray
    drift_diag_deriv: np.ndarray
    gamma_first_deriv: np.ndarray
    gamma_second_deriv: np.ndarray


def target_coefficients(model: DiffusionModel, y) -> TargetCoefficients:
    y = np.asarray(y, dtype=float)
    model.check_domain(y)
    return TargetCoefficients(
        model.drift(y),
        model.gamma(y),
        model.drift_diag_deriv(y),
        model.gamma_first_deriv(y),
        model.gamma_second_deriv(y),
    )


def forward_ratio(coef: TargetCoefficients, lam: np.ndarray, kmat: np.ndarray) -> np.ndarray:
    """``(K q)(y) / q(y)`` for the target operator."""
    second = 0.5 * (np.sum(coef.gamma * kmat, axis=(-2, -1)) + np.sum(coef.gamma_second_deriv, axis=(-2, -1)))
    first = np.sum((np.sum(coef.gamma_first_deriv, axis=-1) - coef.drift) * lam, axis=-1)
    return second + first - np.sum(coef.drift_diag_deriv, axis=-1)


def proposal_ratio(params: ProposalParams, lam: np.ndarray, kmat: np.ndarray) -> np.ndarray:
    """``(K_t q)(y) / q(y)`` for the constant-coefficient proposal operator."""
    return 0.5 * np.sum(params.anchor_gamma * kmat, axis=(-2, -1)) - np.sum(params.anchor_drift * lam, axis=-1)


def incremental_weight(model: DiffusionModel, params: ProposalParams, x, y, u, rate: RenewalRate,
                       coef: TargetCoefficients | None = None) -> np.ndarray:
    """Copycat incremental weight at a new value ``y`` reached after elapsed time ``u``.

    ``coef`` may carry the target coefficients at ``y`` when the caller has
    them already (the simulation loop reuses them for the next anchor).
    """
    if coef is None:
        coef = target_coefficients(model, y)
    u = np.asarray(u, dtype=float)
    d = log_density_derivs(params, x, y, u)
    diff = forward_ratio(coef, d.lambda_vec, d.k_mat) - proposal_ratio(params, d.lambda_vec, d.k_mat)
    return 1.0 + diff / rate.rate(u)


def incremental_weight_1d(model: DiffusionModel, params: ProposalParams, x, y, u, rate: RenewalRate) -> np.ndarray:
    """Scalar form of the incremental weight (``d = 1`` only), written out term by term."""
    if model.dim != 1:
        raise DimensionError("incremental_weight_1d needs a one-dimensional model")
    x = np.asarray(x, dtype=float)[..., 0]
    yv = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    bx = params.anchor_drift[..., 0]
    gx = params.anchor_gamma[..., 0, 0]
    by = model.drift(yv)[..., 0]
    gy = model.gamma(yv)[..., 0, 0]
    dg = model.gamma_first_deriv(yv)[..., 0, 0]
    d2g = model.gamma_second_deriv(yv)[..., 0, 0]
    db = model.drift_diag_deriv(yv)[..., 0]
    yv = yv[..., 0]
    r = yv - x - u * bx
    inner = 0.5 * (gy - gx) * (r**2 / (gx * u) - 1.0) + (by - bx - dg) * r
    return 1.0 + (inner / (gx * u) + 0.5 * d2g - db) / rate.rate(u)


def backward_kernel(model: DiffusionModel, y, z, r) -> np.ndarray:
    """``[(L - L_z) p_z](y)`` where ``p_z(y) = N(z; y + r b(z), r gamma(z))``.

    ``L`` is the backward generator of the target acting on ``y`` and ``L_z``
    that of the constant-coefficient diffusion frozen at ``z``.  This is the
    kernel of the integral equation

        p(x0, z, t) = p_z(x0, t) + int_0^t int p(x0, y, s) C(y, z, t - s) dy ds,

    and it reuses the copycat log-density derivatives (with the roles of the
    two arguments of ``q`` swapped: the gradient in ``y`` is ``-Lam``).
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    frozen = ProposalParams.from_model(model, z)
    model.check_domain(y)
    d = log_density_derivs(frozen, y, z, r)
    by = model.drift(y)
    gy = model.gamma(y)
    ratio = (-np.sum((by - frozen.anchor_drift) * d.lambda_vec, axis=-1)
             + 0.5 * np.sum((gy - frozen.anchor_gamma) * d.k_mat, axis=(-2, -1)))
    return ratio * copycat_density(frozen, y, z, r)


def frozen_density(model: DiffusionModel, x, z, r) -> np.ndarray:
    """``N(z; x + r b(z), r gamma(z))``, the leading term of the kernel expansion."""
    frozen = ProposalParams.from_model(model, z)
    return copycat_density(frozen, x, z, r)

