"""Diffusion models and the coefficient bundles consumed by the weight formulas.

A model for ``dX = b(X) dt + sigma(X) dB`` in ``d`` dimensions exposes, besides
``b`` and ``sigma``, the infinitesimal variance ``gamma = sigma sigma^T`` and
three derivative bundles:

* ``drift_diag_deriv``   ``[b1(x)]_i   = d b_i / d x_i``
* ``gamma_first_deriv``  ``[g1(x)]_ij  = d gamma_ij / d x_j``
* ``gamma_second_deriv`` ``[g2(x)]_ij  = d^2 gamma_ij / d x_i d x_j``

All coefficient functions accept a single state of shape ``(d,)`` or a batch
of shape ``(n, d)`` and return arrays with the same leading shape.

Log-transformed bivariate CIR
-----------------------------
With ``Z_i = log X_i`` and Ito's formula applied to the bivariate CIR

    dX_i = -rho_i (X_i - mu_i) dt + sigma_i sqrt(X_i) dW_i,   d<W_1, W_2> = rho dt,

one gets

    b_i(z)      = -rho_i + (rho_i mu_i - sigma_i^2 / 2) exp(-z_i)
    gamma_ii(z) = sigma_i^2 exp(-z_i)
    gamma_12(z) = rho sigma_1 sigma_2 exp(-(z_1 + z_2) / 2)

which is defined on the whole plane.  Densities in ``z`` convert back to the
original coordinates by dividing by ``x_1 x_2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class CoefficientBundle:
    drift: np.ndarray
    diffusion: np.ndarray
    gamma: np.ndarray
    drift_diag_deriv: np.ndarray
    gamma_first_deriv: np.ndarray
    gamma_second_deriv: np.ndarray


def _state(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise DimensionError(f"expected state(s) of dimension {dim}, got shape {x.shape}")
    return x


class DiffusionModel:
    """Base class; subclasses implement the coefficient functions."""

    dim: int = 1
    name: str = "model"

    def drift(self, x):
        raise NotImplementedError

    def diffusion(self, x):
        raise NotImplementedError

    def gamma(self, x):
        s = self.diffusion(x)
        return s @ np.swapaxes(s, -1, -2)

    def drift_diag_deriv(self, x):
        raise NotImplementedError

    def gamma_first_deriv(self, x):
        raise NotImplementedError

    def gamma_second_deriv(self, x):
        raise NotImplementedError

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def check_domain(self, x) -> None:
        ok = self.in_domain(x)
        if not np.all(ok):
            raise DomainError(f"{self.name}: state outside the model domain")

    # Closed forms, where known.  Used by oracles and the discrete-time SIS.
    def transition_density(self, x, y, t):
        raise NotImplementedError(f"{self.name} has no closed-form transition density")

    def mean(self, x0, t):
        raise NotImplementedError(f"{self.name} has no closed-form mean")

    def params(self) -> dict:
        return {}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


def eval_model(model: DiffusionModel, x) -> CoefficientBundle:
    """Evaluate all six coefficient quantities at ``x`` (raises DomainError)."""
    x = _state(x, model.dim)
    model.check_domain(x)
    return CoefficientBundle(
        drift=model.drift(x),
        diffusion=model.diffusion(x),
        gamma=model.gamma(x),
        drift_diag_deriv=model.drift_diag_deriv(x),
        gamma_first_deriv=model.gamma_first_deriv(x),
        gamma_second_deriv=model.gamma_second_deriv(x),
    )


class ConstantCoeff(DiffusionModel):
    """Brownian motion with constant drift ``b0`` and diffusion matrix ``sigma0``."""

    name = "constant"

    def __init__(self, b0, sigma0):
        self.b0 = np.atleast_1d(np.asarray(b0, dtype=float))
        self.sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
        self.dim = self.b0.shape[0]
        if self.sigma0.shape != (self.dim, self.dim):
            raise DimensionError("sigma0 must be a d x d matrix")
        self.gamma0 = self.sigma0 @ self.sigma0.T

    def _lead(self, x):
        return np.asarray(x).shape[:-1]

    def drift(self, x):
        return np.broadcast_to(self.b0, self._lead(x) + (self.dim,)).copy()

    def diffusion(self, x):
        return np.broadcast_to(self.sigma0, self._lead(x) + (self.dim, self.dim)).copy()

    def gamma(self, x):
        return np.broadcast_to(self.gamma0, self._lead(x) + (self.dim, self.dim)).copy()

    def drift_diag_deriv(self, x):
        return np.zeros(self._lead(x) + (self.dim,))

    def gamma_first_deriv(self, x):
        return np.zeros(self._lead(x) + (self.dim, self.dim))

    gamma_second_deriv = gamma_first_deriv

    def transition_density(self, x, y, t):
        from .proposals import gaussian_density

        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        mean = x + t[..., None] * self.b0
        cov = t[..., None, None] * self.gamma0
        return gaussian_density(y, mean, cov)

    def mean(self, x0, t):
        return np.asarray(x0, dtype=float) + t * self.b0

    def params(self):
        return {"b0": self.b0.tolist(), "sigma0": self.sigma0.tolist()}


class OU1D(DiffusionModel):
    """``dX = -rho (X - mu) dt + sigma dB``."""

    name = "ou"
    dim = 1

    def __init__(self, rho: float, mu: float, sigma: float):
        self.rho, self.mu, self.sigma = float(rho), float(mu), float(sigma)

    def drift(self, x):
        return -self.rho * (np.asarray(x, dtype=float) - self.mu)

    def diffusion(self, x):
        return np.full(np.shape(x) + (1,), self.sigma)

    def gamma(self, x):
        return np.full(np.shape(x) + (1,), self.sigma**2)

    def drift_diag_deriv(self, x):
        return np.full(np.shape(x), -self.rho)

    def gamma_first_deriv(self, x):
        return np.zeros(np.shape(x) + (1,))

    gamma_second_deriv = gamma_first_deriv

    def mean(self, x0, t):
        return self.mu + (np.asarray(x0, dtype=float) - self.mu) * np.exp(-self.rho * t)

    def variance(self, t):
        return self.sigma**2 * (1.0 - np.exp(-2.0 * self.rho * t)) / (2.0 * self.rho)

    def transition_density(self, x, y, t):
        x = np.asarray(x, dtype=float)[..., 0]
        y = np.asarray(y, dtype=float)[..., 0]
        m = self.mu + (x - self.mu) * np.exp(-self.rho * np.asarray(t))
        v = self.variance(np.asarray(t, dtype=float))
        return np.exp(-0.5 * (y - m) ** 2 / v) / np.sqrt(2.0 * np.pi * v)

    def params(self):
        return {"rho": self.rho, "mu": self.mu, "sigma": self.sigma}


class SV(DiffusionModel):
    """Bivariate stochastic-volatility model.

    ``dX1 = -(s1^2 / 2) tanh(X1) dt + s1 dB1``,
    ``dX2 = s2 (2 + tanh(X1)) dB2``.
    """

    name = "sv"
    dim = 2

    def __init__(self, sigma1: float = 1.0, sigma2: float = 0.5):
        self.sigma1, self.sigma2 = float(sigma1), float(sigma2)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = -0.5 * self.sigma1**2 * np.tanh(x[..., 0])
        return out

    def diffusion(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = self.sigma1
        out[..., 1, 1] = self.sigma2 * (2.0 + np.tanh(x[..., 0]))
        return out

    def gamma(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = self.sigma1**2
        out[..., 1, 1] = (self.sigma2 * (2.0 + np.tanh(x[..., 0]))) ** 2
        return out

    def drift_diag_deriv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = -0.5 * self.sigma1**2 / np.cosh(x[..., 0]) ** 2
        return out

    def gamma_first_deriv(self, x):
        # gamma_22 depends on x1 only and gamma_11 is constant: every
        # d gamma_ij / d x_j vanishes, and so does every d^2 gamma_ij / dx_i dx_j.
        return np.zeros(np.shape(x) + (2,))

    gamma_second_deriv = gamma_first_deriv

    def params(self):
        return {"sigma1": self.sigma1, "sigma2": self.sigma2}


@dataclass(frozen=True)
class CIRParams:
    rho1: float = 0.6
    mu1: float = 2.5
    sigma1: float = 0.45
    rho2: float = 0.3
    mu2: float = 3.0
    sigma2: float = 0.35
    rho: float = 0.5


class CIR2D(DiffusionModel):
    """Bivariate Cox-Ingersoll-Ross process with instantaneous correlation ``rho``.

    Coefficients are only defined on the open positive quadrant; evaluating
    outside it raises :class:`DomainError` rather than clamping.
    """

    name = "cir"
    dim = 2

    def __init__(self, rho1=0.6, mu1=2.5, sigma1=0.45, rho2=0.3, mu2=3.0, sigma2=0.35, rho=0.5):
        self.p = CIRParams(*(float(v) for v in (rho1, mu1, sigma1, rho2, mu2, sigma2, rho)))

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x) & (x > 0.0), axis=-1)

    def _checked(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(self.in_domain(x)):
            raise DomainError("CIR coefficients require strictly positive coordinates")
        return x

    def drift(self, x):
        x = self._checked(x)
        p = self.p
        return np.stack([-p.rho1 * (x[..., 0] - p.mu1), -p.rho2 * (x[..., 1] - p.mu2)], axis=-1)

    def diffusion(self, x):
        x = self._checked(x)
        p = self.p
        r1, r2 = np.sqrt(x[..., 0]), np.sqrt(x[..., 1])
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = p.sigma1 * r1
        out[..., 1, 0] = p.rho * p.sigma2 * r2
        out[..., 1, 1] = np.sqrt(1.0 - p.rho**2) * p.sigma2 * r2
        return out

    def gamma(self, x):
        x = self._checked(x)
        p = self.p
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = p.sigma1**2 * x[..., 0]
        out[..., 1, 1] = p.sigma2**2 * x[..., 1]
        out[..., 0, 1] = out[..., 1, 0] = p.rho * p.sigma1 * p.sigma2 * np.sqrt(x[..., 0] * x[..., 1])
        return out

    def drift_diag_deriv(self, x):
        x = self._checked(x)
        return np.broadcast_to(np.array([-self.p.rho1, -self.p.rho2]), x.shape).copy()

    def gamma_first_deriv(self, x):
        x = self._checked(x)
        p = self.p
        c = p.rho * p.sigma1 * p.sigma2
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = p.sigma1**2
        out[..., 1, 1] = p.sigma2**2
        out[..., 0, 1] = 0.5 * c * np.sqrt(x[..., 0] / x[..., 1])
        out[..., 1, 0] = 0.5 * c * np.sqrt(x[..., 1] / x[..., 0])
        return out

    def gamma_second_deriv(self, x):
        x = self._checked(x)
        p = self.p
        out = np.zeros(x.shape + (2,))
        out[..., 0, 1] = out[..., 1, 0] = 0.25 * p.rho * p.sigma1 * p.sigma2 / np.sqrt(x[..., 0] * x[..., 1])
        return out

    def params(self):
        return dict(vars(self.p))


class LogCIR2D(DiffusionModel):
    """Coordinatewise log transform of :class:`CIR2D` (see module docstring)."""

    name = "logcir"
    dim = 2

    def __init__(self, rho1=0.6, mu1=2.5, sigma1=0.45, rho2=0.3, mu2=3.0, sigma2=0.35, rho=0.5):
        self.p = CIRParams(*(float(v) for v in (rho1, mu1, sigma1, rho2, mu2, sigma2, rho)))
        p = self.p
        self._rate = np.array([p.rho1, p.rho2])
        self._pull = np.array([p.rho1 * p.mu1 - 0.5 * p.sigma1**2, p.rho2 * p.mu2 - 0.5 * p.sigma2**2])
        self._sig2 = np.array([p.sigma1**2, p.sigma2**2])
        self._c = p.rho * p.sigma1 * p.sigma2

    @staticmethod
    def from_cir(x):
        return np.log(np.asarray(x, dtype=float))

    @staticmethod
    def to_cir(z):
        return np.exp(np.asarray(z, dtype=float))

    @staticmethod
    def density_to_cir(z, value):
        """Convert a density in log coordinates at ``z`` to one in CIR coordinates."""
        return np.asarray(value) * np.exp(-np.sum(np.asarray(z, dtype=float), axis=-1))

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        return -self._rate + self._pull * np.exp(-x)

    def diffusion(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p
        e = np.exp(-0.5 * x)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = p.sigma1 * e[..., 0]
        out[..., 1, 0] = p.rho * p.sigma2 * e[..., 1]
        out[..., 1, 1] = np.sqrt(1.0 - p.rho**2) * p.sigma2 * e[..., 1]
        return out

    def gamma(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        e = np.exp(-x)
        out[..., 0, 0] = self._sig2[0] * e[..., 0]
        out[..., 1, 1] = self._sig2[1] * e[..., 1]
        out[..., 0, 1] = out[..., 1, 0] = self._c * np.exp(-0.5 * (x[..., 0] + x[..., 1]))
        return out

    def drift_diag_deriv(self, x):
        return -self._pull * np.exp(-np.asarray(x, dtype=float))

    def gamma_first_deriv(self, x):
        x = np.asarray(x, dtype=float)
        g = self.gamma(x)
        out = np.empty_like(g)
        out[..., 0, 0] = -g[..., 0, 0]
        out[..., 1, 1] = -g[..., 1, 1]
        out[..., 0, 1] = -0.5 * g[..., 0, 1]
        out[..., 1, 0] = -0.5 * g[..., 1, 0]
        return out

    def gamma_second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        g = self.gamma(x)
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 0, 0]
        out[..., 1, 1] = g[..., 1, 1]
        out[..., 0, 1] = 0.25 * g[..., 0, 1]
        out[..., 1, 0] = 0.25 * g[..., 1, 0]
        return out

    def params(self):
        return dict(vars(self.p))


# --------------------------------------------------------------------------
# Finite-difference fallback
# --------------------------------------------------------------------------


def _fd_first(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    """Central differences: returns J with J[..., k] = d f / d x_k."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _fd_mixed(f: Callable, x: np.ndarray, i: int, j: int, h: float) -> np.ndarray:
    """Second derivative d^2 f / dx_i dx_j with one Richardson step (O(h^4))."""

    def raw(step):
        d = x.shape[-1]
        ei = np.zeros(d)
        ej = np.zeros(d)
        ei[i] = step
        ej[j] = step
        if i == j:
            return (f(x + ei) - 2.0 * f(x) + f(x - ei)) / step**2
        return (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * step**2)

    return (4.0 * raw(0.5 * h) - raw(h)) / 3.0


def fd_derivative_bundle(model: DiffusionModel, x, h: float = 1e-5, h2: float | None = None):
    """Finite-difference versions of (b1, g1, g2) at ``x``.

    First derivatives use central differences with step ``h``.  Second
    derivatives use a Richardson-extrapolated central difference with step
    ``h2`` (default ``sqrt(h)``) because a plain second difference at
    ``h = 1e-5`` is dominated by rounding error.
    """
    x = np.asarray(x, dtype=float)
    d = model.dim
    h2 = float(np.sqrt(h)) if h2 is None else h2
    jb = _fd_first(model.drift, x, h)  # [..., i, k] = d b_i / d x_k
    b1 = np.diagonal(jb, axis1=-2, axis2=-1).copy()
    jg = _fd_first(model.gamma, x, h)  # [..., i, j, k] = d gamma_ij / d x_k
    g1 = np.empty(x.shape[:-1] + (d, d))
    g2 = np.empty(x.shape[:-1] + (d, d))
    for i in range(d):
        for j in range(d):
            g1[..., i, j] = jg[..., i, j, j]
            g2[..., i, j] = _fd_mixed(lambda y: model.gamma(y)[..., i, j], x, i, j, h2)
    return b1, g1, g2


class FiniteDifferenceModel(DiffusionModel):
    """Wrap user-supplied drift and diffusion callables; derivatives by finite differences.

    The derivative bundles are only as accurate as the difference quotients
    (roughly 1e-8 relative for smooth coefficients of unit scale).
    """

    name = "fd"

    def __init__(self, dim: int, drift: Callable, diffusion: Callable, h: float = 1e-5,
                 domain: Callable | None = None):
        self.dim = int(dim)
        self._drift = drift
        self._diffusion = diffusion
        self.h = h
        self._domain = domain

    def drift(self, x):
        return np.asarray(self._drift(np.asarray(x, dtype=float)), dtype=float)

    def diffusion(self, x):
        return np.asarray(self._diffusion(np.asarray(x, dtype=float)), dtype=float)

    def in_domain(self, x):
        ok = super().in_domain(x)
        return ok if self._domain is None else ok & np.asarray(self._domain(np.asarray(x, dtype=float)))

    def drift_diag_deriv(self, x):
        return fd_derivative_bundle(self, x, self.h)[0]

    def gamma_first_deriv(self, x):
        return fd_derivative_bundle(self, x, self.h)[1]

    def gamma_second_deriv(self, x):
        return fd_derivative_bundle(self, x, self.h)[2]


@dataclass
class DerivativeReport:
    max_rel_error: float
    errors: dict = field(default_factory=dict)

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_error < tol


def check_derivatives(model: DiffusionModel, x, h: float = 1e-5) -> DerivativeReport:
    """Compare the analytic derivative bundles with finite differences at ``x``.

    Relative error is ``|analytic - fd| / max(1, |fd|)``, elementwise; the
    report carries the worst value per bundle and overall.
    """
    x = _state(x, model.dim)
    model.check_domain(x)
    b1, g1, g2 = fd_derivative_bundle(model, x, h)
    errors = {}
    for name, analytic, approx in (
        ("drift_diag_deriv", model.drift_diag_deriv(x), b1),
        ("gamma_first_deriv", model.gamma_first_deriv(x), g1),
        ("gamma_second_deriv", model.gamma_second_deriv(x), g2),
    ):
        errors[name] = float(np.max(np.abs(analytic - approx) / np.maximum(1.0, np.abs(approx))))
    g = model.gamma(x)
    s = model.diffusion(x)
    errors["gamma_symmetry"] = float(np.max(np.abs(g - np.swapaxes(g, -1, -2)) / np.maximum(1.0, np.abs(g))))
    errors["gamma_factor"] = float(
        np.max(np.abs(g - s @ np.swapaxes(s, -1, -2)) / np.maximum(1.0, np.abs(g)))
    )
    return DerivativeReport(max(errors.values()), errors)


BUILT_IN = {
    "constant": ConstantCoeff,
    "ou": OU1D,
    "sv": SV,
    "cir": CIR2D,
    "logcir": LogCIR2D,
}


def build_model(name: str, **params) -> DiffusionModel:
    try:
        cls = BUILT_IN[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(BUILT_IN)}") from None
    return cls(**params)
