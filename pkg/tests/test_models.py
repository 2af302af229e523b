import numpy as np
import pytest
from scipy import integrate

from cisim.errors import DimensionError, DomainError
from cisim.models import (
    BUILT_IN,
    CIR2D,
    SV,
    ConstantCoeff,
    FiniteDifferenceModel,
    LogCIR2D,
    OU1D,
    build_model,
    check_derivatives,
    eval_model,
)


def random_points(name, gen, n=100):
    if name == "cir":
        return gen.uniform(0.2, 6.0, size=(n, 2))
    if name == "ou":
        return gen.normal(1.0, 2.0, size=(n, 1))
    if name == "constant":
        return gen.normal(size=(n, 2))
    return gen.normal(0.5, 1.0, size=(n, 2))


MODELS = {
    "constant": lambda: ConstantCoeff([0.3, -0.2], [[1.0, 0.0], [0.4, 0.8]]),
    "ou": lambda: OU1D(0.5, 1.0, 0.4),
    "sv": SV,
    "cir": CIR2D,
    "logcir": LogCIR2D,
}


def test_every_builtin_is_covered():
    assert set(MODELS) == set(BUILT_IN)


def test_constant_coefficients_bundle():
    m = ConstantCoeff([0.0, 0.0], np.eye(2))
    b = eval_model(m, [3.0, -1.0])
    assert np.array_equal(b.drift, [0, 0])
    assert np.array_equal(b.gamma, np.eye(2))
    for arr in (b.drift_diag_deriv, b.gamma_first_deriv, b.gamma_second_deriv):
        assert not np.any(arr)


def test_sv_gamma_at_zero():
    g = SV(1.0, 0.5).gamma(np.array([0.0, 7.0]))
    assert np.allclose(g, np.eye(2), atol=0, rtol=1e-15)


def test_cir_gamma_hand_values():
    g = CIR2D(0.6, 2.5, 0.45, 0.3, 3.0, 0.35, 0.5).gamma(np.array([2.5, 3.0]))
    assert g[0, 0] == pytest.approx(0.50625, rel=1e-14)
    assert g[1, 1] == pytest.approx(0.3675, rel=1e-14)
    assert g[0, 1] == pytest.approx(0.5 * 0.45 * 0.35 * np.sqrt(7.5), rel=1e-14)
    assert g[1, 0] == g[0, 1]


@pytest.mark.parametrize("x", [[0.0, 1.0], [-1.0, 2.0], [np.nan, 1.0]])
def test_cir_domain_guard(x):
    with pytest.raises(DomainError):
        eval_model(CIR2D(), x)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_derivatives_match_finite_differences(name, gen):
    model = MODELS[name]()
    worst = max(check_derivatives(model, x, h=1e-5).max_rel_error for x in random_points(name, gen))
    assert worst < 1e-6


@pytest.mark.parametrize("name", sorted(MODELS))
def test_gamma_symmetric_positive_definite(name, gen):
    model = MODELS[name]()
    x = random_points(name, gen)
    g = model.gamma(x)
    s = model.diffusion(x)
    assert np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=0)
    assert np.allclose(g, s @ np.swapaxes(s, -1, -2), rtol=1e-12, atol=1e-15)
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_constant_check_is_exact():
    assert check_derivatives(MODELS["constant"](), [0.1, 0.2]).max_rel_error == 0.0


def test_ou_drift_derivative_exact():
    assert np.all(OU1D(0.5, 1.0, 0.4).drift_diag_deriv(np.array([[0.3], [5.0]])) == -0.5)


def test_sv_check_at_reference_point():
    assert check_derivatives(SV(), [1.0, 0.0], h=1e-5).passed(1e-6)


def test_batch_and_single_shapes(sv):
    xs = np.array([[1.0, 0.0], [0.5, 2.0]])
    assert sv.drift(xs).shape == (2, 2)
    assert sv.gamma(xs).shape == (2, 2, 2)
    assert np.allclose(sv.gamma(xs)[1], sv.gamma(xs[1]))


def test_logcir_ito_identity_in_distribution():
    # Fine-step Euler of CIR, log-transformed, against fine-step Euler of LogCIR2D.
    gen = np.random.default_rng(5)
    n, steps, T = 20_000, 200, 1.0
    h = T / steps
    cir, lc = CIR2D(), LogCIR2D()
    x = np.tile([2.5, 3.0], (n, 1))
    z = np.log(x)
    for _ in range(steps):
        dw = gen.normal(size=(n, 2)) * np.sqrt(h)
        x = np.maximum(x + h * cir.drift(x) + np.einsum("nij,nj->ni", cir.diffusion(x), dw), 1e-8)
        z = z + h * lc.drift(z) + np.einsum("nij,nj->ni", lc.diffusion(z), dw)
    lx = np.log(x)
    se = np.sqrt(lx.var(axis=0) / n + z.var(axis=0) / n)
    assert np.all(np.abs(lx.mean(axis=0) - z.mean(axis=0)) < 4 * se + 5e-3)
    assert np.allclose(lx.std(axis=0), z.std(axis=0), rtol=0.03)


def test_logcir_density_conversion():
    z = np.log([2.5, 3.0])
    assert LogCIR2D.density_to_cir(z, 7.5) == pytest.approx(1.0)
    assert np.allclose(LogCIR2D.to_cir(LogCIR2D.from_cir([2.5, 3.0])), [2.5, 3.0])


def test_finite_difference_model_matches_analytic(sv):
    fd = FiniteDifferenceModel(2, sv.drift, sv.diffusion)
    x = np.array([0.7, -0.3])
    assert np.allclose(fd.drift_diag_deriv(x), sv.drift_diag_deriv(x), atol=1e-7)
    assert np.allclose(fd.gamma_first_deriv(x), sv.gamma_first_deriv(x), atol=1e-7)
    assert np.allclose(fd.gamma_second_deriv(x), sv.gamma_second_deriv(x), atol=1e-4)


def test_build_model_and_errors():
    assert isinstance(build_model("sv", sigma1=1.0), SV)
    with pytest.raises(KeyError):
        build_model("nope")
    with pytest.raises(DimensionError):
        ConstantCoeff([0.0, 0.0], [[1.0]])


def test_ou_closed_forms(ou):
    assert ou.mean(2.0, 1.0) == pytest.approx(1 + np.exp(-0.5))
    # density integrates to one
    y = np.linspace(-3, 6, 20001)[:, None]
    vals = ou.transition_density(np.array([2.0]), y, 1.0)
    assert integrate.trapezoid(vals, y[:, 0]) == pytest.approx(1.0, abs=1e-8)
