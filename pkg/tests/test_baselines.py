import numpy as np
import pytest

from cisim.baselines import dg_density_estimate, euler_simulate, sis_known_density, _step_normals
from cisim.cis import replicate_keys
from cisim.errors import ConfigError
from cisim.models import ConstantCoeff, OU1D
from cisim.proposals import ProposalParams, copycat_sample

from conftest import within


def test_euler_single_step_is_copycat_draw(sv):
    keys = replicate_keys(3, 500)
    x0 = np.array([1.0, 0.0])
    res = euler_simulate(sv, x0, 0.7, 1, keys)
    xs = np.broadcast_to(x0, (500, 2))
    y = copycat_sample(ProposalParams.from_model(sv, xs), xs, np.full(500, 0.7), _step_normals(keys, 0, 2))
    assert np.allclose(res.terminal, y, rtol=0, atol=1e-12)


def test_euler_constant_exact_law(const2):
    res = euler_simulate(const2, [0.1, 0.2], 2.0, 8, replicate_keys(5, 100_000))
    x = res.terminal
    m = np.array([0.1, 0.2]) + 2.0 * np.array([0.3, -0.2])
    s = np.array([[1.0, 0.0], [0.4, 0.8]])
    cov = 2.0 * s @ s.T
    assert np.allclose(x.mean(axis=0), m, atol=4 * np.sqrt(np.diag(cov) / x.shape[0]))
    assert np.allclose(np.cov(x.T), cov, rtol=0.02, atol=0.02)


def test_euler_ou_bias_shrinks(ou):
    truth = ou.mean(np.array([2.0]), 1.0)[0]
    # Euler mean of OU is exact in closed form: mu + (x0 - mu)(1 - rho h)^M
    for M in (1, 4, 64):
        res = euler_simulate(ou, [2.0], 1.0, M, replicate_keys(7, 200_000))
        em = res.terminal[:, 0]
        expected = 1.0 + (1 - 0.5 / M) ** M
        assert within(em.mean(), em.std() / np.sqrt(em.size), expected)
    assert abs((1 + (1 - 0.5 / 64) ** 64) - truth) < abs((1 + 0.5 ** 1) - truth)


def test_euler_aborts_out_of_domain():
    from cisim.models import CIR2D
    cir = CIR2D(sigma1=2.0, sigma2=2.0)
    res = euler_simulate(cir, [0.05, 0.05], 1.0, 4, replicate_keys(1, 2000))
    assert res.aborted.any()
    assert np.all(np.isfinite(res.terminal))


def test_dg_single_interval_is_euler_density(sv):
    x0, xT = np.array([1.0, 0.0]), np.array([0.8, 0.3])
    res = dg_density_estimate(sv, x0, xT, 0.5, 1, replicate_keys(2, 4))
    from cisim.proposals import copycat_density
    q = copycat_density(ProposalParams.from_model(sv, x0[None]), x0[None], xT[None], np.array([0.5]))
    assert np.allclose(res.values, q[0])
    assert res.estimate == pytest.approx(q[0])


@pytest.mark.parametrize("fixed", [False, True])
def test_dg_constant_exact_every_path(const2, fixed):
    x0, xT = np.array([0.1, 0.2]), np.array([0.6, -0.5])
    truth = const2.transition_density(x0, xT, 1.5)
    for M in (2, 5, 16):
        res = dg_density_estimate(const2, x0, xT, 1.5, M, replicate_keys(M, 50), fixed_anchor=fixed)
        assert np.allclose(res.values, truth, rtol=1e-9)


def test_dg_bias_shrinks_with_m(ou):
    x0, y = np.array([2.0]), np.array([2.0])
    truth = ou.transition_density(x0, y, 1.0)
    errs = []
    for M in (1, 2, 4, 16):
        v = dg_density_estimate(ou, x0, y, 1.0, M, replicate_keys(M, 200_000)).values
        errs.append(abs(v.mean() - truth))
    assert errs[0] > errs[1] > errs[2] > errs[3]
    assert errs[3] < 0.01


def test_dg_fixed_anchor_differs_for_state_dependent_scale(sv):
    x0 = np.array([1.0, 0.0])
    keys = replicate_keys(1, 100)
    a = dg_density_estimate(sv, x0, x0, 1.0, 4, keys).values
    b = dg_density_estimate(sv, x0, x0, 1.0, 4, keys, fixed_anchor=True).values
    assert not np.allclose(a, b)
    assert np.all(np.isfinite(a) & np.isfinite(b))


def test_sis_identity_when_proposal_exact():
    cc = ConstantCoeff([0.2], [[0.5]])
    res = sis_known_density(cc, [0.0], 1.0, 3, replicate_keys(1, 1000))
    assert np.allclose(res.weight, 1.0)


@pytest.mark.parametrize("M", [1, 4, 16])
def test_sis_ou_unbiased_for_every_m(ou, M):
    res = sis_known_density(ou, [2.0], 1.0, M, replicate_keys(M, 100_000))
    truth = ou.mean(np.array([2.0]), 1.0)[0]
    v = res.weight * res.terminal[:, 0]
    assert within(v.mean(), v.std() / np.sqrt(v.size), truth)
    assert within(res.weight.mean(), res.weight.std() / np.sqrt(v.size), 1.0)


def test_step_count_validation(ou):
    for f in (lambda: euler_simulate(ou, [2.0], 1.0, 0, [1]),
              lambda: dg_density_estimate(ou, [2.0], [2.0], 1.0, 0, [1]),
              lambda: sis_known_density(ou, [2.0], 1.0, 0, [1])):
        with pytest.raises(ConfigError):
            f()
