"""Acceptance criteria 1-10, each reported as one PASS/FAIL line."""
import numpy as np
import pytest
from scipy import stats as sstats

from cisim.baselines import sis_known_density
from cisim.cis import (
    coordinate_functional,
    density_estimate,
    expectation_estimate,
    expectation_summands,
    identity_functional,
    replicate_keys,
    run_cis_batch,
)
from cisim.harness.cli import run_checks
from cisim.harness.config import from_mapping
from cisim.harness.presets import preset
from cisim.harness.runner import csv_text, run_experiment, simulate
from cisim.models import BUILT_IN, CIR2D, SV, OU1D, ConstantCoeff
from cisim.proposals import ProposalParams, copycat_sample
from cisim.renewal import RenewalRate, interarrival_cdf, sample_interarrival
from cisim.resampling import Scheme, run_resampled
from cisim.wagner import WagnerConfig, wgr_density_estimate
from cisim.weights import incremental_weight, incremental_weight_1d

from conftest import within

RATE = RenewalRate(1.0, 0.5)
SV_X0 = [1.0, 0.0]


def test_c1_formula_cross_check(report):
    gen = np.random.default_rng(1)
    ou = OU1D(0.5, 1.0, 0.4)
    x, y = gen.normal(1.0, 1.0, (1000, 1)), gen.normal(1.0, 1.0, (1000, 1))
    u = gen.uniform(0.01, 2.0, 1000)
    p = ProposalParams.from_model(ou, x)
    diff = np.max(np.abs(incremental_weight(ou, p, x, y, u, RATE) - incremental_weight_1d(ou, p, x, y, u, RATE)))
    cc = ConstantCoeff([0.3, -0.2], [[1.0, 0.0], [0.4, 0.8]])
    xs = gen.normal(size=(1000, 2))
    rho = incremental_weight(cc, ProposalParams.from_model(cc, xs), xs, gen.normal(size=(1000, 2)), u, RATE)
    ok = diff <= 1e-10 and np.all(rho == 1.0)
    assert report(1, "matrix vs scalar weight, constant coefficients give 1", ok, f"max diff {diff:.1e}")


def _mean_one(model, anchors, us, gen, n=1_000_000):
    worst = 0.0
    for x, u in zip(anchors, us):
        p = ProposalParams.from_model(model, x)
        y = copycat_sample(p, x, u, gen.standard_normal((n, model.dim)))
        ok = model.in_domain(y)
        assert ok.all(), "anchors are chosen so that draws stay in the domain"
        rho = incremental_weight(model, p, x, y, np.full(n, u), RATE)
        worst = max(worst, abs(rho.mean() - 1.0) / (rho.std() / np.sqrt(n)))
    return worst


def test_c2_mean_one_increment(report):
    gen = np.random.default_rng(2)
    sv_anchors = gen.uniform(-2.0, 2.0, (20, 2))
    cir_anchors = gen.uniform(1.5, 4.0, (20, 2))
    z_sv = _mean_one(SV(), sv_anchors, gen.uniform(0.05, 1.0, 20), gen)
    z_cir = _mean_one(CIR2D(), cir_anchors, gen.uniform(0.02, 0.3, 20), gen)
    ok = max(z_sv, z_cir) <= 4.0
    assert report(2, "E_q[rho] = 1 at 20 anchors (SV, CIR)", ok, f"max |z| SV {z_sv:.2f}, CIR {z_cir:.2f}")


def test_c3_unbiased_normalisation(report):
    b = run_cis_batch(SV(), SV_X0, 1.0, RATE, replicate_keys(3, 100_000))
    w = b.weight
    m, se = w.mean(), w.std(ddof=1) / np.sqrt(w.size)
    assert report(3, "mean CIS weight is 1 (SV, T=1)", within(m, se, 1.0), f"{m:.4f} +/- {se:.4f}")


def test_c4_ou_oracle(report):
    ou = OU1D(0.5, 1.0, 0.4)
    x0, T, n = np.array([2.0]), 1.0, 100_000
    mean_truth = 1 + np.exp(-0.5)
    dens_truth = ou.transition_density(x0, x0, T)
    keys = replicate_keys(4, n)
    b = run_cis_batch(ou, x0, T, RATE, keys)
    checks = {}
    m, se = expectation_estimate(b, identity_functional(1))
    checks["cis mean"] = (float(np.ravel(m)[0]), float(np.ravel(se)[0]), mean_truth)
    d = density_estimate(b, x0)
    checks["cis density"] = (d.mean(), d.std(ddof=1) / np.sqrt(n), dens_truth)
    s = sis_known_density(ou, x0, T, 4, keys)
    v = s.weight * s.terminal[:, 0]
    checks["sis mean"] = (v.mean(), v.std(ddof=1) / np.sqrt(n), mean_truth)
    for name, cfg in (("wgr1", WagnerConfig("wgr1", 1.0, 1.0)), ("wgr2", WagnerConfig("wgr2", 1.0, 0.5))):
        e = wgr_density_estimate(ou, x0, x0, T, cfg, keys).estimate
        checks[f"{name} density"] = (e.mean(), e.std(ddof=1) / np.sqrt(n), dens_truth)
    ok = all(within(*c) for c in checks.values())
    detail = "; ".join(f"{k} {c[0]:.4f}+/-{c[1]:.4f} (truth {c[2]:.4f})" for k, c in checks.items())
    assert report(4, "OU oracle for CIS, SIS and WGR", ok, detail)


def test_c5_cir_benchmark(report):
    gcis = preset("cir_k5_gcis", workers=1, seed=5)
    (s,), _ = run_experiment(gcis)
    single = s.estimate[0]
    reps = []
    for r in range(20):
        (sr,), _ = run_experiment(gcis.replace(seed=1000 + r))
        reps.append(sr.estimate[0])
    rep_mean = float(np.mean(reps))
    dg = preset("cir_k4_dg", workers=1, seed=5)
    dg_single = run_experiment(dg)[0][0].estimate[0]
    dg_reps = [simulate(dg.replace(seed=2000 + r), 1.0).estimate.mean() for r in range(200)]
    dg_mean = float(np.mean(dg_reps))
    ok_g = abs(single - 0.6389) <= 3 * 0.0073 and abs(rep_mean - 0.6389) <= 3 * 0.0073
    ok_d = abs(dg_single - 0.6235) <= 3 * 0.0067 and abs(dg_mean - 0.6235) <= 3 * 0.0067
    detail = (f"GCIS K5 run {single:.4f}, mean of 20 runs {rep_mean:.4f} (target 0.6389 +/- 0.0219, "
              f"cost ratio {s.extra['realized_cost_ratio']:.3f}, {s.mean_events:.2f} events/rep); "
              f"DG K4 run {dg_single:.4f}, mean of 200 runs {dg_mean:.4f} (target 0.6235 +/- 0.0201)")
    assert report(5, "CIR benchmark density by GCIS and DG", ok_g and ok_d, detail)


@pytest.mark.parametrize("seed,delta,alpha", [(61, 1.0, 0.5), (62, 0.5, 0.5), (63, 2.0, 0.25), (64, 1.0, 1.0)])
def test_c6_renewal_ks(report, seed, delta, alpha):
    if alpha <= 0.5:
        rate = RenewalRate(delta, alpha)
    else:
        with pytest.warns(RuntimeWarning):
            rate = RenewalRate(delta, alpha)
    u = np.random.default_rng(seed).uniform(size=100_000)
    s = sample_interarrival(rate, u)
    p = sstats.kstest(s, lambda t: interarrival_cdf(rate, t)).pvalue
    assert report(6, f"KS interarrivals delta={delta} alpha={alpha}", p > 0.01, f"p = {p:.3f}")


def test_c7_resampling_consistency(report):
    sv = SV()
    f = coordinate_functional(1, 2)
    ref_b = run_cis_batch(sv, SV_X0, 5.0, RATE, replicate_keys(70, 1_000_000))
    ref, ref_se = (float(np.ravel(v)[0]) for v in expectation_estimate(ref_b, f))
    out = {}
    for scheme in (Scheme.R1, Scheme.R2):
        ests = [float(np.ravel(expectation_estimate(
            run_resampled(sv, SV_X0, 5.0, RATE, 500, 10, 250, scheme, seed=7000 + r).state, f)[0])[0])
            for r in range(40)]
        out[scheme.name] = (np.mean(ests), np.std(ests, ddof=1) / np.sqrt(len(ests)))
    agree = all(abs(m - ref) <= 4 * np.hypot(se, ref_se) for m, se in out.values())
    exact = True
    plain = run_cis_batch(sv, SV_X0, 5.0, RATE, replicate_keys(71, 300))
    for scheme in (Scheme.R1, Scheme.R2):
        ps = run_resampled(sv, SV_X0, 5.0, RATE, 300, 10, 0.0, scheme, seed=71)
        exact &= np.array_equal(ps.state.weight, plain.weight) and np.array_equal(ps.state.anchor, plain.anchor)
    detail = f"plain {ref:.4f}+/-{ref_se:.4f}; " + "; ".join(
        f"{k} {m:.4f}+/-{se:.4f}" for k, (m, se) in out.items()) + f"; C=0 bit-exact {exact}"
    assert report(7, "CIS-R1/R2 agree with plain CIS (SV, T=5)", agree and exact, detail)


def _repeat_estimates(model, T, scheme, n, reps, seed):
    f = coordinate_functional(1, 2)
    if scheme is None:
        b = run_cis_batch(model, SV_X0, T, RATE, replicate_keys(seed, n * reps))
        terms = np.zeros(n * reps)
        terms[~b.aborted] = np.ravel(expectation_summands(b, f))
        return terms.reshape(reps, n).mean(axis=1)
    return np.array([float(np.ravel(expectation_estimate(
        run_resampled(model, SV_X0, T, RATE, n, int(2 * T), n / 2, scheme, seed=seed + r).state, f)[0])[0])
        for r in range(reps)])


def test_c8_horizon_scaling(report):
    sv = SV()
    rmse = {}
    for T in range(1, 7):
        reps = 100 if T == 6 else 20
        for name, scheme in (("cis", None), ("r1", Scheme.R1), ("r2", Scheme.R2)):
            e = _repeat_estimates(sv, float(T), scheme, 1000, reps, 8000 + 100 * T)
            rmse[(name, T)] = float(np.sqrt(np.mean(e**2)))  # E[X_2,T] = 0
    order = rmse[("r2", 6)] < rmse[("r1", 6)] < rmse[("cis", 6)]

    budget, reps, T, y = 20_000, 100, 3.0, np.array(SV_X0)
    mads = {}
    for name, cfg in (("wgr1", WagnerConfig("wgr1", 1.0, 1.0)), ("wgr2", WagnerConfig("wgr2", 0.5, 0.5))):
        pilot = wgr_density_estimate(sv, y, y, T, cfg, replicate_keys(80, 5000))
        n = int(round(budget / pilot.eval_count.mean()))
        res = wgr_density_estimate(sv, y, y, T, cfg, replicate_keys(81, n * reps))
        e = np.where(res.aborted, 0.0, res.estimate).reshape(reps, n).mean(axis=1)
        mads[name] = float(np.median(np.abs(e - np.median(e))))
    wgr_ok = mads["wgr2"] < mads["wgr1"]
    table = ", ".join(f"T={T}: " + "/".join(f"{rmse[(m, T)]:.3f}" for m in ("cis", "r1", "r2")) for T in range(1, 7))
    detail = f"RMSE cis/r1/r2 {table}; MAD at cost {budget}: wgr1 {mads['wgr1']:.4f}, wgr2 {mads['wgr2']:.4f}"
    assert report(8, "RMSE R2 < R1 < CIS at T=6, WGR2 MAD < WGR1", order and wgr_ok, detail)


def test_c9_derivatives(report):
    results = [r for r in run_checks() if r[0].startswith("derivatives")]
    ok = len(results) == len(BUILT_IN) and all(r[1] for r in results)
    assert report(9, "check_derivatives on every built-in model", ok, "; ".join(f"{r[0]}: {r[2]}" for r in results))


def test_c10_reproducibility(report):
    base = {"model": "sv", "method": "cis", "horizons": [1, 2], "n_replicates": 5000, "chunk_size": 500, "seed": 10}
    one = csv_text(run_experiment(from_mapping({**base, "workers": 1}))[1])
    eight = csv_text(run_experiment(from_mapping({**base, "workers": 8}))[1])
    assert report(10, "CSV byte-identical at 1 and 8 workers", one == eight, f"{len(one)} bytes")
