"""Experiment execution.

Replicates are split into fixed chunks of ``chunk_size`` consecutive indices.
Replicate ``i`` always uses the stream key derived from ``(seed, i)``, and
chunks are concatenated in index order, so the per-replicate rows do not depend
on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng
from ..baselines import dg_density_estimate, euler_simulate, sis_known_density
from ..cis import (
    AdaptationPolicy,
    density_estimate,
    expectation_summands,
    identity_functional,
    replicate_keys,
    run_cis_batch,
    run_gcis_batch,
)
from ..models import LogCIR2D, build_model
from ..renewal import RenewalRate
from ..resampling import Scheme, run_resampled
from ..wagner import WagnerConfig, wgr_density_estimate
from .config import ExperimentConfig, from_mapping
from .stats import stats, weight_summary


@dataclass
class Rows:
    estimate: np.ndarray  # (n, k)
    weight: np.ndarray
    n_events: np.ndarray
    eval_count: np.ndarray
    aborted: np.ndarray

    @classmethod
    def concat(cls, parts: list["Rows"]) -> "Rows":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("estimate", "weight", "n_events", "eval_count", "aborted")))


@dataclass
class RunSummary:
    horizon: float
    estimate: list
    stderr: list
    cost: int
    mean_events: float
    aborted: int
    n_replicates: int
    weights: dict
    statistics: list
    wall_time: float
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _rate(cfg: ExperimentConfig) -> RenewalRate:
    return RenewalRate(float(cfg.delta), float(cfg.alpha))


def _model(cfg: ExperimentConfig):
    return build_model(cfg.model, **cfg.resolved_model_params)


def _to_report(cfg: ExperimentConfig, x_T, values):
    if cfg.density_coordinates == "cir":
        return LogCIR2D.density_to_cir(x_T, values)
    return values


def simulate_chunk(cfg: ExperimentConfig, T: float, start: int, size: int) -> Rows:
    """Per-replicate results for replicates ``start .. start + size - 1``."""
    model = _model(cfg)
    x0 = np.asarray(cfg.resolved_x0, dtype=float)
    x_T = np.asarray(cfg.resolved_x_T, dtype=float)
    keys = replicate_keys(int(cfg.seed), size, start)
    m = cfg.method
    ones = np.ones(size)
    if m == "cis":
        with np.errstate(all="ignore"):
            b = run_cis_batch(model, x0, T, _rate(cfg), keys, AdaptationPolicy(cfg.policy))
        if cfg.resolved_target == "density":
            est = _to_report(cfg, x_T, density_estimate(b, x_T))[:, None]
        else:
            est = np.full((size, model.dim), np.nan)
            est[~b.aborted] = expectation_summands(b, identity_functional(model.dim))
        est[b.aborted] = np.nan
        return Rows(est, b.weight, b.event_count, b.eval_count, b.aborted)
    if m == "gcis":
        res = run_gcis_batch(model, x0, x_T, T, _rate(cfg), keys, AdaptationPolicy(cfg.policy))
        b = res.batch
        return Rows(_to_report(cfg, x_T, res.estimate)[:, None], b.weight, b.event_count, b.eval_count, b.aborted)
    if m in ("wgr1", "wgr2"):
        res = wgr_density_estimate(model, x0, x_T, T, WagnerConfig(m, cfg.delta, cfg.alpha), keys)
        return Rows(_to_report(cfg, x_T, res.estimate)[:, None], ones, res.n_points - 1, res.n_points, res.aborted)
    if m == "dg":
        res = dg_density_estimate(model, x0, x_T, T, cfg.m_steps, keys, cfg.fixed_anchor)
        return Rows(_to_report(cfg, x_T, res.values)[:, None], ones, np.full(size, cfg.m_steps - 1),
                    np.full(size, cfg.m_steps), res.aborted)
    if m == "euler":
        res = euler_simulate(model, x0, T, cfg.m_steps, keys)
        est = np.where(res.aborted[:, None], np.nan, res.terminal)
        return Rows(est, ones, np.full(size, cfg.m_steps), np.full(size, cfg.m_steps), res.aborted)
    if m == "sis":
        res = sis_known_density(model, x0, T, cfg.m_steps, keys)
        return Rows(res.weight[:, None] * res.terminal, res.weight, np.full(size, cfg.m_steps),
                    np.full(size, cfg.m_steps + 1), np.zeros(size, dtype=bool))
    if m in ("cis_r1", "cis_r2"):
        scheme = Scheme.R1 if m == "cis_r1" else Scheme.R2
        parts = []
        for r in range(start, start + size):
            sub_seed = int(rng.derive_key(int(cfg.seed), "particles", r))
            with np.errstate(all="ignore"):
                ps = run_resampled(model, x0, T, _rate(cfg), cfg.n_particles, cfg.n_checkpoints,
                                   cfg.ess_threshold, scheme, sub_seed, AdaptationPolicy(cfg.policy))
            st = ps.state
            terms = np.zeros((ps.n, model.dim))
            terms[~st.aborted] = expectation_summands(st, identity_functional(model.dim))
            parts.append(Rows(terms.mean(axis=0)[None], np.array([ps.weights().mean()]),
                              np.array([st.event_count.mean()]), np.array([int(st.eval_count.sum())]),
                              np.array([int(st.aborted.sum())])))
        return Rows.concat(parts)
    raise AssertionError(m)


def _chunk_task(args):
    cfg_dict, T, start, size = args
    return simulate_chunk(from_mapping(cfg_dict), T, start, size)


def simulate(cfg: ExperimentConfig, T: float, n: int | None = None) -> Rows:
    n = cfg.n_replicates if n is None else n
    step = cfg.chunk_size if cfg.method not in ("cis_r1", "cis_r2") else 1
    tasks = [(cfg.resolved() | {"horizons": cfg.horizons}, T, s, min(step, n - s)) for s in range(0, n, step)]
    if cfg.workers == 1 or len(tasks) == 1:
        parts = [_chunk_task(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx) as pool:
            parts = list(pool.map(_chunk_task, tasks))
    return Rows.concat(parts)


def calibrate_replicates(cfg: ExperimentConfig, T: float) -> tuple[int, float]:
    """Replicates needed for cost ``cfg.budget``, from the average cost of a pilot run.

    The pilot uses a separate stream family so it does not overlap the main run.
    """
    pilot = cfg.replace(seed=int(rng.derive_key(int(cfg.seed), "pilot")), n_replicates=cfg.pilot_replicates,
                        budget=None, workers=1)
    rows = simulate(pilot, T, cfg.pilot_replicates)
    per = float(np.mean(rows.eval_count))
    return max(2, int(round(cfg.budget / per))), per


def summarise(cfg: ExperimentConfig, T: float, rows: Rows, wall: float, extra=None) -> RunSummary:
    ok = ~rows.aborted.astype(bool) & np.all(np.isfinite(rows.estimate), axis=1)
    if not np.any(ok):
        cols = [{"n": 0} for _ in range(rows.estimate.shape[1])]
    else:
        cols = [stats(rows.estimate[ok, k], cfg.reference) for k in range(rows.estimate.shape[1])]
    return RunSummary(
        horizon=T,
        estimate=[c.get("mean", float("nan")) for c in cols],
        stderr=[c.get("stderr", float("nan")) for c in cols],
        cost=int(np.sum(rows.eval_count)),
        mean_events=float(np.mean(rows.n_events)),
        aborted=int(np.sum(rows.aborted)),
        n_replicates=int(rows.weight.shape[0]),
        weights=weight_summary(rows.weight),
        statistics=cols,
        wall_time=wall,
        extra=extra or {},
    )


def run_experiment(cfg: ExperimentConfig) -> tuple[list[RunSummary], list[tuple[float, Rows]]]:
    summaries, results = [], []
    for T in cfg.horizon_grid:
        t0 = time.perf_counter()
        extra = {}
        run_cfg = cfg
        if cfg.budget is not None:
            n, per = calibrate_replicates(cfg, T)
            run_cfg = cfg.replace(n_replicates=n)
            extra = {"budget": cfg.budget, "pilot_points_per_replicate": per, "calibrated_replicates": n}
        rows = simulate(run_cfg, T)
        if cfg.budget is not None:
            extra["realized_cost_ratio"] = float(np.sum(rows.eval_count) / cfg.budget)
        summaries.append(summarise(run_cfg, T, rows, time.perf_counter() - t0, extra))
        results.append((T, rows))
    return summaries, results


def csv_text(results: list[tuple[float, Rows]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    k = results[0][1].estimate.shape[1]
    est_cols = ["estimate"] if k == 1 else [f"estimate_{i}" for i in range(k)]
    writer.writerow(["horizon", "replicate", *est_cols, "weight", "n_events", "eval_count", "aborted"])
    for T, rows in results:
        for i in range(rows.weight.shape[0]):
            writer.writerow([repr(T), i, *(repr(float(v)) for v in rows.estimate[i]), repr(float(rows.weight[i])),
                             repr(float(rows.n_events[i])) if rows.n_events.dtype.kind == "f" else int(rows.n_events[i]),
                             int(rows.eval_count[i]), int(rows.aborted[i])])
    return buf.getvalue()


def write_outputs(cfg: ExperimentConfig, summaries, results, out: str | Path) -> tuple[Path, Path]:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out if out.suffix == ".csv" else out.with_suffix(".csv")
    json_path = csv_path.with_suffix(".json")
    csv_path.write_text(csv_text(results))
    json_path.write_text(json.dumps({"config": cfg.resolved(), "summaries": [s.as_dict() for s in summaries]},
                                    indent=2, default=float))
    return csv_path, json_path
