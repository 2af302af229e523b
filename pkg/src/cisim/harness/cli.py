"""Command line entry point: ``cisim run | preset list | check``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..errors import CisError
from ..models import BUILT_IN, ConstantCoeff, OU1D, SV, CIR2D, LogCIR2D, check_derivatives
from ..proposals import ProposalParams
from ..renewal import RenewalRate
from ..weights import incremental_weight, incremental_weight_1d
from . import config as cfgmod
from .presets import PRESETS, preset_mapping
from .runner import run_experiment, write_outputs

FLAG_KEYS = {"model": "model", "method": "method", "t": "T", "n": "n_replicates", "delta": "delta",
             "alpha": "alpha", "seed": "seed", "out": "out", "workers": "workers", "budget": "budget"}


def build_config(args) -> cfgmod.ExperimentConfig:
    mapping: dict = {}
    if args.preset:
        mapping.update(preset_mapping(args.preset))
    if args.config:
        mapping.update(cfgmod.load(args.config))
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            mapping[key] = value
    for item in args.set or []:
        k, v = cfgmod.parse_override(item)
        mapping[k] = v
    return cfgmod.from_mapping(mapping)


def cmd_run(args) -> int:
    cfg = build_config(args)
    summaries, results = run_experiment(cfg)
    for s in summaries:
        est = ", ".join(f"{e:.6g} +/- {se:.2g}" for e, se in zip(s.estimate, s.stderr))
        print(f"T={s.horizon:g}  {cfg.method}  estimate [{est}]  cost={s.cost}  "
              f"events/rep={s.mean_events:.3g}  aborted={s.aborted}  ({s.wall_time:.1f}s)")
        if s.extra:
            print("  " + json.dumps(s.extra))
    if cfg.out:
        csv_path, json_path = write_outputs(cfg, summaries, results, cfg.out)
        print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_preset_list(args) -> int:
    width = max(map(len, PRESETS))
    for name, (desc, _) in sorted(PRESETS.items()):
        print(f"{name:<{width}}  {desc}")
    return 0


CHECK_STATES = {
    "constant": (lambda: ConstantCoeff([0.3, -0.2], [[1.0, 0.0], [0.4, 0.8]]), [[0.1, 0.2], [-1.0, 2.0]]),
    "ou": (lambda: OU1D(0.5, 1.0, 0.4), [[2.0], [-0.7]]),
    "sv": (SV, [[1.0, 0.0], [-0.5, 2.0], [2.0, -1.0]]),
    "cir": (CIR2D, [[2.5, 3.0], [0.7, 4.0]]),
    "logcir": (LogCIR2D, [[0.9, 1.1], [-0.5, 0.3]]),
}


def run_checks(tol: float = 1e-6, seed: int = 1) -> list[tuple[str, bool, str]]:
    results = []
    for name in BUILT_IN:
        factory, states = CHECK_STATES[name]
        model = factory()
        worst = max(check_derivatives(model, np.array(x)).max_rel_error for x in states)
        results.append((f"derivatives {name}", worst < tol, f"max rel error {worst:.2e}"))
    gen = np.random.default_rng(seed)
    rate = RenewalRate(1.0, 0.5)
    ou = OU1D(0.5, 1.0, 0.4)
    x = gen.normal(size=(1000, 1))
    y = gen.normal(size=(1000, 1))
    u = gen.uniform(0.01, 2.0, size=1000)
    p = ProposalParams.from_model(ou, x)
    diff = np.max(np.abs(incremental_weight(ou, p, x, y, u, rate) - incremental_weight_1d(ou, p, x, y, u, rate)))
    results.append(("matrix vs scalar weight (ou)", diff <= 1e-10, f"max diff {diff:.2e}"))
    cc = ConstantCoeff([0.3, -0.2], [[1.0, 0.0], [0.4, 0.8]])
    xs = gen.normal(size=(100, 2))
    rho = incremental_weight(cc, ProposalParams.from_model(cc, xs), xs, gen.normal(size=(100, 2)),
                             gen.uniform(0.01, 2.0, size=100), rate)
    results.append(("constant coefficients give rho = 1", bool(np.all(rho == 1.0)), ""))
    return results


def cmd_check(args) -> int:
    failed = 0
    for name, ok, detail in run_checks():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")
        failed += not ok
    return 1 if failed else 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cisim", description="Continuous-time importance sampling experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="YAML file of configuration keys")
    run.add_argument("--preset", help="start from a named preset")
    run.add_argument("--model", choices=sorted(BUILT_IN))
    run.add_argument("--method", choices=cfgmod.METHODS)
    run.add_argument("--t", type=float, help="horizon T")
    run.add_argument("--n", type=int, help="number of replicates")
    run.add_argument("--delta", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="CSV output path (a JSON sidecar is written next to it)")
    run.add_argument("--workers", type=int, help="worker processes (default $CISIM_WORKERS or 1)")
    run.add_argument("--budget", type=float, help="cost target K; replicates are calibrated by a pilot run")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")
    run.set_defaults(func=cmd_run)
    pre = sub.add_parser("preset", help="inspect presets")
    pre_sub = pre.add_subparsers(dest="preset_command", required=True)
    pre_sub.add_parser("list", help="list presets").set_defaults(func=cmd_preset_list)
    sub.add_parser("check", help="derivative and weight-formula checks").set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except CisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
