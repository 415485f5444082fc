"""Command line entry point: ``qdefrag {run,oracle-check,roundtrip,gram-selftest}``.

Exit codes: 0 pass, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import ConfigError, RunConfig, compare_with_oracle, gram_selftest, run_experiment
from .model import SX, SZ, make_layout, random_state
from .protocol import logical_memory_gate, run_roundtrip
from .qcore import StateVector

GATES = {"x": SX, "z": SZ}


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_run(args):
    cfg = RunConfig.load(args.config)
    summary = run_experiment(cfg)
    _print(summary)
    return 0 if summary["passed"] else 1


def cmd_oracle(args):
    cfg = RunConfig.load(args.config)
    try:
        report = compare_with_oracle(cfg)
    except ValueError as exc:
        raise ConfigError("oracle_steps", str(exc)) from None
    for row in report.rows:
        print(f"step {row.step:3d}  rho_diff {row.rho_diff:.3e}  gram_diff {row.gram_diff:.3e}"
              f"  m1_leakage {row.m1_leakage:.3e}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_roundtrip(args):
    cfg = RunConfig.load(args.config)
    partition = cfg.partition
    layout = make_layout(partition)
    psi = random_state(partition.space_V, args.seed)
    gate, target = None, psi
    if args.gate != "none":
        g = np.kron(GATES[args.gate], np.eye(partition.dim_V // 2))
        gate = lambda st: logical_memory_gate(st, g)  # noqa: E731
        target = StateVector(psi.space, g @ psi.amp, normalized=True)
    fid, traces = run_roundtrip(cfg.spec, partition, layout, cfg.step_time, cfg.steps, psi,
                                memory_gate=gate, target=target, rel_tol=cfg.rank_rel_tol)
    r = traces[-1].residual_weight if traces else 1.0
    if args.gate == "none":
        floor = 1 - 1e-9
    else:
        floor = 1 - (2 * np.sqrt(r) + 2 * r) ** 2 - 1e-9
    ok = fid >= floor
    _print({"fidelity": fid, "residual_weight": r, "fidelity_floor": max(floor, 0.0),
            "gate": args.gate, "steps": cfg.steps, "passed": bool(ok)})
    return 0 if ok else 1


def cmd_selftest(args):
    res = gram_selftest(args.trials, args.seed)
    _print(res)
    return 0 if res["passed"] else 1


def build_parser():
    p = argparse.ArgumentParser(prog="qdefrag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="download with defragmentation, write CSV trace")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle-check", help="compare against the naive growing-memory protocol")
    o.add_argument("--config", required=True)
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("roundtrip", help="download, optional memory gate, upload")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--gate", choices=("x", "z", "none"), default="none",
                   help="logical gate on the first site, applied through the stored images")
    t.set_defaults(func=cmd_roundtrip)

    s = sub.add_parser("gram-selftest", help="randomized defrag property suite")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
