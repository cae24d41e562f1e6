"""Command-line interface: simulate, learn, eval, calibrate.

Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
runtime errors (unreadable data, degenerate statistics, nonstationary
models).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .citest import CiTestConfig, ClrtTester
from .data import (DataError, load_dataset, pile, save_dataset_csv,
                   save_dataset_json)
from .evaluate import (NULL_PRESETS, TABLE3_PRESETS, run_calibration,
                       run_table3, table3_row, write_calibration_csv,
                       write_qq_csv, write_table3_csv)
from .graph import GraphError, load_graph_file, node_index
from .learner import LearnConfig, learn_local
from .mmpc import MmpcConfig
from .simulate import (STRONG_RANGE, WEAK_RANGE, SimConfig, SimulationError,
                       alarm_dynamic_skeleton, extend_to_dynamic,
                       generate_dataset, sample_coefficients, sem_to_json)


class UsageError(ValueError):
    """Bad flag combination or unknown name; maps to exit code 2."""


COEFF_RANGES = {"weak": WEAK_RANGE, "strong": STRONG_RANGE}


def _default_seed() -> int:
    raw = os.environ.get("TSDAG_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"TSDAG_SEED must be an integer, got {raw!r}") from None


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (default: $TSDAG_SEED or 0)")


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tslocaldag",
        description="Local causal structure learning from replicated time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a dataset from a dynamic linear SEM")
    sim.add_argument("--graph", help="JSON graph file for the within-time DAG "
                                     "(default: bundled 37-node network)")
    sim.add_argument("--coeff-range", choices=sorted(COEFF_RANGES), default="weak")
    sim.add_argument("--n", type=int, default=500, help="length of each replicate")
    sim.add_argument("--m", type=int, default=1, help="number of replicates")
    sim.add_argument("--lag", type=int, default=1, help="model order q")
    sim.add_argument("--burn-in", type=int, default=200)
    _add_seed(sim)
    sim.add_argument("--out", required=True, help="dataset path (.csv or .json)")
    sim.add_argument("--sem-out", help="also write the sampled model as JSON")

    lrn = sub.add_parser("learn", help="learn the local structure around one variable")
    lrn.add_argument("--data", required=True, help="dataset path (.csv or .json)")
    lrn.add_argument("--target", required=True, help="target variable name")
    lrn.add_argument("--lag", type=int, default=1, help="window depth q")
    lrn.add_argument("--depth", type=int, default=1, help="neighborhood depth d")
    lrn.add_argument("--alpha", type=float, default=0.01)
    lrn.add_argument("--no-rescale", action="store_true",
                     help="skip the serial-dependence correction")
    lrn.add_argument("--ignore-time-order", action="store_true",
                     help="baseline mode: treat lagged columns like current ones")
    lrn.add_argument("--max-sepset-size", type=int, default=3,
                     help="conditioning-set cap; negative means unbounded")
    lrn.add_argument("--out", help="write the learned structure as JSON")

    evl = sub.add_parser("eval", help="replicated simulate-learn-score experiment")
    evl.add_argument("--preset", required=True, choices=sorted(TABLE3_PRESETS))
    evl.add_argument("--algorithm", choices=("tspcd", "pcd"), default="tspcd")
    evl.add_argument("--no-rescale", action="store_true")
    evl.add_argument("--reps", type=int, default=100)
    evl.add_argument("--alpha", type=float, default=0.01)
    evl.add_argument("--depth", type=int, default=1)
    evl.add_argument("--jobs", type=int, default=1)
    _add_seed(evl)
    evl.add_argument("--out", help="write scores as CSV")

    cal = sub.add_parser("calibrate", help="null distribution of the test statistic")
    cal.add_argument("--null", required=True, choices=sorted(NULL_PRESETS))
    cal.add_argument("--reps", type=int, default=1000)
    cal.add_argument("--n", type=int, default=500)
    cal.add_argument("--alpha", type=float, default=0.01)
    cal.add_argument("--bandwidth", type=int, default=None)
    cal.add_argument("--jobs", type=int, default=1)
    _add_seed(cal)
    cal.add_argument("--out", help="write the summary as CSV")
    cal.add_argument("--qq-out", help="write two-column Q-Q data as CSV")

    return parser


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if args.graph:
        dag, p, q, variables = load_graph_file(args.graph)
        if q != 0:
            raise UsageError("--graph must contain a lag-free within-time DAG")
        skel = extend_to_dynamic(dag, q=args.lag, variables=variables)
    else:
        if args.lag != 1:
            raise UsageError("the bundled network only supports --lag 1")
        skel = alarm_dynamic_skeleton()
    cfg = SimConfig(m=args.m, lengths=args.n, coeff_range=COEFF_RANGES[args.coeff_range],
                    burn_in=args.burn_in, seed=seed)
    sem = sample_coefficients(skel, cfg)
    ds = generate_dataset(sem, cfg)
    if args.out.endswith(".json"):
        save_dataset_json(ds, args.out)
    else:
        save_dataset_csv(ds, args.out)
    if args.sem_out:
        with open(args.sem_out, "w") as fh:
            json.dump(sem_to_json(sem, seed=seed), fh, indent=1)
            fh.write("\n")
    print(json.dumps({"command": "simulate", "out": args.out, "n": args.n,
                      "m": args.m, "lag": args.lag, "seed": seed,
                      "coeff_range": args.coeff_range}))
    return 0


def cmd_learn(args) -> int:
    ds = load_dataset(args.data)
    if args.target not in ds.variable_names:
        raise UsageError(f"unknown target {args.target!r}; variables are "
                         f"{ds.variable_names}")
    if args.lag < 0:
        raise UsageError("--lag must be >= 0")
    if args.depth < 1:
        raise UsageError("--depth must be >= 1")
    p, q = ds.p, args.lag
    g = ds.variable_names.index(args.target)
    target = node_index(g, 0, p, q)
    pm = pile(ds, q)
    tester = ClrtTester(pm, CiTestConfig(alpha=args.alpha, rescale=not args.no_rescale))
    cap = None if args.max_sepset_size < 0 else args.max_sepset_size
    cfg = LearnConfig(mmpc=MmpcConfig(max_sepset_size=cap),
                      ignore_time_order=args.ignore_time_order)
    ls = learn_local(tester, p, q, target, args.depth, cfg)
    doc = ls.to_json(ds.variable_names)
    doc["config"] = {"data": args.data, "target": args.target, "lag": q,
                     "depth": args.depth, "alpha": args.alpha,
                     "rescale": not args.no_rescale,
                     "ignore_time_order": args.ignore_time_order,
                     "max_sepset_size": cap, "ci_tests": tester.calls}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")

    def names(nodes):
        return sorted(f"{ds.variable_names[v % p]}[t-{q - v // p}]"
                      if v < p * q else ds.variable_names[v % p] for v in nodes)

    print(json.dumps({"command": "learn", "target": args.target,
                      "parents": names(ls.parents), "children": names(ls.children),
                      "pc": names(ls.pc), "ci_tests": tester.calls,
                      "config": doc["config"]}))
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    report = run_table3(args.preset, algorithm=args.algorithm,
                        rescale=not args.no_rescale, reps=args.reps, seed=seed,
                        alpha=args.alpha, depth=args.depth, jobs=args.jobs)
    method = args.algorithm + ("" if args.no_rescale else "+rescale")
    row = table3_row(args.preset, method, "mean", report)
    if args.out:
        write_table3_csv([row], args.out)
    row["config"] = {"preset": args.preset, "algorithm": args.algorithm,
                     "rescale": not args.no_rescale, "reps": args.reps,
                     "alpha": args.alpha, "depth": args.depth, "seed": seed,
                     "jobs": args.jobs}
    print(json.dumps(row))
    return 0


def cmd_calibrate(args) -> int:
    seed = _resolve_seed(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    report = run_calibration(args.null, reps=args.reps, alpha=args.alpha,
                             n=args.n, seed=seed, bandwidth=args.bandwidth,
                             jobs=args.jobs)
    if args.out:
        write_calibration_csv(report, args.out)
    if args.qq_out:
        write_qq_csv(report, args.qq_out)
    print(json.dumps({
        "command": "calibrate", "null": args.null,
        "ks_rescaled": report.ks_rescaled, "ks_raw": report.ks_raw,
        "rejection_rescaled": report.rejection_rescaled,
        "rejection_raw": report.rejection_raw,
        "mean_lambda": report.mean_lambda,
        "config": {"null": args.null, "reps": args.reps, "n": args.n,
                   "alpha": args.alpha, "bandwidth": args.bandwidth,
                   "seed": seed, "jobs": args.jobs},
    }))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "eval": cmd_eval,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, GraphError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
