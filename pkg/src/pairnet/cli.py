"""Command-line interface: paired tests, rejection-rate simulations, null
distributions. Exit codes: 0 completed, 2 usage/config error, 3 degenerate
data abort."""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import AseConfig, run_ase_test, run_eig_test
from .boottest import run_test
from .exceptions import BootstrapAbortError, DegenerateInputError, PairnetError
from .harness import (
    ExperimentSpec,
    histogram_table,
    make_scenario,
    quantile_report,
    run_experiment,
    sample_statistic_distribution,
)
from .models import Estimator
from .netcore import read_edge_list

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

_MODEL_FLAGS = {
    "chung-lu": "chung_lu",
    "sbm": "sbm",
    "dcbm": "dcbm",
    "rdpg": "rdpg",
    "pabm": "pabm",
    "latent": "latent",
}


def _banner(seed: int, threads: int) -> str:
    return f"pairnet {__version__} | seed={seed} | threads={threads}"


def _read_node_map(path) -> dict[str, int]:
    mapping: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            mapping[line.split()[0]] = len(mapping)
    return mapping


def _load_aligned(path1, path2, node_map_path):
    if node_map_path:
        node_map = _read_node_map(node_map_path)
        return read_edge_list(path1, node_map), read_edge_list(path2, node_map)
    g1 = read_edge_list(path1)
    g2_probe = read_edge_list(path2)
    set1 = set(g1.labels or {})
    set2 = set(g2_probe.labels or {})
    if set1 != set2:
        only1 = sorted(set1 - set2)
        only2 = sorted(set2 - set1)
        raise ValueError(
            "node sets are not aligned; "
            f"only in {path1}: {only1}; only in {path2}: {only2}"
        )
    return g1, read_edge_list(path2, g1.labels)


def _build_estimator(args) -> Estimator:
    family = _MODEL_FLAGS[args.model]
    return Estimator(family=family, K=args.k, d=args.d)


def cmd_test(args) -> int:
    try:
        a1, a2 = _load_aligned(args.graph1, args.graph2, args.node_map)
    except (OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    print(_banner(args.seed, args.threads))
    try:
        if args.method == "boot":
            est = _build_estimator(args)
            result = run_test(
                args.kind, est, a1, a2, args.b, args.alpha, args.seed,
                threads=args.threads,
            )
        elif args.method == "ase":
            cfg = AseConfig(d=args.d or 2, B=args.b)
            result = run_ase_test(args.kind, a1, a2, cfg, args.alpha, args.seed)
        else:
            if args.kind != "equality":
                print("error: --method eig supports only --kind equality",
                      file=sys.stderr)
                return EXIT_USAGE
            result = run_eig_test(a1, a2, args.blocks, args.alpha, seed=args.seed)
    except (DegenerateInputError, BootstrapAbortError) as err:
        print(f"degenerate data: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (PairnetError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    record = result.serialize(verbose=args.verbose)
    record = f"method: {args.method}\n" + record
    print(record, end="")
    decision = "reject H0" if result.reject else "fail to reject H0"
    print(f"decision: {decision}")
    if args.out:
        Path(args.out).write_text(record + f"decision: {decision}\n")
    return EXIT_OK


def _parse_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    return parser


_SCENARIO_FLOAT_KEYS = {
    "eps", "c", "scale", "density", "h1", "h2", "alpha",
}
_SCENARIO_INT_KEYS = {"n", "d"}
_SCENARIO_BOOL_KEYS = {"alt", "fresh_z"}
_SCENARIO_TUPLE_KEYS = {"pi", "beta1", "beta2", "b", "d_alt", "omega"}


def _scenario_from_section(section) -> object:
    params = {}
    name = None
    for key, val in section.items():
        if key == "name":
            name = val
        elif key in _SCENARIO_FLOAT_KEYS:
            params[key] = float(val)
        elif key in _SCENARIO_INT_KEYS:
            params[key] = int(val)
        elif key in _SCENARIO_BOOL_KEYS:
            params[key] = val.lower() in ("1", "true", "yes")
        elif key in _SCENARIO_TUPLE_KEYS:
            params[key] = tuple(float(tok) for tok in val.split(","))
        else:
            raise KeyError(f"unknown scenario key {key!r}")
    if name is None:
        raise KeyError("missing scenario key 'name'")
    return make_scenario(name, **params)


def _estimator_from_section(section) -> Estimator | None:
    if "model" not in section:
        return None
    family = _MODEL_FLAGS.get(section["model"], section["model"])
    return Estimator(
        family=family,
        K=int(section["k"]) if "k" in section else None,
        d=int(section["d"]) if "d" in section else None,
    )


def _resolve_config(path_or_name):
    p = Path(path_or_name)
    if p.exists():
        return p
    bundled = resources.files("pairnet.configs") / f"{path_or_name}.ini"
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"no config file or bundled config {path_or_name!r}")


def cmd_simulate(args) -> int:
    try:
        cfg = _parse_config(_resolve_config(args.config))
        scenario = _scenario_from_section(cfg["scenario"])
        test = cfg["test"]
        run = cfg["run"] if cfg.has_section("run") else {}
        spec = ExperimentSpec(
            scenario=scenario,
            method=test.get("method", "boot"),
            kind=test.get("kind", "equality"),
            estimator=_estimator_from_section(test),
            blocks=int(test.get("blocks", 2)),
            mc_runs=int(run.get("mc_runs", 2000)),
            B=int(test.get("b", 200)),
            alpha=float(test.get("alpha", 0.05)),
            seed=args.seed if args.seed is not None else int(run.get("seed", 0)),
            use_truth_communities=str(
                test.get("use_truth_communities", "false")
            ).lower() in ("1", "true", "yes"),
            threads=args.threads if args.threads else int(run.get("threads", 1)),
        )
    except (OSError, KeyError, ValueError, configparser.Error) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE

    print(_banner(spec.seed, spec.threads))
    print(f"config: scenario={scenario.name} method={spec.method} "
          f"kind={spec.kind} mc_runs={spec.mc_runs} B={spec.B} "
          f"alpha={spec.alpha}")
    try:
        report = run_experiment(spec)
    except (DegenerateInputError, BootstrapAbortError) as err:
        print(f"degenerate data: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    print(f"rejection_rate: {report.rejection_rate:.4f}")
    print(f"wall_time_s: {report.wall_time:.2f}")

    out = Path(args.out or "experiment")
    with open(f"{out}_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "method", "kind", "n", "mc_runs", "B",
                         "alpha", "seed", "rejection_rate"])
        writer.writerow([scenario.name, spec.method, spec.kind, scenario.n,
                         spec.mc_runs, spec.B, spec.alpha, spec.seed,
                         f"{report.rejection_rate:.6f}"])
    with open(f"{out}_pvalues.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "p_value", "reject"])
        for j, (p, r) in enumerate(zip(report.p_values, report.rejects)):
            writer.writerow([j, f"{p:.6f}", int(r)])
    print(f"wrote {out}_report.csv and {out}_pvalues.csv")
    return EXIT_OK


def cmd_nulldist(args) -> int:
    try:
        cfg = _parse_config(_resolve_config(args.config))
        scenario = _scenario_from_section(cfg["scenario"])
        stat_sec = cfg["statistic"]
        run = cfg["run"] if cfg.has_section("run") else {}
        stat = stat_sec.get("kind", "frob")
        params = {}
        if stat in ("frob", "scale"):
            params["estimator"] = _estimator_from_section(stat_sec)
            if params["estimator"] is None:
                raise KeyError("statistic kind frob/scale needs a model")
            params["use_truth_communities"] = str(
                stat_sec.get("use_truth_communities", "false")
            ).lower() in ("1", "true", "yes")
        elif stat == "ase":
            params["d"] = int(stat_sec.get("d", 2))
        elif stat == "eig":
            params["blocks"] = int(stat_sec.get("blocks", 2))
        else:
            raise KeyError(f"unknown statistic kind {stat!r}")
        mc_runs = int(run.get("mc_runs", 2000))
        seed = args.seed if args.seed is not None else int(run.get("seed", 0))
        threads = args.threads if args.threads else int(run.get("threads", 1))
    except (OSError, KeyError, ValueError, configparser.Error) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE

    print(_banner(seed, threads))
    start = time.perf_counter()
    samples = sample_statistic_distribution(
        scenario, stat, mc_runs, seed, threads=threads, **params
    )
    print(f"samples: {len(samples)} in {time.perf_counter() - start:.2f}s")

    out = Path(args.out or "nulldist")
    np.savetxt(f"{out}_samples.csv", samples, delimiter=",", fmt="%.10g")
    probs = (0.05, 0.04, 0.03, 0.02, 0.01)
    with open(f"{out}_quantiles.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["upper_tail_prob", "quantile"])
        for q, val in quantile_report(samples, probs):
            writer.writerow([q, f"{val:.6f}"])
            print(f"upper {q:.0%} quantile: {val:.4f}")
    with open(f"{out}_hist.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, count in histogram_table(samples):
            writer.writerow([f"{lo:.6g}", f"{hi:.6g}", count])
    print(f"wrote {out}_samples.csv, {out}_quantiles.csv, {out}_hist.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairnet",
        description="Tests for equality or proportionality of two node-aligned networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="test two edge-list graphs")
    p_test.add_argument("graph1")
    p_test.add_argument("graph2")
    p_test.add_argument("--kind", choices=["equality", "scaling"],
                        default="equality")
    p_test.add_argument("--method", choices=["boot", "ase", "eig"],
                        default="boot")
    p_test.add_argument("--model", choices=sorted(_MODEL_FLAGS),
                        default="chung-lu")
    p_test.add_argument("--k", type=int, default=None)
    p_test.add_argument("--d", type=int, default=None)
    p_test.add_argument("--blocks", type=int, default=2)
    p_test.add_argument("--b", type=int, default=200)
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--threads", type=int, default=1)
    p_test.add_argument("--node-map", default=None)
    p_test.add_argument("--out", default=None)
    p_test.add_argument("--verbose", action="store_true")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p_sim.add_argument("config", help="config path or bundled config name")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_null = sub.add_parser("nulldist", help="sample a statistic's distribution")
    p_null.add_argument("config", help="config path or bundled config name")
    p_null.add_argument("--seed", type=int, default=None)
    p_null.add_argument("--threads", type=int, default=None)
    p_null.add_argument("--out", default=None)
    p_null.set_defaults(func=cmd_nulldist)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
