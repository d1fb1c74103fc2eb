"""Command-line front end.

Subcommands: generate, train, sweep-temperature, diagnose, report. All take
a JSON config file; individual fields can be overridden with repeated
--set dotted.key=value flags. Exit codes: 0 success, 1 configuration
error, 2 any cell/training failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import (
    ConfigError,
    ExperimentConfig,
    diagnose,
    generate_dataset,
    report,
    run_experiment,
    sweep_temperature,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip(), parsed


def _apply_overrides(raw: dict, overrides: list) -> dict:
    for item in overrides:
        key, value = _parse_override(item)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not a section")
        node[parts[-1]] = value
    return raw


def _load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    raw = _apply_overrides(raw, args.set or [])
    if args.out:
        raw["out_dir"] = args.out
    if args.seed_list:
        raw["seeds"] = [int(s) for s in args.seed_list.split(",") if s]
    return ExperimentConfig.from_dict(raw)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a JSON experiment config")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field (repeatable)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed-list", help="comma-separated run seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetsmax",
        description="Train and evaluate noise-aware classifiers with a "
                    "temperature-smoothed stochastic softmax head.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the configured dataset as CSV")
    _add_common(p)
    p.add_argument("--path", required=True, help="output CSV path")

    p = sub.add_parser("train", help="run one (config, seed) training cell")
    _add_common(p)
    p.add_argument("--seed", type=int, help="run seed (default: first of seeds)")

    p = sub.add_parser("sweep-temperature",
                       help="run the full temperature x seed grid")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1,
                   help="parallel cell workers (default 1)")

    p = sub.add_parser("diagnose", help="bias/dispersion diagnostics for a run")
    _add_common(p)
    p.add_argument("--run-dir", required=True, help="directory of one run")
    p.add_argument("--taus", default="0.1,1.0,10.0",
                   help="comma-separated temperatures for the bias table")

    p = sub.add_parser("report", help="consolidate results into CSV + summary")
    p.add_argument("--results", required=True, help="directory holding runs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            summary = report(args.results)
            _print_report(summary)
            return EXIT_OK
        config = _load_config(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "generate":
            ds = generate_dataset(config, args.path)
            print(f"wrote {ds.n_examples} rows x {ds.n_features} features to {args.path}")
            return EXIT_OK
        if args.command == "train":
            seed = args.seed if args.seed is not None else config.seeds[0]
            result = run_experiment(config, seed)
            print(f"run {result.config_hash} tau={result.tau:g} seed={result.seed}: "
                  f"test NLL {result.test.noisy_nll:.4f}, "
                  f"clean acc {result.test.clean_accuracy:.4f} -> {result.run_dir}")
            return EXIT_OK
        if args.command == "sweep-temperature":
            sweep = sweep_temperature(config, workers=args.workers)
            _print_sweep(sweep)
            return EXIT_FAILURE if sweep.failures else EXIT_OK
        if args.command == "diagnose":
            taus = [float(t) for t in args.taus.split(",") if t]
            out = diagnose(args.run_dir, config, taus=taus)
            for row in out["bias"]:
                print(f"tau={row['tau']:g}: bias {row['bias']:.5f} "
                      f"(se {row['stderr']:.5f})")
            return EXIT_OK
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_CONFIG


def _print_sweep(sweep) -> None:
    print(f"tau* = {sweep.tau_star:g} (by mean validation NLL)")
    for tau, row in sweep.summary["per_tau"].items():
        print(f"  tau={tau}: valid NLL {row['mean_valid_nll']:.4f}, "
              f"test NLL {row['mean_test_nll']:.4f} over {row['n_runs']} runs")
    for label, cmp in sweep.summary["comparisons"].items():
        print(f"  vs {label}: test NLL {cmp['mean_test_nll_ours']:.4f} vs "
              f"{cmp['mean_test_nll_baseline']:.4f}, p={cmp['p']:.4g} {cmp['marker']}")
    if sweep.failures:
        print(f"  {len(sweep.failures)} cell(s) failed", file=sys.stderr)


def _print_report(summary: dict) -> None:
    print(f"reference method: {summary['reference']}")
    for name, entry in sorted(summary["methods"].items()):
        line = (f"  {name}: test NLL {entry['mean_test_nll']:.4f} "
                f"(sd {entry['sd_test_nll']:.4f}), "
                f"clean acc {entry['mean_test_clean_acc']:.4f}")
        if "marker" in entry and entry["marker"]:
            line += f" {entry['marker']}"
        print(line)
    if summary["malformed"]:
        print(f"  skipped {len(summary['malformed'])} malformed result file(s)",
              file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
