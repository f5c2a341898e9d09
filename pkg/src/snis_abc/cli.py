"""Command-line entry point: ``snis-abc {scaling,baselines,validate,demo}``.

Exit status is 0 on success, 1 when an experiment or property fails and 2
for usage or configuration errors.  On exit 2 nothing is written.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, experiment_config, load_tree
from .demo import DemoOptions, build_scene, mean_errors, write_scene
from .errors import SnisAbcError
from .estimators import abc_centroid
from .harness import run_baseline_comparison, run_scaling_experiment
from .validate import PROPERTIES, ValidateOptions, broken_abc, run_properties

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def default_workers() -> int:
    env = os.environ.get("SNIS_ABC_WORKERS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file, or the name of a bundled config")
    common.add_argument("--out", default="results", help="output directory (default: ./results)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--workers", type=int, help="worker processes (default: $SNIS_ABC_WORKERS or all cores)")
    common.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                        help="dot-path overrides such as harness.trials=100")

    parser = argparse.ArgumentParser(prog="snis-abc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("scaling", parents=[common], help="bias-vs-n scaling run with log-log slope fits")
    sub.add_parser("baselines", parents=[common], help="Standard vs ABC, jackknife, bootstrap and BR-SNIS")
    val = sub.add_parser("validate", parents=[common], help="run the estimator property suite")
    val.add_argument("--properties", nargs="+", choices=sorted(PROPERTIES), help="run only these properties")
    val.add_argument("--break-abc", action="store_true", help="flip the sign of the ABC correction (checker self-test)")
    sub.add_parser("demo", parents=[common], help="write a three-cluster illustration to demo_points.csv")
    return parser


def _tree(args, required: bool) -> dict:
    if args.config is None:
        if required:
            raise ConfigError("--config is required for this command")
        tree = {}
    else:
        tree = load_tree(args.config)
    return apply_overrides(tree, args.overrides)


def _print_slopes(report) -> None:
    for method, fit in report.slopes.items():
        if fit["slope"] is None:
            print(f"{method:>10s}: slope n/a (fewer than 3 usable points)")
        else:
            print(f"{method:>10s}: slope {fit['slope']:+.3f} +- {fit['stderr']:.3f}  (n = {fit['n_used']})")


# Each command is split into a setup step, whose errors are usage errors,
# and a run step returning the exit status.

def setup_scaling(args):
    cfg = experiment_config(_tree(args, required=True), seed=args.seed)
    workers = args.workers or default_workers()

    def run():
        report = run_scaling_experiment(cfg, workers=workers)
        report.write(args.out, "scaling")
        _print_slopes(report)
        return EXIT_OK

    return run


def setup_baselines(args):
    cfg = experiment_config(_tree(args, required=True), seed=args.seed)
    workers = args.workers or default_workers()

    def run():
        report = run_baseline_comparison(cfg, workers=workers)
        report.write(args.out, "baselines")
        print(f"{'n':>5s} {'method':>10s} {'|bias|':>10s} {'var':>10s} {'time us':>10s}")
        for r in report.rows:
            print(f"{r.n:5d} {r.method.value:>10s} {r.bias_naive:10.3e} {r.total_variance:10.3e} {r.mean_time_us:10.1f}")
        _print_slopes(report)
        return EXIT_OK

    return run


def setup_validate(args):
    section = dict(_tree(args, required=False).get("validate", {}))
    if args.seed is not None:
        section["seed"] = args.seed
    opts = ValidateOptions.from_tree(section)
    names = args.properties or list(PROPERTIES)
    abc = broken_abc if args.break_abc else abc_centroid

    def run():
        results = run_properties(names, opts, abc=abc)
        for r in results:
            print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            print(f"failing properties: {', '.join(failed)}")
            return EXIT_FAIL
        return EXIT_OK

    return run


def setup_demo(args):
    section = dict(_tree(args, required=False).get("demo", {}))
    if args.seed is not None:
        section["seed"] = args.seed
    opts = DemoOptions.from_tree(section)

    def run():
        scene = build_scene(opts)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = write_scene(scene, out / "demo_points.csv")
        err_std, err_abc = mean_errors(opts)
        print(f"wrote {rows} rows to {out / 'demo_points.csv'}")
        print(f"mean ||T_n - T*||     = {err_std:.4f}")
        print(f"mean ||T_n^ABC - T*|| = {err_abc:.4f}")
        return EXIT_OK

    return run


COMMANDS = {"scaling": setup_scaling, "baselines": setup_baselines, "validate": setup_validate, "demo": setup_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = COMMANDS[args.command](args)
    except (ConfigError, SnisAbcError, TypeError, ValueError) as exc:
        print(f"snis-abc: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run()
    except SnisAbcError as exc:
        print(f"snis-abc: experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
