"""Command-line entry point: ``risfed run | eval | validate-config | report``.

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 action-space cap refusal. ``RISFED_OUT_DIR`` overrides the output
directory of ``run``; nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import CLI_ALGOS, load_config, resolved_summary
from .errors import ActionSpaceTooLarge, CheckpointError, ConfigError, TrainingDivergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ACTION_CAP = 4

OUT_DIR_ENV = "RISFED_OUT_DIR"

log = logging.getLogger("risfed")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risfed", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one algorithm and write CSVs, summary and checkpoint")
    run.add_argument("--config", required=True)
    run.add_argument("--algo", choices=sorted(CLI_ALGOS), default=None)
    run.add_argument("--seed", type=_u64, default=None)
    run.add_argument("--episodes", type=_positive, default=None)
    run.add_argument("--out", default=None, help=f"output directory (overridden by ${OUT_DIR_ENV})")
    run.add_argument("--report", action="store_true", help="render figures after the run")

    ev = sub.add_parser("eval", help="greedy evaluation of a saved checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", required=True)
    ev.add_argument("--episodes", type=_positive, default=None)

    val = sub.add_parser("validate-config", help="parse and check a config file")
    val.add_argument("path")

    rep = sub.add_parser("report", help="render PNG figures next to the CSVs of run directories")
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--comparison", default=None, help="path of the overlay plot for several runs")
    return p


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_run(args) -> int:
    from .training import run

    cfg = _load(args.config)
    updates = {}
    if args.algo is not None:
        updates["algorithm"] = CLI_ALGOS[args.algo]
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.episodes is not None:
        updates["episodes"] = args.episodes
    out = os.environ.get(OUT_DIR_ENV) or args.out or cfg.run.out_dir
    updates["out_dir"] = out
    cfg = cfg.copy(run=updates)
    result = run(cfg, out)
    print(json.dumps({"out_dir": out, "algorithm": result.algorithm, "eval_objective": result.eval_objective}))
    if args.report:
        from .plotting import render_report

        render_report([out])
    return EXIT_OK


def cmd_eval(args) -> int:
    from .training import evaluate_checkpoint

    cfg = _load(args.config)
    result = evaluate_checkpoint(cfg, args.checkpoint, args.episodes)
    print(json.dumps(result.summary, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args.path)
    print(json.dumps({"ok": True, "resolved": resolved_summary(cfg)}, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import render_report

    for path in render_report(args.run_dirs, args.comparison):
        print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "validate-config": cmd_validate, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ActionSpaceTooLarge as exc:
        print(f"refused: {exc}; lower num_robots or num_levels, or raise run.action_space_cap", file=sys.stderr)
        return EXIT_ACTION_CAP


if __name__ == "__main__":
    sys.exit(main())
