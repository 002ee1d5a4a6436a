"""Command-line driver.

Subcommands: `config init` (print or write the full default config),
`run` (execute the experiment grid), `eval` (re-score a checkpoint),
`ablate` (losses or rejection axis), `compare` (ours vs NNO vs DeepNNO).
Exit codes: 0 success, 1 config/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .experiments import (
    ConfigError,
    cmd_ablate,
    cmd_compare,
    cmd_run,
    default_config,
    eval_checkpoint,
    load_config,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--output-dir", default=None, help="override config output_dir")
    parser.add_argument("--workers", type=int, default=1, help="parallel (order, run) workers")
    parser.add_argument("--seed", type=int, default=None, help="override training.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owrkit", description="open-world recognition experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_config = sub.add_parser("config", help="config utilities")
    config_sub = p_config.add_subparsers(dest="config_command", required=True)
    p_init = config_sub.add_parser("init", help="print the full default config")
    p_init.add_argument("--out", default=None, help="write to a file instead of stdout")

    p_run = sub.add_parser("run", help="run the experiment grid")
    _add_common(p_run)

    p_eval = sub.add_parser("eval", help="re-evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True, help="per-experiment config.json")
    p_eval.add_argument(
        "--threshold-override",
        default=None,
        help="replace every rejection radius (a float, or 'inf' to disable rejection)",
    )
    p_eval.add_argument("--out", default=None, help="where to write the report JSON")

    p_ablate = sub.add_parser("ablate", help="run one ablation axis")
    p_ablate.add_argument("--axis", required=True, choices=["losses", "rejection"])
    _add_common(p_ablate)

    p_compare = sub.add_parser("compare", help="compare ours / nno / deepnno")
    _add_common(p_compare)
    return parser


def _load_with_seed(args) -> dict:
    resolved = load_config(args.config)
    if args.seed is not None:
        resolved["training"]["seed"] = args.seed
    return resolved


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config":
            text = json.dumps(default_config(), indent=2, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
                print(f"wrote {args.out}")
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "run":
            root = cmd_run(_load_with_seed(args), args.output_dir, args.workers)
            print(f"artifacts in {root}")
            sys.stdout.write((root / "summary.txt").read_text(encoding="utf-8"))
            return 0
        if args.command == "eval":
            resolved = load_config(args.config)
            try:
                model = load_checkpoint(args.checkpoint)
            except FileNotFoundError:
                raise ConfigError(f"checkpoint not found: {args.checkpoint}") from None
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            override = None
            if args.threshold_override is not None:
                try:
                    override = float(args.threshold_override)
                except ValueError:
                    raise ConfigError(
                        f"--threshold-override: not a number: {args.threshold_override!r}"
                    ) from None
            report = eval_checkpoint(model, resolved, override)
            text = json.dumps(report, indent=2, sort_keys=True) + "\n"
            out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".eval.json")
            out.write_text(text, encoding="utf-8")
            sys.stdout.write(text)
            return 0
        if args.command == "ablate":
            root = cmd_ablate(_load_with_seed(args), args.axis, args.output_dir, args.workers)
            print(f"artifacts in {root}")
            sys.stdout.write((root / f"ablate_{args.axis}.txt").read_text(encoding="utf-8"))
            return 0
        if args.command == "compare":
            root = cmd_compare(_load_with_seed(args), args.output_dir, args.workers)
            print(f"artifacts in {root}")
            sys.stdout.write((root / "compare.txt").read_text(encoding="utf-8"))
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime / numeric failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
