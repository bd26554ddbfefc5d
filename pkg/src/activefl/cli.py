"""Command-line entry point: ``activefl {run,compare,gen-data,validate-config}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datagen import generate, save_dataset
from .exceptions import ActiveFLError, ConfigError
from .orchestrator import ExperimentConfig, compare_strategies, run_experiment
from .reporting import write_json, write_result

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("activefl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError("arguments", message)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"no such file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("--config", "top level must be a JSON object")
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("--config", str(exc)) from exc
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError("--seeds", f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="activefl", description="Active Federated Learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="experiment config JSON")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override master_seed")

    common(sub.add_parser("run", help="run one experiment"))
    p = sub.add_parser("compare", help="uniform vs AFL over several seeds")
    common(p)
    p.add_argument("--seeds", help="comma-separated master seeds (default: 0..9)")
    p.add_argument(
        "--target-round",
        type=int,
        help="use the uniform arm's accuracy at this round as the per-seed target",
    )
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sub.add_parser("gen-data", help="export the synthetic federated dataset as JSON"))
    common(sub.add_parser("validate-config", help="check a config without running"), needs_out=False)
    return parser


def _dispatch(args) -> None:
    cfg = load_config(args.config, args.seed)
    if args.command == "validate-config":
        print(f"config OK: {args.config}")
        return
    out = Path(args.out)
    if args.command == "run":
        result = write_result(run_experiment(cfg), out)
        print(f"wrote {result[0]} and {result[1]}")
    elif args.command == "compare":
        seeds = _parse_seeds(args.seeds) if args.seeds else list(range(10))
        if len(seeds) < 2:
            raise ConfigError("--seeds", "compare needs at least two seeds")
        summary = compare_strategies(cfg, seeds, target_round=args.target_round, n_jobs=args.jobs)
        path = write_json(summary, out / "comparison.json")
        print(
            f"AFL faster on {summary['afl_wins']}/{len(seeds)} seeds, "
            f"median reduction {summary['median_relative_reduction']}; wrote {path}"
        )
    elif args.command == "gen-data":
        ds = generate(cfg.data_spec)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "dataset.json"
        save_dataset(ds, path)
        print(f"wrote {path}")


def main(argv=None) -> int:
    """Parse ``argv`` and run the subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ActiveFLError, ValueError, ArithmeticError, OSError) as exc:
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
