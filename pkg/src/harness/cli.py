"""
Command-line entry point.

    bellhash verify-sim [--config FILE] [--seed N] [--trials N] [--output PATH]
    bellhash bounds --delta 0.5 --key-bits 1
    bellhash run FILE

Exit codes: 0 success, 1 invalid config or usage, 2 runtime failure
(including a failed oracle-check property).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from src.config import PROJECT_ROOT, config
from src.harness.experiment_runner import run_experiment
from src.harness.schemas import EXPERIMENT_KINDS, ConfigError, load_experiment

logger = logging.getLogger(__name__)

CONFIG_DIR = PROJECT_ROOT / "configs"


def setup_logging(level: Optional[str] = None):
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = config.get('logging.file')
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, (level or config.log_level).upper(), logging.INFO),
        format=config.get('logging.format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
        handlers=handlers,
        force=True,
    )


def read_config_file(path: Path) -> Dict[str, Any]:
    try:
        with open(path, 'r') as handle:
            data = yaml.safe_load(handle) or {}
    except FileNotFoundError:
        raise ConfigError(f"Experiment config not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"Experiment config {path} is not valid YAML: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"Experiment config {path} must be a mapping")
    return data


def build_experiment_data(args: argparse.Namespace) -> Dict[str, Any]:
    """Config file (or the kind's default) with command-line overrides applied."""
    if args.command == "run":
        data = read_config_file(Path(args.config_file))
        if "kind" not in data:
            raise ConfigError(f"{args.config_file} does not name an experiment kind")
    else:
        path = Path(args.config) if args.config else CONFIG_DIR / f"{args.command}.yaml"
        data = read_config_file(path) if path.exists() or args.config else {}
        if data.get("kind", args.command) != args.command:
            raise ConfigError(f"{path} describes a '{data['kind']}' experiment, not '{args.command}'")
        foreign = sorted(k for k in EXPERIMENT_KINDS if k != args.command and k in data)
        if foreign:
            raise ConfigError(f"{path} has a '{foreign[0]}' section, which '{args.command}' does not read")
        data["kind"] = args.command

    if args.seed is not None:
        data["seed"] = args.seed
    if args.trials is not None:
        data["n_trials"] = args.trials
    if args.output is not None:
        data["output"] = args.output
    if data["kind"] == "bounds":
        section = dict(data.get("bounds") or {})
        if getattr(args, "delta", None) is not None:
            section["delta"] = args.delta
        if getattr(args, "key_bits", None) is not None:
            section["key_bits"] = args.key_bits
        data["bounds"] = section
    return data


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides the config)")
    parser.add_argument("--trials", type=int, default=None, help="Number of trials (overrides the config)")
    parser.add_argument("--output", default=None, help="Results file path (default: <output_dir>/<kind>.jsonl)")
    parser.add_argument("--log-level", default=None, help="Logging level (default from config.yaml)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellhash",
                                     description="Bell-basis hashing verification and key-security experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        cmd = sub.add_parser(kind, help=f"Run a {kind} experiment")
        cmd.add_argument("--config", default=None,
                         help=f"Experiment YAML (default: configs/{kind}.yaml)")
        _add_common(cmd)
        if kind == "bounds":
            cmd.add_argument("--delta", type=float, default=None, help="Fidelity deficit 1 - F")
            cmd.add_argument("--key-bits", type=int, default=None, help="Key length R")
    run = sub.add_parser("run", help="Run the experiment described by a YAML file")
    run.add_argument("config_file")
    _add_common(run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    setup_logging(args.log_level)

    try:
        experiment = load_experiment(build_experiment_data(args))
    except ConfigError as exc:
        logger.error(str(exc))
        print(f"[error] {exc}", file=sys.stderr)
        return 1

    try:
        record = run_experiment(experiment)
    except Exception as exc:
        logger.exception(f"{experiment.kind} failed: {exc}")
        print(f"[error] {experiment.kind} failed: {exc}", file=sys.stderr)
        return 2

    for line in record.summary:
        print(line)
    if experiment.kind == "oracle-check" and not all(row["passed"] for row in record.rows):
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
