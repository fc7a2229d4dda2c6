import argparse
import sys
from pathlib import Path
from typing import List, Optional

import structlog

from augsched.config.experiment import parse_config
from augsched.config.settings import settings
from augsched.envs.frames import dump_frames
from augsched.envs.gridworld import EnvConfig, EnvMode
from augsched.harness.evaluate import evaluate
from augsched.harness.report import emit_report, read_manifest
from augsched.harness.suite import run_suite
from augsched.nn.checkpoint import load_checkpoint
from augsched.utils.errors import AugschedError, ConfigError
from augsched.utils.logger import setup_logging

logger = structlog.get_logger("augsched")

EXIT_OK, EXIT_ERROR, EXIT_UNEXPECTED = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augsched", description="Scheduling data augmentation for pixel-based reinforcement learning"
    )
    parser.add_argument("--log-level", default=None, help=f"override LOG_LEVEL (default {settings.LOG_LEVEL})")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train every (method, seed) of a config and write the report")
    run.add_argument("config", type=Path)
    run.add_argument("--seed", type=int, action="append", help="run only this seed (repeatable)")
    run.add_argument("--method", help="run only this method")
    run.add_argument("--augment", "--augmentation", dest="augmentation", help="override schedule.augmentation kind")
    run.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    run.add_argument("--threads", type=int, help="parallel runs (default: AUGSCHED_THREADS)")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on one environment mode")
    ev.add_argument("checkpoint", type=Path)
    ev.add_argument("--mode", required=True, choices=["easybg", "test-bg", "test-lv"])
    ev.add_argument("--config", type=Path, help="config whose env block to use (default: env defaults)")
    ev.add_argument("--episodes", type=int, default=50)
    ev.add_argument("--seed", type=int, default=0)

    report = sub.add_parser("report", help="re-aggregate a runs directory")
    report.add_argument("runs_dir", type=Path)

    frames = sub.add_parser("dump-frames", help="write sample observations of every mode as PPM")
    frames.add_argument("config", type=Path)
    frames.add_argument("--out", type=Path, default=Path("frames"))
    frames.add_argument("--count", type=int, default=4)
    frames.add_argument("--seed", type=int, default=0)
    frames.add_argument("--augmentations", action="store_true", help="also write one view per configured augmentation")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config).with_overrides(
        method=args.method,
        seeds=args.seed,
        output_dir=str(args.out) if args.out else None,
        augmentation=args.augmentation,
    )
    result = run_suite(config, threads=args.threads)
    for run in result.failed:
        print(f"run {run.method}/seed{run.seed} failed: {run.error}", file=sys.stderr)
    if result.report is not None:
        print(result.report.markdown_path.read_text(), end="")
    return EXIT_ERROR if result.failed else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    env_config = parse_config(args.config).env if args.config else EnvConfig()
    params, _ = load_checkpoint(args.checkpoint)
    if tuple(params.spec.input_shape) != env_config.observation_shape:
        raise ConfigError(
            f"checkpoint expects observations {tuple(params.spec.input_shape)}, "
            f"env renders {env_config.observation_shape}"
        )
    result = evaluate(params, env_config, EnvMode.parse(args.mode), args.episodes, args.seed)
    print(f"{result.mode}\tmean_return={result.mean_return:.6f}\tsuccess_rate={result.success_rate:.4f}\tepisodes={args.episodes}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    runs, seeds = read_manifest(args.runs_dir)
    report = emit_report(runs, args.runs_dir, expected_seeds=seeds)
    print(report.markdown_path.read_text(), end="")
    return EXIT_OK


def cmd_dump_frames(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    augmentations = [a for a in config.augmentations if not a.is_identity] if args.augmentations else None
    written = dump_frames(config.env, args.out, count=args.count, seed=args.seed, augmentations=augmentations)
    print(f"wrote {len(written)} frames to {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "eval": cmd_eval,
    "report": cmd_report,
    "dump-frames": cmd_dump_frames,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except AugschedError as e:
        print(f"error [{e.error_code}]: {e.detail}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception("Unexpected failure", command=args.command)
        print(f"unexpected error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
