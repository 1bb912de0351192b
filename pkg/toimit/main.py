# toimit/main.py - bundles the subcommands into one entry point
import argparse
import logging
import sys
from typing import List, Optional

from toimit.cli.commands import DEFAULT_FAILURE_BUDGET, run_command
from toimit.config import settings
from toimit.tasks import MODEL_IDS, TASK_NAMES


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file; flags override its values")
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--out", default=None, help="output directory (default runs/<command>)")
    common.add_argument("--jobs", type=int, default=settings.jobs, help="worker count for generate/eval")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="toimit", description="Trajectory-optimization-guided imitation learning")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="solve one sampled task")
    solve.add_argument("--task", choices=TASK_NAMES, default=None, help="overrides the config's task")
    solve.add_argument("--force", type=float, default=None, help="press normal force override (N)")

    generate = sub.add_parser("generate", parents=[common], help="build a reference dataset")
    generate.add_argument("--task", choices=TASK_NAMES, required=True)
    generate.add_argument("--count", type=int, required=True)
    generate.add_argument("--failure-budget", type=float, default=DEFAULT_FAILURE_BUDGET)

    train = sub.add_parser("train", parents=[common], help="train an imitation policy with PPO")
    train.add_argument("--dataset", default=None)
    train.add_argument("--task", choices=TASK_NAMES, default=None)
    train.add_argument("--iterations", type=int, default=None)
    train.add_argument("--resume", default=None, help="trainer checkpoint to continue from")

    evaluate = sub.add_parser("eval", parents=[common], help="evaluate a policy checkpoint")
    evaluate.add_argument("--policy", required=True)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--task", choices=TASK_NAMES, default=None)
    evaluate.add_argument("--start", type=int, default=0)
    evaluate.add_argument("--stop", type=int, default=None)
    evaluate.add_argument("--holdout", default=None, help="holdout.json written by train")
    evaluate.add_argument("--variant", choices=["Pos", "Pos+F", "Pos+T", "Pos+F+T"], default=None)
    evaluate.add_argument("--trials", type=int, default=20)
    evaluate.add_argument("--terrain", choices=["none", "step-height", "slope", "both"], default="none")
    evaluate.add_argument("--terrain-trials", type=int, default=10)

    sub.add_parser("ablation", parents=[common], help="reference-channel ablation on the press task")

    validate = sub.add_parser("validate", parents=[common], help="dynamics property checks on a model")
    validate.add_argument("--model", choices=MODEL_IDS, required=True)
    validate.add_argument("--inject-fault", choices=["inertia-sign"], default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ablation" and not args.config:
        print("toimit ablation: --config is required", file=sys.stderr)
        return 2

    level = logging.WARNING if args.quiet else getattr(logging, settings.log_level, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
