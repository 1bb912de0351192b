# toimit/cli/commands.py - subcommand handlers, run manifests and exit codes
import argparse
import csv
import datetime
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from toimit.dataset import DatasetSlice, DroppedTask, generate_dataset, read_dataset, write_dataset
from toimit.dataset.trjd import DatasetRecord
from toimit.dynamics.validation import validate_model
from toimit.errors import EnvFailure, NumericError, ToimitError
from toimit.evaluation import (
    ablation_ordering,
    ablation_references,
    emit_plots,
    evaluate_policy,
    force_ablation,
    load_variant_policies,
    plot_learning_curve,
    terrain_sweep,
)
from toimit.evaluation.harness import variant_env_config
from toimit.loaders import save_run
from toimit.parsers import load_config
from toimit.rl import load_checkpoint, train
from toimit.schemas import (
    AblationConfig,
    EnvConfig,
    ReferenceChannels,
    RunManifest,
    SolveConfig,
    SolverOptions,
    TrainConfig,
)
from toimit.tasks import build_model, solve_task, task_from_config


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NUMERIC = 4

DEFAULT_FAILURE_BUDGET = 0.05


@dataclass
class CommandResult:
    exit_code: int = EXIT_OK
    failures: List[DroppedTask] = field(default_factory=list)


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else 0


def _solver_options(args: argparse.Namespace) -> Optional[SolverOptions]:
    return load_config(Path(args.config), SolverOptions) if args.config else None


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


# ============================================
# SOLVE / GENERATE
# ============================================


def _solve_config(args: argparse.Namespace) -> SolveConfig:
    overrides = {"task": args.task, "seed": args.seed}
    if args.config:
        config = load_config(Path(args.config), SolveConfig, overrides)
    else:
        config = SolveConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.force is not None:
        config = config.model_copy(update={"parameters": {**config.parameters, "normal_force": args.force}})
    return config


def cmd_solve(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    """One task solve: a one-record .trjd plus its feasibility report."""
    config = _solve_config(args)
    task = task_from_config(config)
    problem, traj, report = solve_task(task, config.solver, config.weights)

    record = DatasetRecord.from_trajectory(task, problem.model, traj, report)
    write_dataset([record], out_dir / f"{task.name}.trjd", require_feasible=False)
    _write_json(
        out_dir / "feasibility.json",
        {"converged": traj.converged, "iterations": traj.iterations, "cost": traj.cost, **report.model_dump()},
    )
    if not traj.converged:
        return CommandResult(EXIT_SOLVER, [DroppedTask(0, task, f"not converged after {traj.iterations} iterations")])
    return CommandResult()


def cmd_generate(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    """
    Solve `count` sampled tasks; keep the feasible ones.

    Exits with EXIT_SOLVER when the dropped fraction exceeds the failure budget.
    """
    result = generate_dataset(args.task, args.count, _seed(args), args.jobs, _solver_options(args))
    if result.records:
        write_dataset(result.records, out_dir / "dataset.trjd")

    with open(out_dir / "failures.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=["index", "task", "seed", "reason"])
        writer.writeheader()
        for f in result.failures:
            writer.writerow({"index": f.index, "task": f.task.name, "seed": f.task.seed, "reason": f.reason})

    if result.failure_rate > args.failure_budget:
        logger.error(
            f"{len(result.failures)}/{result.attempted} trajectories dropped, "
            f"above the failure budget of {args.failure_budget:.0%}"
        )
        return CommandResult(EXIT_SOLVER, result.failures)
    return CommandResult(EXIT_OK, result.failures)


# ============================================
# TRAIN / EVAL / ABLATION
# ============================================


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {"dataset": args.dataset, "seed": args.seed, "iterations": args.iterations, "task": args.task}
    if args.config:
        return load_config(Path(args.config), TrainConfig, overrides)
    if not args.dataset:
        raise FileNotFoundError("train needs --dataset or a --config naming one")
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    config = _train_config(args)
    result = train(config, out_dir, resume=Path(args.resume) if args.resume else None)
    plot_learning_curve(result.curve, out_dir / "learning_curve.svg")
    return CommandResult()


def _eval_env_config(args: argparse.Namespace) -> EnvConfig:
    env = EnvConfig()
    if args.config:
        env = load_config(Path(args.config), TrainConfig, {"dataset": args.dataset}).env
    if args.variant:
        env = env.model_copy(update={"reference_channels": ReferenceChannels.from_variant(args.variant)})
    return env


def _eval_records(args: argparse.Namespace) -> List[DatasetRecord]:
    records = read_dataset(Path(args.dataset))
    if args.holdout:
        indices = json.loads(Path(args.holdout).read_text(encoding="utf-8"))["indices"]
        records = [records[i] for i in indices]
    records = DatasetSlice(args.task, args.start, args.stop).select(records)
    if not records:
        raise ValueError(f"No records in {args.dataset} match the requested slice")
    return records


def cmd_eval(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    policy = load_checkpoint(Path(args.policy))
    records = _eval_records(args)
    env_config = _eval_env_config(args)
    report = evaluate_policy(
        policy, records, env_config, trials=args.trials, seed=_seed(args), jobs=args.jobs, label=Path(args.policy).stem
    )
    emit_plots(report, out_dir)
    _write_json(out_dir / "tracking_report.json", report.model_dump())

    scenarios = {"none": [], "step-height": ["step-height"], "slope": ["slope"], "both": ["step-height", "slope"]}
    for scenario in scenarios[args.terrain]:
        table = terrain_sweep(
            policy, records, scenario, env_config, trials=args.terrain_trials, seed=_seed(args), jobs=args.jobs
        )
        emit_plots(table, out_dir)
    return CommandResult()


def cmd_ablation(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    """Train (or load) the four reference-channel variants and compare their force tracking."""
    config = load_config(Path(args.config), AblationConfig)

    if config.checkpoints:
        runs = {"given": load_variant_policies(config.variants, {k: Path(v) for k, v in config.checkpoints.items()})}
    else:
        runs = {}
        for seed in config.seeds:
            paths: Dict[str, Path] = {}
            for variant in config.variants:
                train_config = config.train.model_copy(
                    update={"seed": seed, "env": variant_env_config(config.train.env, variant)}
                )
                result = train(train_config, out_dir / variant.replace("+", "_") / f"seed_{seed}")
                paths[variant] = result.checkpoints[-1]
            runs[f"seed_{seed}"] = load_variant_policies(config.variants, paths)

    references = ablation_references(config, args.jobs)
    summary = {}
    for name, policies in runs.items():
        report = force_ablation(config, references, policies, args.jobs)
        emit_plots(report, out_dir / name)
        _write_json(out_dir / name / "ablation_report.json", report.model_dump())
        summary[name] = ablation_ordering(report)
    _write_json(out_dir / "ablation_summary.json", summary)
    return CommandResult()


# ============================================
# VALIDATE
# ============================================


def cmd_validate(args: argparse.Namespace, out_dir: Path) -> CommandResult:
    model = build_model(args.model)
    if args.inject_fault == "inertia-sign":
        model = model.with_flipped_inertia()
    report = validate_model(model, seed=_seed(args))

    with open(out_dir / "validation.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=["check", "passed", "value", "tolerance", "detail"])
        writer.writeheader()
        for c in report.checks:
            writer.writerow(
                {"check": c.name, "passed": c.passed, "value": c.value, "tolerance": c.tolerance, "detail": c.detail}
            )
    return CommandResult(EXIT_OK if report.passed else EXIT_NUMERIC)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Path], CommandResult]] = {
    "solve": cmd_solve,
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
    "validate": cmd_validate,
}


# ============================================
# RUNNER
# ============================================


def config_hash(paths: List[str]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()[:16] if paths else ""


def _arguments(args: argparse.Namespace) -> Dict[str, str]:
    return {k: str(v) for k, v in sorted(vars(args).items()) if k not in ("handler",) and v is not None}


def run_command(args: argparse.Namespace) -> int:
    """
    Run one subcommand, then write its manifest and register the run.

    Config problems exit 2, numeric failures exit 4; anything else is logged
    and re-raised.
    """
    out_dir = Path(args.out or f"runs/{args.command}")
    out_dir.mkdir(parents=True, exist_ok=True)
    config_paths = [args.config] if args.config else []
    started = datetime.datetime.now()
    result = CommandResult(exit_code=1)

    try:
        result = COMMANDS[args.command](args, out_dir)
    except (NumericError, EnvFailure) as e:
        logger.error(f"{args.command} failed numerically: {e}")
        result = CommandResult(EXIT_NUMERIC)
    except (ToimitError, ValueError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        result = CommandResult(EXIT_CONFIG)
    except Exception:
        logger.exception(f"{args.command} failed unexpectedly")
        raise
    finally:
        manifest = RunManifest(
            command=args.command,
            config_paths=[str(Path(p)) for p in config_paths],
            seed=_seed(args),
            config_hash=config_hash([p for p in config_paths if Path(p).is_file()]),
            output_dir=str(out_dir),
            arguments=_arguments(args),
            started_at=started,
            finished_at=datetime.datetime.now(),
            exit_code=result.exit_code,
        )
        (out_dir / "manifest.json").write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        try:
            save_run(manifest, result.failures)
        except Exception as e:
            logger.warning(f"Could not register run in {args.command}: {e}")

    return result.exit_code
