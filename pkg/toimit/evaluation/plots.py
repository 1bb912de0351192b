# toimit/evaluation/plots.py - CSV tables and SVG figures for evaluation reports
import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from toimit.evaluation.metrics import METRIC_NAMES, METRIC_UNITS  # noqa: E402
from toimit.schemas import AblationReport, SuccessRateTable, TrackingReport  # noqa: E402


logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "toimit"
SVG_METADATA = {"Date": None}

Report = Union[TrackingReport, AblationReport, SuccessRateTable]


def _write_csv(rows: Sequence[Dict[str, object]], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_csv(path: Path) -> List[Dict[str, object]]:
    """Rows of a report CSV with numeric cells converted to float."""
    def convert(value: str):
        try:
            return float(value)
        except ValueError:
            return value

    with open(path, newline="", encoding="utf-8") as handle:
        return [{key: convert(value) for key, value in row.items()} for row in csv.DictReader(handle)]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


# ============================================
# PER-REPORT OUTPUT
# ============================================


def _tracking(report: TrackingReport, out_dir: Path) -> List[Path]:
    if not report.per_trajectory:
        raise ValueError("Tracking report has no trajectories")
    per_trajectory = _write_csv([row.model_dump() for row in report.per_trajectory], out_dir / "tracking.csv")
    summary_rows = [
        {
            "metric": name,
            "unit": METRIC_UNITS[name],
            "mean": report.summary[name].mean,
            "se": report.summary[name].se,
            "sd": report.summary[name].sd,
        }
        for name in METRIC_NAMES
    ]
    summary = _write_csv(summary_rows, out_dir / "tracking_summary.csv")

    fig, ax = plt.subplots(figsize=(8, 3.5))
    x = np.arange(len(METRIC_NAMES))
    ax.bar(x, [r["mean"] for r in summary_rows], yerr=[r["se"] for r in summary_rows], capsize=3)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{n}\n({METRIC_UNITS[n]})" for n in METRIC_NAMES], fontsize=7)
    ax.set_title(f"Tracking errors: {report.policy} ({report.trials} trials)")
    fig.tight_layout()
    return [per_trajectory, summary, _save(fig, out_dir / "tracking.svg")]


def _ablation(report: AblationReport, out_dir: Path) -> List[Path]:
    if not report.cells:
        raise ValueError("Ablation report has no cells")
    rows = [
        {
            "variant": cell.variant,
            "force_level": cell.force_level,
            "force_error_mean": cell.force_error.mean,
            "force_error_sd": cell.force_error.sd,
            "hand_error_mean": cell.hand_error.mean,
            "hand_error_sd": cell.hand_error.sd,
        }
        for cell in report.cells
    ]
    paths = [_write_csv(rows, out_dir / "ablation.csv")]

    for level in report.force_levels:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for variant in report.variants:
            cell = report.cell(variant, level)
            profiles = [p for p in cell.force_profiles if p]
            if not profiles:
                continue
            length = min(len(p) for p in profiles)
            mean = np.mean([p[:length] for p in profiles], axis=0)
            ax.plot(np.arange(length), mean, label=variant)
        reference = report.cell(report.variants[0], level).reference_profile
        if reference:
            ax.plot(np.arange(len(reference)), reference, "k--", linewidth=1, label="reference")
        ax.set_xlabel("policy step")
        ax.set_ylabel("normal force (N)")
        ax.set_title(f"Commanded {level:g} N")
        ax.legend(fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, out_dir / f"force_profile_{level:g}N.svg"))
    return paths


def _success(table: SuccessRateTable, out_dir: Path) -> List[Path]:
    if not table.rows:
        raise ValueError("Success-rate table has no rows")
    name = table.scenario.replace("-", "_")
    rows = [
        {"setting": r.setting, "unit": r.unit, "trials": r.trials, "successes": r.successes, "rate": r.rate}
        for r in table.rows
    ]
    csv_path = _write_csv(rows, out_dir / f"success_{name}.csv")

    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r.setting:g}" for r in table.rows]
    ax.bar(labels, [100.0 * r.rate for r in table.rows])
    ax.set_xlabel(f"{table.scenario} ({table.rows[0].unit})")
    ax.set_ylabel("success rate (%)")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    return [csv_path, _save(fig, out_dir / f"success_{name}.svg")]


def emit_plots(report: Report, out_dir: Path) -> List[Path]:
    """
    Write a report's CSV tables and SVG figures into out_dir.

    Raises:
        ValueError: If the report is empty
        OSError: If out_dir cannot be written
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(report, TrackingReport):
        paths = _tracking(report, out_dir)
    elif isinstance(report, AblationReport):
        paths = _ablation(report, out_dir)
    elif isinstance(report, SuccessRateTable):
        paths = _success(report, out_dir)
    else:
        raise TypeError(f"Cannot plot a {type(report).__name__}")
    logger.info(f"Wrote {len(paths)} file(s) to {out_dir}")
    return paths


def plot_learning_curve(rows: Sequence[Dict[str, object]], path: Path) -> Path:
    """Mean reward and task reward against iteration."""
    if not rows:
        raise ValueError("Learning curve is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    iterations = [float(r["iteration"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(iterations, [float(r["mean_reward"]) for r in rows], label="mean reward")
    ax.plot(iterations, [float(r["task_reward"]) for r in rows], label="task reward")
    ax.set_xlabel("iteration")
    ax.set_ylabel("reward per step")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
