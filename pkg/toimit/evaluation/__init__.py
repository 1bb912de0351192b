# toimit/evaluation - tracking metrics, ablation and terrain sweeps
from toimit.evaluation.harness import (
    ablation_ordering,
    ablation_references,
    evaluate_policy,
    force_ablation,
    load_variant_policies,
    run_episode,
    terrain_sweep,
)
from toimit.evaluation.metrics import EpisodeTrace, summarize, summarize_metrics, trajectory_metrics
from toimit.evaluation.plots import emit_plots, plot_learning_curve, read_csv

__all__ = [
    "EpisodeTrace",
    "ablation_ordering",
    "ablation_references",
    "emit_plots",
    "evaluate_policy",
    "force_ablation",
    "load_variant_policies",
    "plot_learning_curve",
    "read_csv",
    "run_episode",
    "summarize",
    "summarize_metrics",
    "terrain_sweep",
    "trajectory_metrics",
]
