# tests/test_evaluation.py - tracking metrics, evaluation harness and report output
import numpy as np
import pytest

from toimit.env import EVAL_CURRICULUM, ImitationEnv, TrackedQuantities
from toimit.errors import CheckpointError, DimensionError
from toimit.evaluation import (
    EpisodeTrace,
    ablation_ordering,
    emit_plots,
    evaluate_policy,
    load_variant_policies,
    plot_learning_curve,
    read_csv,
    run_episode,
    summarize,
    terrain_sweep,
    trajectory_metrics,
)
from toimit.evaluation.harness import check_dimensions, sweep_terrain
from toimit.evaluation.metrics import METRIC_NAMES
from toimit.rl import PolicyBundle
from toimit.schemas import (
    AblationCell,
    AblationReport,
    MetricSummary,
    PPOHyper,
    SuccessRateRow,
    SuccessRateTable,
)

HYPER = PPOHyper(actor_hidden=[8], critic_hidden=[8])


def _frame(x=0.0, z=0.7, pitch=0.0, joints=(0.0, 0.0), forces=(0.0, 0.0, 0.0, 0.0)) -> TrackedQuantities:
    return TrackedQuantities(
        joint_pos=np.array(joints, dtype=float),
        base_pos=np.array([x, z]),
        base_pitch=pitch,
        base_lin_vel=np.zeros(2),
        base_ang_vel=0.0,
        ee_pos=np.array([[x + 0.1, 0.0], [x - 0.1, 0.0]]),
        torque=np.zeros(2),
        contact_force=np.array(forces, dtype=float),
    )


def _trace(pairs, active=None) -> EpisodeTrace:
    trace = EpisodeTrace(ee_names=["left_foot", "right_foot"])
    for k, (measured, reference) in enumerate(pairs):
        trace.append(measured, reference, active[k] if active is not None else [False, False])
    return trace


def _policy_for(env: ImitationEnv, seed: int = 0) -> PolicyBundle:
    return PolicyBundle.create(env.actor_layout.size, env.critic_layout.size, env.action_dim, HYPER, seed)


def _summary(mean: float) -> MetricSummary:
    return MetricSummary(mean=mean, se=0.0, sd=0.0)


# ============================================
# METRICS
# ============================================


def test_tracking_the_reference_exactly_scores_zero():
    frames = [_frame(x=0.01 * k) for k in range(50)]
    metrics = trajectory_metrics(_trace(zip(frames, frames)))
    assert all(getattr(metrics, name) == 0.0 for name in METRIC_NAMES)
    assert metrics.steps == 50 and not metrics.terminated


def test_drift_metrics_are_normalized():
    reference = [_frame(x=0.01 * (k + 1)) for k in range(100)]
    measured = list(reference)
    measured[-1] = _frame(x=0.95, z=0.71, pitch=0.05)
    metrics = trajectory_metrics(_trace(zip(measured, reference)))

    assert metrics.e_pos_z == pytest.approx(0.1)
    assert metrics.e_pitch == pytest.approx(0.5)
    # 5 cm short after 0.99 m of reference path
    assert metrics.e_pos_x == pytest.approx(100.0 * 0.05 / 0.99)


def test_standing_reference_reports_no_forward_drift():
    reference = [_frame() for _ in range(10)]
    measured = [_frame(x=0.2) for _ in range(10)]
    metrics = trajectory_metrics(_trace(zip(measured, reference)))
    assert metrics.e_pos_x == 0.0
    assert metrics.e_ee_foot == pytest.approx(20.0)


def test_force_error_averages_active_contacts_only():
    reference = [_frame(forces=(0.0, 100.0, 0.0, 100.0)) for _ in range(4)]
    measured = [_frame(forces=(3.0, 104.0, 0.0, 0.0)) for _ in range(4)]
    active = [[True, False]] * 4
    metrics = trajectory_metrics(_trace(zip(measured, reference), active))
    assert metrics.force_error == pytest.approx(5.0)


def test_joint_error_is_mean_absolute():
    reference = [_frame(joints=(0.0, 0.0))] * 3
    measured = [_frame(joints=(0.1, -0.3))] * 3
    assert trajectory_metrics(_trace(zip(measured, reference))).e_joint == pytest.approx(0.2)


def test_empty_trace_is_rejected():
    with pytest.raises(ValueError):
        trajectory_metrics(EpisodeTrace())


def test_summarize_reports_spread():
    summary = summarize([1.0, 2.0, 3.0])
    assert summary.mean == pytest.approx(2.0)
    assert summary.sd == pytest.approx(1.0)
    assert summary.se == pytest.approx(1.0 / np.sqrt(3.0))
    assert summarize([4.0]).sd == 0.0
    with pytest.raises(ValueError):
        summarize([])


# ============================================
# HARNESS
# ============================================


def test_evaluation_needs_trials(pendulum_record):
    env = ImitationEnv([pendulum_record])
    with pytest.raises(ValueError):
        evaluate_policy(_policy_for(env), [pendulum_record], trials=0)


def test_mismatched_policy_is_rejected(pendulum_record):
    env = ImitationEnv([pendulum_record])
    wrong = PolicyBundle.create(env.actor_layout.size + 1, env.critic_layout.size, env.action_dim, HYPER, 0)
    with pytest.raises(DimensionError):
        check_dimensions(wrong, env)


def test_episode_trace_covers_the_reference(pendulum_record):
    env = ImitationEnv([pendulum_record], seed=3)
    trace = run_episode(env, _policy_for(env), seed=3, record_index=0)
    assert trace.steps == env.max_steps
    assert not trace.terminated
    assert trace.ee_names == ["tip"]
    assert env.curriculum == EVAL_CURRICULUM


def test_evaluation_is_reproducible_across_workers(pendulum_record):
    env = ImitationEnv([pendulum_record])
    policy = _policy_for(env)
    serial = evaluate_policy(policy, [pendulum_record], trials=3, seed=5, jobs=1)
    threaded = evaluate_policy(policy, [pendulum_record], trials=3, seed=5, jobs=3)
    assert serial.per_trajectory == threaded.per_trajectory
    assert set(serial.summary) == set(METRIC_NAMES)
    assert serial.summary["e_pos_x"].mean == 0.0


def test_fixed_base_terrain_sweep_always_succeeds(pendulum_record):
    env = ImitationEnv([pendulum_record])
    table = terrain_sweep(_policy_for(env), [pendulum_record], "slope", trials=2, settings=[0.0, 10.0])
    assert [row.setting for row in table.rows] == [0.0, 10.0]
    assert all(row.rate == 1.0 and row.unit == "deg" for row in table.rows)


def test_terrain_sweep_rejects_bad_arguments(pendulum_record):
    env = ImitationEnv([pendulum_record])
    policy = _policy_for(env)
    with pytest.raises(ValueError):
        terrain_sweep(policy, [pendulum_record], "ice")
    with pytest.raises(ValueError):
        terrain_sweep(policy, [pendulum_record], "slope", trials=0)


def test_sweep_terrain_places_the_obstacle_ahead():
    stairs = sweep_terrain("step-height", 4.0, start_x=1.0)
    assert stairs.height(1.25) == 0.0
    assert stairs.height(1.35) == pytest.approx(0.04)
    slope = sweep_terrain("slope", 0.0, start_x=0.0)
    assert slope.height(5.0) == pytest.approx(0.0)


def test_missing_variant_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_variant_policies(["Pos", "Pos+T"], {"Pos": tmp_path / "pos.ckpt"})


def _ablation_report(pos_errors=(1.0, 2.0), torque_errors=(0.5, 0.6)) -> AblationReport:
    levels = [0.0, 10.0]
    cells = []
    for variant, errors in (("Pos", pos_errors), ("Pos+T", torque_errors)):
        for level, error in zip(levels, errors):
            cells.append(
                AblationCell(
                    variant=variant,
                    force_level=level,
                    force_error=_summary(error),
                    hand_error=_summary(0.1),
                    force_profiles=[[level, level + 1.0, level]],
                    reference_profile=[level] * 3,
                )
            )
    return AblationReport(variants=["Pos", "Pos+T"], force_levels=levels, cells=cells, eval_seed=0)


def test_ablation_ordering():
    ordering = ablation_ordering(_ablation_report())
    assert ordering["average_force_error"] == pytest.approx({"Pos": 1.5, "Pos+T": 0.55})
    assert ordering["pos_monotone"] is True
    assert ablation_ordering(_ablation_report(pos_errors=(2.0, 1.0)))["pos_monotone"] is False


# ============================================
# REPORT OUTPUT
# ============================================


def test_tracking_report_output_reads_back(tmp_path, pendulum_record):
    env = ImitationEnv([pendulum_record])
    report = evaluate_policy(_policy_for(env), [pendulum_record], trials=2)
    paths = emit_plots(report, tmp_path)
    assert sorted(p.name for p in paths) == ["tracking.csv", "tracking.svg", "tracking_summary.csv"]

    rows = read_csv(tmp_path / "tracking.csv")
    assert len(rows) == 2
    assert rows[0]["e_joint"] == pytest.approx(report.per_trajectory[0].e_joint)
    summary = {row["metric"]: row for row in read_csv(tmp_path / "tracking_summary.csv")}
    assert summary["e_pos_z"]["unit"] == "mm/step"


def test_ablation_output_has_one_figure_per_level(tmp_path):
    paths = emit_plots(_ablation_report(), tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["ablation.csv", "force_profile_0N.svg", "force_profile_10N.svg"]
    rows = read_csv(tmp_path / "ablation.csv")
    assert [(r["variant"], r["force_level"]) for r in rows] == [("Pos", 0.0), ("Pos", 10.0), ("Pos+T", 0.0), ("Pos+T", 10.0)]


def test_success_table_output(tmp_path):
    table = SuccessRateTable(
        scenario="step-height",
        rows=[SuccessRateRow(setting=0.0, unit="cm", trials=4, successes=4), SuccessRateRow(setting=4.0, unit="cm", trials=4, successes=1)],
    )
    paths = emit_plots(table, tmp_path)
    assert sorted(p.name for p in paths) == ["success_step_height.csv", "success_step_height.svg"]
    assert [row["rate"] for row in read_csv(paths[0])] == [1.0, 0.25]


def test_svg_output_is_reproducible(tmp_path):
    first = emit_plots(_ablation_report(), tmp_path / "a")
    second = emit_plots(_ablation_report(), tmp_path / "b")
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_empty_reports_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_plots(SuccessRateTable(scenario="slope", rows=[]), tmp_path)
    with pytest.raises(ValueError):
        emit_plots(AblationReport(variants=[], force_levels=[], cells=[], eval_seed=0), tmp_path)
    with pytest.raises(ValueError):
        plot_learning_curve([], tmp_path / "curve.svg")


def test_learning_curve_figure(tmp_path):
    rows = [{"iteration": i, "mean_reward": 0.1 * i, "task_reward": 0.05 * i} for i in range(5)]
    path = plot_learning_curve(rows, tmp_path / "plots" / "curve.svg")
    assert path.read_text(encoding="utf-8").lstrip().startswith("<?xml")
