# tests/test_dataset.py - .trjd format, interpolation, selection and generation
import dataclasses

import numpy as np
import pytest

from conftest import make_pendulum_record
from toimit.dataset import (
    DatasetRecord,
    DatasetSlice,
    generate_dataset,
    read_dataset,
    read_datasets,
    reference_at,
    split_holdout,
    task_seeds,
    write_dataset,
)
from toimit.dynamics import RobotState
from toimit.errors import (
    DatasetFormatError,
    ModelHashMismatchError,
    TruncatedDatasetError,
    VersionMismatchError,
)
from toimit.schemas import FeasibilityReport, TaskParameters, TaskSpec
from toimit.solver import ContactSchedule, CostStack, Feature, check_feasibility, solve


@pytest.fixture
def dataset_file(tmp_path, pendulum_record):
    other = make_pendulum_record(amplitude=1.0 / 3.0, duration=0.6)
    return write_dataset([pendulum_record, other], tmp_path / "refs.trjd"), [pendulum_record, other]


# ============================================
# FORMAT
# ============================================


def test_round_trip_is_bit_exact(dataset_file):
    path, records = dataset_file
    loaded = read_dataset(path)
    assert loaded == records
    for a, b in zip(loaded, records):
        assert a.q.tobytes() == b.q.tobytes()
        assert a.task == b.task


def test_rewrite_is_byte_identical(dataset_file, tmp_path):
    path, _ = dataset_file
    copy = write_dataset(read_dataset(path), tmp_path / "copy.trjd")
    assert copy.read_bytes() == path.read_bytes()


def test_header_names_format_and_model(dataset_file, pendulum):
    path, records = dataset_file
    first = path.read_text(encoding="utf-8").splitlines()[0].split()
    assert first[:3] == ["TRJD", "v1", pendulum.hash]
    assert int(first[4]) == records[0].n_knots


def test_version_mismatch_is_reported(dataset_file):
    path, _ = dataset_file
    path.write_text(path.read_text(encoding="utf-8").replace("TRJD v1", "TRJD v2", 1), encoding="utf-8")
    with pytest.raises(VersionMismatchError):
        read_dataset(path)


def test_truncated_file_is_reported(dataset_file):
    path, _ = dataset_file
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n", encoding="utf-8")
    with pytest.raises(TruncatedDatasetError) as info:
        read_dataset(path)
    assert info.value.record_index == 1


def test_damaged_knot_line_is_reported(dataset_file):
    path, _ = dataset_file
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[5] = lines[5].rsplit(" ", 1)[0]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(TruncatedDatasetError):
        read_dataset(path)


def test_model_hash_is_checked(dataset_file, pendulum):
    path, _ = dataset_file
    assert len(read_dataset(path, expected_model_hash=pendulum.hash)) == 2
    with pytest.raises(ModelHashMismatchError):
        read_dataset(path, expected_model_hash="0" * 16)


def test_infeasible_records_are_refused(tmp_path, pendulum_record):
    bad = dataclasses.replace(pendulum_record, feasibility=FeasibilityReport(passed=False, reasons=["defect"]))
    with pytest.raises(DatasetFormatError):
        write_dataset([bad], tmp_path / "bad.trjd")
    write_dataset([bad], tmp_path / "kept.trjd", require_feasible=False)
    assert not read_dataset(tmp_path / "kept.trjd")[0].feasibility.passed


def test_record_shapes_are_checked(pendulum_record):
    with pytest.raises(DatasetFormatError):
        dataclasses.replace(pendulum_record, q=pendulum_record.q[:-1])


def test_read_datasets_concatenates_in_order(dataset_file, tmp_path):
    path, records = dataset_file
    second = write_dataset(records[:1], tmp_path / "second.trjd")
    assert read_datasets([path, second]) == records + records[:1]


def test_record_from_solved_trajectory(double_integrator):
    dt = 0.02
    task = TaskSpec(
        name="press",
        model_id="double-integrator",
        horizon=0.5,
        dt=dt,
        parameters=TaskParameters(approach_duration=0.2, press_duration=0.3),
    )
    schedule = ContactSchedule.build([(0.5, ())], dt)
    costs = CostStack.empty(double_integrator, schedule.n_knots)
    costs.add_term(Feature("q", index=0), 0.2, [0.0] * schedule.n_intervals + [100.0])
    traj = solve(double_integrator, schedule, costs, RobotState(q=[0.0], v=[0.0]))

    record = DatasetRecord.from_trajectory(task, double_integrator, traj, check_feasibility(traj, double_integrator, costs))
    assert record.n_knots == schedule.n_knots
    np.testing.assert_array_equal(record.u[-1], traj.u[-1])
    assert record.forces.shape == (schedule.n_knots, 2)
    assert record.model_hash == double_integrator.hash
    assert record.duration == pytest.approx(0.5)


# ============================================
# INTERPOLATION
# ============================================


def test_reference_at_knot_returns_knot_values(pendulum_record):
    k = 7
    ref = reference_at(pendulum_record, k * pendulum_record.dt)
    np.testing.assert_array_equal(ref.q, pendulum_record.q[k])
    np.testing.assert_array_equal(ref.u, pendulum_record.u[k])
    assert ref.base_pitch == 0.0 and not ref.base_position.any()


def test_reference_between_knots_interpolates_and_holds(pendulum_record):
    dt = pendulum_record.dt
    ref = reference_at(pendulum_record, 3.25 * dt)
    expected = pendulum_record.q[3] + 0.25 * (pendulum_record.q[4] - pendulum_record.q[3])
    np.testing.assert_allclose(ref.q, expected, atol=1e-12)
    np.testing.assert_array_equal(ref.u, pendulum_record.u[3])


@pytest.mark.parametrize("t", [-0.01, 10.0])
def test_reference_outside_duration_is_rejected(pendulum_record, t):
    with pytest.raises(ValueError):
        reference_at(pendulum_record, t)


# ============================================
# SELECTION
# ============================================


def test_dataset_slice_filters_then_ranges(pendulum_record):
    records = [pendulum_record] * 4
    assert len(DatasetSlice("press", 1, 3).select(records)) == 2
    assert DatasetSlice("walk").select(records) == []
    assert len(DatasetSlice().select(records)) == 4


def test_split_holdout_is_seeded_and_disjoint():
    records = [make_pendulum_record(amplitude=0.1 + 0.05 * i) for i in range(10)]
    train, held = split_holdout(records, 0.2, seed=3)
    again, held_again = split_holdout(records, 0.2, seed=3)
    assert len(held) == 2 and len(train) == 8
    assert [r.q[5, 0] for r in held] == [r.q[5, 0] for r in held_again]
    assert not {r.q[5, 0] for r in held} & {r.q[5, 0] for r in train}


def test_split_holdout_keeps_one_training_record(pendulum_record):
    train, held = split_holdout([pendulum_record], 0.5, seed=0)
    assert len(train) == 1 and held == []


# ============================================
# GENERATION
# ============================================


def test_task_seeds_are_reproducible():
    assert task_seeds(5, 4) == task_seeds(5, 4)
    assert len(set(task_seeds(5, 4))) == 4
    assert task_seeds(5, 2) == task_seeds(5, 4)[:2]


def test_generate_needs_a_positive_count():
    with pytest.raises(ValueError):
        generate_dataset("press", 0, seed=0)


@pytest.mark.slow
def test_generation_is_deterministic(tmp_path):
    first = generate_dataset("press", 2, seed=11)
    second = generate_dataset("press", 2, seed=11, jobs=2)
    assert first.records == second.records
    a = write_dataset(first.records, tmp_path / "a.trjd")
    b = write_dataset(second.records, tmp_path / "b.trjd")
    assert a.read_bytes() == b.read_bytes()
