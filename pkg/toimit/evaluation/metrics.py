# toimit/evaluation/metrics.py - tracking, drift and force metrics over one evaluated episode
"""
Units follow the reported tables:

    e_joint       rad     mean per-frame absolute joint error
    e_vel_x       cm/s    mean |forward base velocity error|
    e_vel_pitch   rad/s   mean |pitch rate error|
    e_ee_hand     cm      mean hand position error
    e_ee_foot     cm      mean foot position error
    e_pos_x       %       final forward drift / reference path length
    e_pos_z       mm/step final vertical drift / steps
    e_pitch       mrad/step final pitch drift / steps
    force_error   N       mean |F - F_ref| over reference contact phases
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from toimit.env.rewards import TrackedQuantities
from toimit.schemas import MetricSummary, TrajectoryMetrics


logger = logging.getLogger(__name__)

METRIC_NAMES = (
    "e_joint",
    "e_vel_x",
    "e_vel_pitch",
    "e_ee_hand",
    "e_ee_foot",
    "e_pos_x",
    "e_pos_z",
    "e_pitch",
    "force_error",
)

METRIC_UNITS = {
    "e_joint": "rad",
    "e_vel_x": "cm/s",
    "e_vel_pitch": "rad/s",
    "e_ee_hand": "cm",
    "e_ee_foot": "cm",
    "e_pos_x": "%",
    "e_pos_z": "mm/step",
    "e_pitch": "mrad/step",
    "force_error": "N",
}

MIN_PATH_LENGTH = 1e-6  # m; below this the forward drift is reported as 0


@dataclass
class EpisodeTrace:
    """Measured and reference quantities after every policy step of one episode."""
    measured: List[TrackedQuantities] = field(default_factory=list)
    reference: List[TrackedQuantities] = field(default_factory=list)
    contact_active: List[np.ndarray] = field(default_factory=list)  # per step, one flag per contact site
    ee_names: List[str] = field(default_factory=list)
    terminated: bool = False

    @property
    def steps(self) -> int:
        return len(self.measured)

    def append(self, measured: TrackedQuantities, reference: TrackedQuantities, active: np.ndarray) -> None:
        self.measured.append(measured)
        self.reference.append(reference)
        self.contact_active.append(np.asarray(active, dtype=bool))

    def stack(self, name: str, which: str = "measured") -> np.ndarray:
        rows = self.measured if which == "measured" else self.reference
        return np.array([np.asarray(getattr(row, name), dtype=float) for row in rows])

    def normal_force_profile(self, contact_index: int = 0, which: str = "measured") -> List[float]:
        forces = self.stack("contact_force", which)
        if forces.ndim < 2 or forces.shape[1] < 2 * (contact_index + 1):
            return [0.0] * self.steps
        return forces[:, 2 * contact_index + 1].tolist()


def _site_error(trace: EpisodeTrace, keyword: str) -> float:
    columns = [i for i, name in enumerate(trace.ee_names) if keyword in name]
    if not columns:
        return 0.0
    measured = trace.stack("ee_pos")[:, columns]
    reference = trace.stack("ee_pos", "reference")[:, columns]
    return float(np.mean(np.linalg.norm(measured - reference, axis=-1))) * 100.0


def _force_error(trace: EpisodeTrace) -> float:
    measured = trace.stack("contact_force")
    reference = trace.stack("contact_force", "reference")
    active = np.array(trace.contact_active, dtype=bool)
    if measured.size == 0 or not active.any():
        return 0.0
    steps, n_sites = active.shape
    per_site = np.linalg.norm((measured - reference).reshape(steps, n_sites, 2), axis=-1)
    return float(np.mean(per_site[active]))


def trajectory_metrics(trace: EpisodeTrace, record_index: int = 0) -> TrajectoryMetrics:
    """
    Raises:
        ValueError: If the trace has no steps
    """
    steps = trace.steps
    if steps == 0:
        raise ValueError("Cannot compute metrics of an empty episode")

    joint_err = np.abs(trace.stack("joint_pos") - trace.stack("joint_pos", "reference"))
    vel = trace.stack("base_lin_vel") - trace.stack("base_lin_vel", "reference")
    pitch_rate = trace.stack("base_ang_vel") - trace.stack("base_ang_vel", "reference")
    base = trace.stack("base_pos")
    base_ref = trace.stack("base_pos", "reference")
    pitch = trace.stack("base_pitch")
    pitch_ref = trace.stack("base_pitch", "reference")

    path_length = float(np.sum(np.linalg.norm(np.diff(base_ref, axis=0), axis=1))) if steps > 1 else 0.0
    final_x = abs(base[-1, 0] - base_ref[-1, 0])
    drift_x = 100.0 * final_x / path_length if path_length > MIN_PATH_LENGTH else 0.0

    return TrajectoryMetrics(
        record_index=record_index,
        e_joint=float(np.mean(np.mean(joint_err, axis=1))) if joint_err.size else 0.0,
        e_vel_x=float(np.mean(np.abs(vel[:, 0]))) * 100.0,
        e_vel_pitch=float(np.mean(np.abs(pitch_rate))),
        e_ee_hand=_site_error(trace, "hand"),
        e_ee_foot=_site_error(trace, "foot"),
        e_pos_x=drift_x,
        e_pos_z=1000.0 * abs(base[-1, 1] - base_ref[-1, 1]) / steps,
        e_pitch=1000.0 * abs(pitch[-1] - pitch_ref[-1]) / steps,
        force_error=_force_error(trace),
        steps=steps,
        terminated=trace.terminated,
    )


def summarize(values: Sequence[float]) -> MetricSummary:
    """Mean with standard deviation and standard error over the sample count."""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    sd = float(np.std(data, ddof=1)) if data.size > 1 else 0.0
    return MetricSummary(mean=float(np.mean(data)), se=sd / np.sqrt(data.size), sd=sd)


def summarize_metrics(rows: Sequence[TrajectoryMetrics]) -> Dict[str, MetricSummary]:
    return {name: summarize([getattr(row, name) for row in rows]) for name in METRIC_NAMES}
