# toimit/dataset/trjd.py - .trjd reference datasets: records, text format, interpolation
"""
A .trjd file is a sequence of records. Each record is

    TRJD v1 <model-hash> <dt> <n-knots>
    <one-line JSON header: task, feasibility report, schedule, dimensions>
    <n-knots knot lines>

Knot lines hold whitespace-separated decimal numbers with 17 significant
digits, in this column order:

    t | q[n_q] | v[n_v] | u[n_u] | F[2 * n_sites] | p[2 * n_sites] | mask[n_sites]

F and p are (x, z) pairs per site in model site order. Torques and forces
belong to the interval that starts at the knot; the final knot repeats the
last interval's values.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from toimit.dynamics import CONTACT_DIM, RobotModel
from toimit.errors import (
    DatasetFormatError,
    ModelHashMismatchError,
    TruncatedDatasetError,
    VersionMismatchError,
)
from toimit.schemas import FeasibilityReport, TaskSpec
from toimit.solver import OptimalTrajectory


logger = logging.getLogger(__name__)

MAGIC = "TRJD"
FORMAT_VERSION = 1
NUMBER_FORMAT = ".17g"


# ============================================
# RECORD
# ============================================


@dataclass(frozen=True)
class ReferenceTuple:
    """Reference quantities at one instant of a record."""
    t: float
    q: np.ndarray
    v: np.ndarray
    u: np.ndarray
    forces: np.ndarray  # (2 * n_sites,)
    sites: np.ndarray  # (n_sites, 2)
    contact_mask: np.ndarray  # (n_sites,) bool
    base_position: np.ndarray  # (x, z); zeros for a fixed base
    base_pitch: float
    base_velocity: np.ndarray
    base_pitch_rate: float


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    """One reference trajectory with its header."""
    task: TaskSpec
    model_hash: str
    dt: float
    schedule_digest: str
    schedule: dict
    feasibility: FeasibilityReport
    site_names: Tuple[str, ...]
    floating: bool
    converged: bool
    cost: float
    t: np.ndarray  # (n_knots,)
    q: np.ndarray  # (n_knots, n_q)
    v: np.ndarray  # (n_knots, n_v)
    u: np.ndarray  # (n_knots, n_u)
    forces: np.ndarray  # (n_knots, 2 * n_sites)
    sites: np.ndarray  # (n_knots, n_sites, 2)
    contact_mask: np.ndarray  # (n_knots, n_sites) bool

    def __post_init__(self):
        if not self.dt > 0:
            raise DatasetFormatError(f"Record dt must be > 0, got {self.dt}")
        n = self.t.shape[0]
        for name in ("q", "v", "u", "forces", "sites", "contact_mask"):
            if getattr(self, name).shape[0] != n:
                raise DatasetFormatError(
                    f"Record array '{name}' has {getattr(self, name).shape[0]} knots, expected {n}"
                )
        if n < 2:
            raise DatasetFormatError("A record needs at least two knots")

    @property
    def n_knots(self) -> int:
        return self.t.shape[0]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def n_q(self) -> int:
        return self.q.shape[1]

    @property
    def n_v(self) -> int:
        return self.v.shape[1]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    def site_index(self, name: str) -> int:
        return self.site_names.index(name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return self._header() == other._header() and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("t", "q", "v", "u", "forces", "sites", "contact_mask")
        )

    def _header(self) -> dict:
        return {
            "task": self.task.model_dump(mode="json"),
            "feasibility": self.feasibility.model_dump(mode="json"),
            "schedule": self.schedule,
            "schedule_digest": self.schedule_digest,
            "site_names": list(self.site_names),
            "floating": self.floating,
            "converged": self.converged,
            "cost": self.cost,
            "n_q": self.n_q,
            "n_v": self.n_v,
            "n_u": self.n_u,
        }

    @classmethod
    def from_trajectory(
        cls, task: TaskSpec, model: RobotModel, traj: OptimalTrajectory, report: FeasibilityReport
    ) -> "DatasetRecord":
        n = traj.n_knots
        held_u = np.vstack([traj.u, traj.u[-1:]]) if traj.u.shape[0] else np.zeros((n, model.n_u))
        held_f = np.vstack([traj.forces, traj.forces[-1:]])
        return cls(
            task=task,
            model_hash=model.hash,
            dt=traj.dt,
            schedule_digest=traj.schedule.digest(),
            schedule=traj.schedule.to_dict(),
            feasibility=report,
            site_names=tuple(model.site_names),
            floating=model.floating,
            converged=traj.converged,
            cost=float(traj.cost),
            t=np.arange(n) * traj.dt,
            q=traj.q.copy(),
            v=traj.v.copy(),
            u=held_u,
            forces=held_f,
            sites=traj.site_positions.copy(),
            contact_mask=traj.contact_mask.copy(),
        )


# ============================================
# INTERPOLATION
# ============================================


def reference_at(record: DatasetRecord, t: float) -> ReferenceTuple:
    """
    Reference at time t (seconds from the record start).

    q, v, site positions and base targets are interpolated linearly; torques,
    forces and the contact mask are held from the knot at or before t. A time
    on the knot grid returns that knot's values unchanged.

    Raises:
        ValueError: If t lies outside [0, duration]
    """
    duration = record.duration
    if not (-1e-12 <= t <= duration + 1e-12):
        raise ValueError(f"t={t} outside the reference duration [0, {duration}]")

    s = min(max(t / record.dt, 0.0), record.n_knots - 1.0)
    nearest = int(round(s))
    if abs(s - nearest) < 1e-9:
        k, frac = nearest, 0.0
    else:
        k = int(np.floor(s))
        frac = s - k

    def lerp(values: np.ndarray) -> np.ndarray:
        if frac == 0.0:
            return values[k].copy()
        return values[k] + frac * (values[k + 1] - values[k])

    q = lerp(record.q)
    v = lerp(record.v)
    if record.floating:
        base_position, base_pitch = q[:2].copy(), float(q[2])
        base_velocity, base_pitch_rate = v[:2].copy(), float(v[2])
    else:
        base_position, base_pitch = np.zeros(2), 0.0
        base_velocity, base_pitch_rate = np.zeros(2), 0.0

    return ReferenceTuple(
        t=float(t),
        q=q,
        v=v,
        u=record.u[k].copy(),
        forces=record.forces[k].copy(),
        sites=lerp(record.sites),
        contact_mask=record.contact_mask[k].copy(),
        base_position=base_position,
        base_pitch=base_pitch,
        base_velocity=base_velocity,
        base_pitch_rate=base_pitch_rate,
    )


# ============================================
# WRITE
# ============================================


def _format_row(values: Iterable[float]) -> str:
    return " ".join(format(float(x), NUMBER_FORMAT) for x in values)


def _record_lines(record: DatasetRecord) -> List[str]:
    lines = [f"{MAGIC} v{FORMAT_VERSION} {record.model_hash} {format(record.dt, NUMBER_FORMAT)} {record.n_knots}"]
    lines.append(json.dumps(record._header(), sort_keys=True))
    n_sites = len(record.site_names)
    for k in range(record.n_knots):
        lines.append(_format_row(np.concatenate([
            [record.t[k]],
            record.q[k],
            record.v[k],
            record.u[k],
            record.forces[k],
            record.sites[k].reshape(CONTACT_DIM * n_sites),
            record.contact_mask[k].astype(float),
        ])))
    return lines


def write_dataset(records: Sequence[DatasetRecord], path: Path, require_feasible: bool = True) -> Path:
    """
    Write records to a .trjd file.

    Raises:
        DatasetFormatError: If require_feasible is set and a record failed its feasibility gates
    """
    path = Path(path)
    if require_feasible:
        for index, record in enumerate(records):
            if not record.feasibility.passed:
                raise DatasetFormatError(
                    f"Record {index} ({record.task.name}) failed feasibility gates: {record.feasibility.reasons}"
                )

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write("\n".join(_record_lines(record)))
            handle.write("\n")
    logger.info(f"Wrote {len(records)} record(s) to {path}")
    return path


# ============================================
# READ
# ============================================


def _parse_header_line(line: str, index: int) -> Tuple[str, float, int]:
    parts = line.split()
    if not parts or parts[0] != MAGIC:
        raise DatasetFormatError(f"Record {index}: expected a '{MAGIC}' header line, found {line[:40]!r}")
    if len(parts) < 2 or parts[1] != f"v{FORMAT_VERSION}":
        found = parts[1] if len(parts) > 1 else "<none>"
        raise VersionMismatchError(f"Record {index}: unsupported dataset version {found} (expected v{FORMAT_VERSION})")
    if len(parts) != 5:
        raise TruncatedDatasetError(index, f"header line has {len(parts)} fields, expected 5")
    try:
        return parts[2], float(parts[3]), int(parts[4])
    except ValueError as e:
        raise DatasetFormatError(f"Record {index}: malformed header line: {e}") from e


def _parse_record(header: Tuple[str, float, int], meta: dict, rows: np.ndarray) -> DatasetRecord:
    model_hash, dt, n = header
    n_q, n_v, n_u = meta["n_q"], meta["n_v"], meta["n_u"]
    n_sites = len(meta["site_names"])

    cursor = 0

    def take(width: int) -> np.ndarray:
        nonlocal cursor
        block = rows[:, cursor:cursor + width]
        cursor += width
        return block.copy()

    t = take(1)[:, 0]
    q, v, u = take(n_q), take(n_v), take(n_u)
    forces = take(CONTACT_DIM * n_sites)
    sites = take(CONTACT_DIM * n_sites).reshape(n, n_sites, CONTACT_DIM)
    mask = take(n_sites)
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise DatasetFormatError("Contact mask entries must be 0 or 1")

    return DatasetRecord(
        task=TaskSpec(**meta["task"]),
        model_hash=model_hash,
        dt=dt,
        schedule_digest=meta["schedule_digest"],
        schedule=meta["schedule"],
        feasibility=FeasibilityReport(**meta["feasibility"]),
        site_names=tuple(meta["site_names"]),
        floating=bool(meta["floating"]),
        converged=bool(meta["converged"]),
        cost=float(meta["cost"]),
        t=t,
        q=q,
        v=v,
        u=u,
        forces=forces,
        sites=sites,
        contact_mask=mask.astype(bool),
    )


def read_dataset(path: Path, expected_model_hash: Optional[str] = None) -> List[DatasetRecord]:
    """
    Read every record of a .trjd file.

    Args:
        path: Dataset file
        expected_model_hash: When given, every record must carry this model hash

    Raises:
        VersionMismatchError: If a record header names another format version
        ModelHashMismatchError: If a record was generated with another model
        TruncatedDatasetError: If a record ends early or a knot line is damaged
        DatasetFormatError: For any other malformed content
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle]
    while lines and not lines[-1].strip():
        lines.pop()

    records = []
    i = 0
    while i < len(lines):
        index = len(records)
        header = _parse_header_line(lines[i], index)
        model_hash, _, n = header
        if expected_model_hash is not None and model_hash != expected_model_hash:
            raise ModelHashMismatchError(expected=expected_model_hash, found=model_hash)

        if i + 1 >= len(lines):
            raise TruncatedDatasetError(index, "missing header JSON line")
        try:
            meta = json.loads(lines[i + 1])
        except json.JSONDecodeError as e:
            raise TruncatedDatasetError(index, f"damaged header JSON: {e}") from e

        knot_lines = lines[i + 2:i + 2 + n]
        if len(knot_lines) < n:
            raise TruncatedDatasetError(index, f"expected {n} knot lines, found {len(knot_lines)}")

        n_sites = len(meta["site_names"])
        width = 1 + meta["n_q"] + meta["n_v"] + meta["n_u"] + 2 * CONTACT_DIM * n_sites + n_sites
        rows = np.zeros((n, width))
        for j, line in enumerate(knot_lines):
            fields = line.split()
            if len(fields) != width:
                raise TruncatedDatasetError(index, f"knot {j} has {len(fields)} columns, expected {width}")
            try:
                rows[j] = [float(x) for x in fields]
            except ValueError as e:
                raise TruncatedDatasetError(index, f"knot {j}: {e}") from e

        try:
            records.append(_parse_record(header, meta, rows))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DatasetFormatError):
                raise
            raise DatasetFormatError(f"Record {index}: invalid header contents: {e}") from e
        i += 2 + n

    logger.debug(f"Read {len(records)} record(s) from {path}")
    return records


def read_datasets(paths: Sequence[Path], expected_model_hash: Optional[str] = None) -> List[DatasetRecord]:
    """Concatenate the records of several .trjd files in the given order."""
    records = []
    for path in paths:
        records.extend(read_dataset(path, expected_model_hash))
    return records


# ============================================
# SELECTION
# ============================================


@dataclass(frozen=True)
class DatasetSlice:
    """Records of one task (or all tasks) within an index range of that selection."""
    task: Optional[str] = None
    start: int = 0
    stop: Optional[int] = None

    def select(self, records: Sequence[DatasetRecord]) -> List[DatasetRecord]:
        chosen = [r for r in records if self.task is None or r.task.name == self.task]
        return chosen[self.start:self.stop]


def split_holdout(
    records: Sequence[DatasetRecord], fraction: float, seed: int
) -> Tuple[List[DatasetRecord], List[DatasetRecord]]:
    """Seeded split into (training, held-out) records; at least one record stays in training."""
    n = len(records)
    n_hold = min(int(round(fraction * n)), max(n - 1, 0))
    order = np.random.default_rng(seed).permutation(n)
    held = set(order[:n_hold].tolist())
    train = [r for i, r in enumerate(records) if i not in held]
    holdout = [r for i, r in enumerate(records) if i in held]
    return train, holdout
