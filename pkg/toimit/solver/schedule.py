# toimit/solver/schedule.py - timed contact phases and impact knots
import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from toimit.errors import ConfigError


@dataclass(frozen=True)
class Phase:
    duration: float
    active_sites: Tuple[str, ...]


@dataclass(frozen=True)
class ContactSchedule:
    """
    Ordered contact phases on a uniform knot grid.

    Interval k (between knots k and k+1) uses the active set of the phase that
    contains it. An impact knot is a phase boundary where the active set grows.
    """
    phases: Tuple[Phase, ...]
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.phases:
            raise ConfigError("A contact schedule needs at least one phase")

        for i, phase in enumerate(self.phases):
            if phase.duration <= 0:
                raise ConfigError(f"Phase {i} has non-positive duration {phase.duration}")
            ratio = phase.duration / self.dt
            if abs(ratio - round(ratio)) > 1e-6:
                raise ConfigError(f"dt={self.dt} does not divide phase {i} duration {phase.duration}")

    @classmethod
    def build(cls, phases: Sequence[Tuple[float, Sequence[str]]], dt: float) -> "ContactSchedule":
        return cls(tuple(Phase(float(d), tuple(sites)) for d, sites in phases), float(dt))

    @property
    def phase_knots(self) -> List[int]:
        return [int(round(p.duration / self.dt)) for p in self.phases]

    @property
    def n_intervals(self) -> int:
        return sum(self.phase_knots)

    @property
    def n_knots(self) -> int:
        return self.n_intervals + 1

    @property
    def horizon(self) -> float:
        return sum(p.duration for p in self.phases)

    def boundaries(self) -> List[int]:
        """Knot index at which each phase starts."""
        starts, k = [], 0
        for steps in self.phase_knots:
            starts.append(k)
            k += steps
        return starts

    def active_at(self, k: int) -> Tuple[str, ...]:
        """Active sites on interval k; the final knot reuses the last phase."""
        k = min(k, self.n_intervals - 1)
        cursor = 0
        for phase, steps in zip(self.phases, self.phase_knots):
            cursor += steps
            if k < cursor:
                return phase.active_sites
        return self.phases[-1].active_sites

    @property
    def impact_knots(self) -> Tuple[int, ...]:
        knots = []
        for start, prev, phase in zip(self.boundaries()[1:], self.phases, self.phases[1:]):
            if set(phase.active_sites) - set(prev.active_sites):
                knots.append(start)
        return tuple(knots)

    def digest(self) -> str:
        text = ";".join(f"{p.duration:.17g}:{','.join(p.active_sites)}" for p in self.phases)
        return hashlib.sha256(f"{self.dt:.17g}|{text}".encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "phases": [{"duration": p.duration, "active_sites": list(p.active_sites)} for p in self.phases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContactSchedule":
        return cls.build([(p["duration"], p["active_sites"]) for p in data["phases"]], data["dt"])
