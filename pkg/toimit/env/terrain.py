# toimit/env/terrain.py - ground height fields used by the soft-contact simulator
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


TERRAIN_KINDS = ("flat", "rough", "stairs", "slope", "desk")


@dataclass(frozen=True, eq=False)
class Terrain:
    """
    Height profile z = h(x) of the contact surface.

    `start` is the x coordinate where stairs and slopes begin; `riser` and
    `step_length` shape stairs; `angle` (rad) shapes slopes. Rough terrain is a
    piecewise-linear height field with nodes every `spacing` meters.
    """
    kind: str = "flat"
    level: float = 0.0
    start: float = 0.0
    riser: float = 0.0
    step_length: float = 0.3
    n_steps: int = 0
    angle: float = 0.0
    spacing: float = 0.10
    nodes: Optional[np.ndarray] = field(default=None, repr=False)
    origin: float = -2.0

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ValueError(f"Unknown terrain '{self.kind}'. Expected one of {TERRAIN_KINDS}")

    @classmethod
    def flat(cls, level: float = 0.0) -> "Terrain":
        return cls(kind="flat", level=level)

    @classmethod
    def desk(cls, height: float) -> "Terrain":
        return cls(kind="desk", level=height)

    @classmethod
    def rough(cls, amplitude: float, spacing: float, rng: np.random.Generator, extent: float = 8.0) -> "Terrain":
        count = int(np.ceil(extent / spacing)) + 1
        nodes = rng.uniform(-amplitude, amplitude, size=count)
        return cls(kind="rough", spacing=spacing, nodes=nodes, origin=-extent / 4.0)

    @classmethod
    def stairs(cls, start: float, riser: float, step_length: float, n_steps: int) -> "Terrain":
        return cls(kind="stairs", start=start, riser=riser, step_length=step_length, n_steps=n_steps)

    @classmethod
    def slope(cls, start: float, angle: float) -> "Terrain":
        return cls(kind="slope", start=start, angle=angle)

    def height(self, x: float) -> float:
        if self.kind in ("flat", "desk"):
            return self.level
        if self.kind == "stairs":
            # edges sit halfway between landing points
            index = np.floor((x - self.start) / self.step_length + 0.5)
            return self.level + self.riser * float(np.clip(index, 0, self.n_steps))
        if self.kind == "slope":
            return self.level + np.tan(self.angle) * max(0.0, x - self.start)
        position = (x - self.origin) / self.spacing
        if position <= 0:
            return float(self.nodes[0])
        if position >= len(self.nodes) - 1:
            return float(self.nodes[-1])
        i = int(position)
        frac = position - i
        return float(self.nodes[i] + frac * (self.nodes[i + 1] - self.nodes[i]))

    def slope_at(self, x: float) -> float:
        """dh/dx at x (zero on flat treads and risers)."""
        if self.kind == "slope" and x > self.start:
            return float(np.tan(self.angle))
        if self.kind == "rough":
            position = (x - self.origin) / self.spacing
            if 0 < position < len(self.nodes) - 1:
                i = int(position)
                return float((self.nodes[i + 1] - self.nodes[i]) / self.spacing)
        return 0.0

    def frame(self, x: float) -> Tuple[np.ndarray, np.ndarray]:
        """Unit (tangent, normal) of the surface at x."""
        slope = self.slope_at(x)
        norm = np.hypot(1.0, slope)
        return np.array([1.0, slope]) / norm, np.array([-slope, 1.0]) / norm
