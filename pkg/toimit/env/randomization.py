# toimit/env/randomization.py - per-episode domain randomization draws and the noise/penalty curriculum
from dataclasses import dataclass
from typing import Dict

import numpy as np

from toimit.schemas import CurriculumConfig, ObservationNoise, RandomizationRanges


NOMINAL_FRICTION = 0.7


@dataclass(frozen=True)
class RandomizationDraw:
    """Physical parameters of one episode."""
    mass_scale: float = 1.0
    motor_strength: float = 1.0
    gain_scale: float = 1.0
    gravity_scale: float = 1.0
    friction: float = NOMINAL_FRICTION
    action_delay: float = 0.0  # s
    terrain: str = "flat"

    @classmethod
    def nominal(cls) -> "RandomizationDraw":
        return cls()


def randomize(ranges: RandomizationRanges, seed) -> RandomizationDraw:
    """
    Draw the episode parameters uniformly from their ranges.

    `seed` may be an int or a numpy Generator. Disabled randomization returns
    the nominal draw.
    """
    if not ranges.enabled:
        return RandomizationDraw.nominal()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def uniform(r) -> float:
        return float(rng.uniform(r.low, r.high))

    return RandomizationDraw(
        mass_scale=uniform(ranges.mass_scale),
        motor_strength=uniform(ranges.motor_strength),
        gain_scale=uniform(ranges.gain_scale),
        gravity_scale=uniform(ranges.gravity_scale),
        friction=uniform(ranges.friction),
        action_delay=uniform(ranges.action_delay),
        terrain=str(ranges.terrains[int(rng.integers(len(ranges.terrains)))]),
    )


def noise_sigmas(noise: ObservationNoise, scale: float) -> Dict[str, float]:
    """Per-channel observation noise standard deviations scaled by the curriculum."""
    return {name: sigma * scale for name, sigma in noise.model_dump().items()}


# ============================================
# CURRICULUM
# ============================================


@dataclass(frozen=True)
class CurriculumState:
    noise_scale: float
    penalty_scale: float


def curriculum_update(progress: float, config: CurriculumConfig = CurriculumConfig()) -> CurriculumState:
    """
    Noise and penalty scales at a training progress fraction.

    Both ramp linearly from (noise_start, penalty_start) at progress 0 to 1.0 at
    ramp_end, then hold.
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    ramp = min(progress / config.ramp_end, 1.0)
    return CurriculumState(
        noise_scale=config.noise_start + (1.0 - config.noise_start) * ramp,
        penalty_scale=config.penalty_start + (1.0 - config.penalty_start) * ramp,
    )


EVAL_CURRICULUM = CurriculumState(noise_scale=0.0, penalty_scale=1.0)
