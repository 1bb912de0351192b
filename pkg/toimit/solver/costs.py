# toimit/solver/costs.py - tracking, control, limit and friction cost terms
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from toimit.dynamics import CONTACT_DIM, RobotModel
from toimit.dynamics.algorithms import site_positions
from toimit.errors import ConfigError
from toimit.schemas import CostWeights


FEATURE_KINDS = ("site_x", "site_z", "q", "v", "force_t", "force_n")


@dataclass(frozen=True)
class Feature:
    """One tracked scalar: a site coordinate, a generalized coordinate/velocity, or a contact force component."""
    kind: str
    name: str = ""  # site name for site/force features
    index: int = 0  # coordinate index for q/v features

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigError(f"Unknown feature kind '{self.kind}'. Expected one of {FEATURE_KINDS}")

    @property
    def label(self) -> str:
        if self.kind in ("q", "v"):
            return f"{self.kind}[{self.index}]"
        return f"{self.kind}:{self.name}"


@dataclass
class CostStack:
    """
    Weighted least-squares cost over a knot grid.

    targets and weights are (n_knots, n_features); the last row of weights is
    the terminal weight Q_f. Force features are ignored at the terminal knot.
    """
    features: List[Feature]
    targets: np.ndarray
    weights: np.ndarray
    control_weight: np.ndarray
    torque_limit_weight: float = 1e3
    joint_limit_weight: float = 1e3
    joint_limit_margin: float = 0.05
    friction_weight: float = 1e2
    mu: float = 0.7
    unilateral_weight: float = 1e4
    normal_force_margin: float = 0.01

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.control_weight = np.asarray(self.control_weight, dtype=float)

        if self.targets.shape != self.weights.shape:
            raise ConfigError(f"targets {self.targets.shape} and weights {self.weights.shape} differ in shape")
        if self.targets.ndim != 2 or self.targets.shape[1] != len(self.features):
            raise ConfigError(f"Expected (n_knots, {len(self.features)}) targets, got {self.targets.shape}")
        if np.any(self.weights < 0):
            raise ConfigError("Tracking weights must be positive semidefinite")
        if np.any(self.control_weight <= 0):
            raise ConfigError("Control weight R must be strictly positive")
        if not 0 < self.mu <= 1.5:
            raise ConfigError(f"Friction coefficient mu={self.mu} outside (0, 1.5]")
        for name in ("torque_limit_weight", "joint_limit_weight", "friction_weight", "unilateral_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    # ============================================
    # CONSTRUCTION
    # ============================================

    @classmethod
    def empty(cls, model: RobotModel, n_knots: int, weights: Optional[CostWeights] = None) -> "CostStack":
        w = weights or CostWeights()
        return cls(
            features=[],
            targets=np.zeros((n_knots, 0)),
            weights=np.zeros((n_knots, 0)),
            control_weight=np.full(model.n_u, w.control),
            torque_limit_weight=w.torque_limit,
            joint_limit_weight=w.joint_limit,
            joint_limit_margin=w.joint_limit_margin,
            friction_weight=w.friction,
            mu=w.mu,
            unilateral_weight=w.unilateral,
            normal_force_margin=w.normal_force_margin,
        )

    def add_term(self, feature: Feature, targets: Sequence[float], weights: Sequence[float]) -> "CostStack":
        """Append a tracked feature with per-knot targets and weights."""
        targets = np.broadcast_to(np.asarray(targets, dtype=float), (self.n_knots,))
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (self.n_knots,))
        if np.any(weights < 0):
            raise ConfigError(f"Negative weight for {feature.label}")

        self.features.append(feature)
        self.targets = np.column_stack([self.targets, targets])
        self.weights = np.column_stack([self.weights, weights])
        return self

    @property
    def n_knots(self) -> int:
        return self.targets.shape[0]

    @property
    def terminal_weight(self) -> np.ndarray:
        return self.weights[-1]

    def columns(self, kind: str, name: str = "") -> List[int]:
        return [i for i, f in enumerate(self.features) if f.kind == kind and (not name or f.name == name)]

    # ============================================
    # EVALUATION
    # ============================================

    def feature_values(
        self, model: RobotModel, x: np.ndarray, forces: Dict[str, np.ndarray]
    ) -> np.ndarray:
        """Current value of every feature; inactive sites contribute zero force."""
        q, v = x[:model.n_q], x[model.n_q:]
        site_names = sorted({f.name for f in self.features if f.kind in ("site_x", "site_z")})
        positions = dict(zip(site_names, site_positions(model, q, site_names))) if site_names else {}

        values = np.zeros(len(self.features))
        for i, f in enumerate(self.features):
            if f.kind == "site_x":
                values[i] = positions[f.name][0]
            elif f.kind == "site_z":
                values[i] = positions[f.name][1]
            elif f.kind == "q":
                values[i] = q[f.index]
            elif f.kind == "v":
                values[i] = v[f.index]
            elif f.kind == "force_t":
                values[i] = forces[f.name][0] if f.name in forces else 0.0
            else:
                values[i] = forces[f.name][1] if f.name in forces else 0.0
        return values

    def _limit_residual(self, model: RobotModel, q: np.ndarray) -> np.ndarray:
        joints = q[list(model.actuated)]
        lower = model.joint_lower + self.joint_limit_margin
        upper = model.joint_upper - self.joint_limit_margin
        excess = np.concatenate([np.maximum(0.0, lower - joints), np.maximum(0.0, joints - upper)])
        return np.sqrt(self.joint_limit_weight) * excess

    def stage_residual(
        self,
        model: RobotModel,
        k: int,
        x: np.ndarray,
        u: np.ndarray,
        active_sites: Tuple[str, ...],
        stacked_forces: np.ndarray,
    ) -> np.ndarray:
        """Residual vector r_k whose squared norm is the stage cost."""
        forces = {
            name: stacked_forces[CONTACT_DIM * i:CONTACT_DIM * (i + 1)] for i, name in enumerate(active_sites)
        }
        tracking = np.sqrt(self.weights[k]) * (self.feature_values(model, x, forces) - self.targets[k])
        control = np.sqrt(self.control_weight) * u
        torque = np.sqrt(self.torque_limit_weight) * np.maximum(0.0, np.abs(u) - model.torque_limits)

        friction = np.zeros(len(active_sites))
        unilateral = np.zeros(len(active_sites))
        for i, name in enumerate(active_sites):
            f_t, f_n = forces[name]
            friction[i] = np.sqrt(self.friction_weight) * max(0.0, abs(f_t) - self.mu * f_n)
            unilateral[i] = np.sqrt(self.unilateral_weight) * max(0.0, self.normal_force_margin - f_n)

        return np.concatenate([
            tracking, control, torque, self._limit_residual(model, x[:model.n_q]), friction, unilateral,
        ])

    def terminal_residual(self, model: RobotModel, x: np.ndarray) -> np.ndarray:
        weights = self.weights[-1].copy()
        for i, f in enumerate(self.features):
            if f.kind in ("force_t", "force_n"):
                weights[i] = 0.0
        tracking = np.sqrt(weights) * (self.feature_values(model, x, {}) - self.targets[-1])
        return np.concatenate([tracking, self._limit_residual(model, x[:model.n_q])])
