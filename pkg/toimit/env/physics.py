# toimit/env/physics.py - penalty-contact simulation of a robot model at the inner PD rate
import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from toimit.dynamics import CONTACT_DIM, RobotModel, RobotState
from toimit.dynamics.algorithms import bias_forces, mass_matrix, site_kinematics
from toimit.env.terrain import Terrain
from toimit.errors import NumericError
from toimit.schemas import ContactParameters


logger = logging.getLogger(__name__)


@dataclass
class SimStep:
    state: RobotState
    contact_forces: np.ndarray  # (2 * n_contact_sites,) world-frame forces on the robot
    accel: np.ndarray


class SoftContactSimulator:
    """
    Semi-implicit Euler integration with spring-damper contact.

    Normal force: k_n * max(0, -gap) - d_n * gap_rate, never pulling. Tangential
    force: a spring-damper to an anchor point set at touchdown, clamped to the
    Coulomb bound mu * F_n; when the clamp is active the anchor slides with the
    site.
    """

    def __init__(
        self,
        model: RobotModel,
        terrain: Terrain,
        contact_sites: Sequence[str],
        contact: ContactParameters,
        friction: float,
        dt: float,
    ):
        for name in contact_sites:
            model.site(name)
        self.model = model
        self.terrain = terrain
        self.contact_sites = tuple(contact_sites)
        self.contact = contact
        self.friction = friction
        self.dt = dt
        self._anchors: Dict[str, np.ndarray] = {}

    def reset(self) -> None:
        self._anchors.clear()

    def gap(self, position: np.ndarray) -> float:
        _, normal = self.terrain.frame(position[0])
        surface = np.array([position[0], self.terrain.height(position[0])])
        return float((position - surface) @ normal)

    def _site_force(self, name: str, position: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        c = self.contact
        tangent, normal = self.terrain.frame(position[0])
        gap = self.gap(position)
        if gap >= 0.0:
            self._anchors.pop(name, None)
            return np.zeros(CONTACT_DIM)

        normal_force = max(0.0, c.normal_stiffness * (-gap) - c.normal_damping * float(velocity @ normal))
        anchor = self._anchors.setdefault(name, position.copy())
        slip = float((position - anchor) @ tangent)
        tangent_force = -c.tangent_stiffness * slip - c.tangent_damping * float(velocity @ tangent)

        bound = self.friction * normal_force
        if abs(tangent_force) > bound:
            tangent_force = float(np.sign(tangent_force)) * bound
            self._anchors[name] = position + (tangent_force / c.tangent_stiffness) * tangent
        return normal_force * normal + tangent_force * tangent

    def contact_forces(self, state: RobotState) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked contact forces and the generalized force they produce."""
        forces = np.zeros(CONTACT_DIM * len(self.contact_sites))
        generalized = np.zeros(self.model.n_v)
        for i, name in enumerate(self.contact_sites):
            position, velocity, J = site_kinematics(self.model, state, name)
            f = self._site_force(name, position, velocity)
            forces[CONTACT_DIM * i:CONTACT_DIM * (i + 1)] = f
            generalized += J.T @ f
        return forces, generalized

    def step(self, state: RobotState, torque: np.ndarray) -> SimStep:
        """
        Advance one substep under joint torques.

        Raises:
            NumericError: If the mass matrix is singular or the new state is not finite
        """
        forces, generalized = self.contact_forces(state)
        rhs = self.model.B @ torque + generalized - bias_forces(self.model, state)
        try:
            accel = cho_solve(cho_factor(mass_matrix(self.model, state)), rhs)
        except LinAlgError as e:
            raise NumericError(f"Mass matrix not positive definite: {e}") from e

        v_next = state.v + self.dt * accel
        q_next = state.q + self.dt * v_next
        if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(v_next))):
            raise NumericError("Simulation produced a non-finite state")
        return SimStep(RobotState(q=q_next, v=v_next), forces, accel)
