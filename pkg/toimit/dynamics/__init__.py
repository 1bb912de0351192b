# toimit/dynamics - planar floating-base rigid-body dynamics
from toimit.dynamics.algorithms import (
    bias_forces,
    com_positions,
    constrained_forward_dynamics,
    contact_jacobian,
    impulse_dynamics,
    inverse_dynamics,
    kinetic_energy,
    mass_matrix,
    simulate_passive,
    site_kinematics,
    site_positions,
    total_energy,
)
from toimit.dynamics.robot import CONTACT_DIM, ContactSet, RobotModel, RobotState

__all__ = [
    "CONTACT_DIM",
    "ContactSet",
    "RobotModel",
    "RobotState",
    "bias_forces",
    "com_positions",
    "constrained_forward_dynamics",
    "contact_jacobian",
    "impulse_dynamics",
    "inverse_dynamics",
    "kinetic_energy",
    "mass_matrix",
    "simulate_passive",
    "site_kinematics",
    "site_positions",
    "total_energy",
]
