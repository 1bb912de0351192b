# toimit/dynamics/algorithms.py - recursive dynamics, site kinematics and contact-constrained dynamics
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve

from toimit.dynamics.robot import CONTACT_DIM, ContactSet, RobotModel, RobotState, check_state
from toimit.dynamics.spatial import crf, crm, joint_transform, perp, plnr, rot2
from toimit.errors import DimensionError, NumericError, RankDeficientContactError


logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12
DAMPING = 1e-9
DAMPING_CONDITION = 1e10


def _require_finite(name: str, *arrays: np.ndarray) -> None:
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NumericError(f"{name}: non-finite input")


# ============================================
# RECURSIVE ALGORITHMS
# ============================================


def _link_transforms(model: RobotModel, q: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    Xup, S = [], []
    for i, dof in enumerate(model.dofs):
        XJ, s = joint_transform(dof.kind, q[i], dof.axis)
        Xup.append(XJ @ plnr(0.0, dof.offset))
        S.append(s)
    return Xup, S


def rnea(model: RobotModel, q: np.ndarray, v: np.ndarray, a: np.ndarray, with_gravity: bool = True) -> np.ndarray:
    """Recursive Newton-Euler: generalized force M(q) a + C(q, v)."""
    Xup, S = _link_transforms(model, q)
    n = model.n_v
    a_grav = np.array([0.0, 0.0, -model.gravity if with_gravity else 0.0])

    vel = [None] * n
    acc = [None] * n
    f = [None] * n
    for i, dof in enumerate(model.dofs):
        vJ = S[i] * v[i]
        if dof.parent < 0:
            vel[i] = vJ
            acc[i] = Xup[i] @ (-a_grav) + S[i] * a[i]
        else:
            vel[i] = Xup[i] @ vel[dof.parent] + vJ
            acc[i] = Xup[i] @ acc[dof.parent] + S[i] * a[i] + crm(vel[i]) @ vJ
        I = model.inertias[i]
        f[i] = I @ acc[i] + crf(vel[i]) @ (I @ vel[i])

    tau = np.zeros(n)
    for i in range(n - 1, -1, -1):
        tau[i] = S[i] @ f[i]
        parent = model.dofs[i].parent
        if parent >= 0:
            f[parent] = f[parent] + Xup[i].T @ f[i]
    return tau


def _crba(model: RobotModel, q: np.ndarray) -> np.ndarray:
    Xup, S = _link_transforms(model, q)
    n = model.n_v
    IC = [np.array(model.inertias[i]) for i in range(n)]
    for i in range(n - 1, -1, -1):
        parent = model.dofs[i].parent
        if parent >= 0:
            IC[parent] = IC[parent] + Xup[i].T @ IC[i] @ Xup[i]

    H = np.zeros((n, n))
    for i in range(n):
        fh = IC[i] @ S[i]
        H[i, i] = S[i] @ fh
        j = i
        while model.dofs[j].parent >= 0:
            fh = Xup[j].T @ fh
            j = model.dofs[j].parent
            H[i, j] = S[j] @ fh
            H[j, i] = H[i, j]
    return H


def mass_matrix(model: RobotModel, state: RobotState) -> np.ndarray:
    """Joint-space mass matrix M(q) by the composite rigid-body algorithm."""
    check_state(model, state)
    return _crba(model, state.q)


def bias_forces(model: RobotModel, state: RobotState) -> np.ndarray:
    """C(q, v): Coriolis, centrifugal and gravity terms."""
    check_state(model, state)
    return rnea(model, state.q, state.v, np.zeros(model.n_v))


def inverse_dynamics(
    model: RobotModel, state: RobotState, accel: np.ndarray, contacts: Optional[ContactSet] = None
) -> np.ndarray:
    """
    Generalized force M(q) v_dot + C(q, v) - J_c^T F_c.

    Args:
        model: Robot model
        state: Current state
        accel: Generalized acceleration (n_v,)
        contacts: Active sites with their stacked forces; None means no contact

    Returns:
        Generalized force (n_v,). Base rows hold the residual base wrench.
    """
    check_state(model, state)
    accel = np.asarray(accel, dtype=float).reshape(-1)
    if accel.shape[0] != model.n_v:
        raise DimensionError(f"Acceleration has {accel.shape[0]} entries, model expects {model.n_v}")
    _require_finite("inverse_dynamics", accel)

    tau = rnea(model, state.q, state.v, accel)
    if contacts is not None and len(contacts) and contacts.forces is not None:
        J, _ = contact_jacobian(model, state, contacts.active_sites)
        tau = tau - J.T @ contacts.forces
    return tau


# ============================================
# KINEMATICS
# ============================================


@dataclass
class Kinematics:
    """World-frame origin, angle and derivatives of every link frame."""
    origin: np.ndarray  # (n, 2)
    angle: np.ndarray  # (n,)
    omega: np.ndarray
    velocity: np.ndarray  # (n, 2)
    alpha: np.ndarray
    acceleration: np.ndarray  # (n, 2), with the supplied generalized acceleration


def forward_kinematics(model: RobotModel, q: np.ndarray, v: np.ndarray, a: Optional[np.ndarray] = None) -> Kinematics:
    n = model.n_v
    a = np.zeros(n) if a is None else a
    origin = np.zeros((n, 2))
    angle = np.zeros(n)
    omega = np.zeros(n)
    velocity = np.zeros((n, 2))
    alpha = np.zeros(n)
    acceleration = np.zeros((n, 2))

    for i, dof in enumerate(model.dofs):
        if dof.parent < 0:
            o_p, th_p, w_p, v_p, al_p, a_p = np.zeros(2), 0.0, 0.0, np.zeros(2), 0.0, np.zeros(2)
        else:
            p = dof.parent
            o_p, th_p, w_p, v_p, al_p, a_p = origin[p], angle[p], omega[p], velocity[p], alpha[p], acceleration[p]

        R_p = rot2(th_p)
        offset = np.asarray(dof.offset)
        if dof.kind == "revolute":
            r = R_p @ offset
            origin[i] = o_p + r
            angle[i] = th_p + q[i]
            omega[i] = w_p + v[i]
            velocity[i] = v_p + w_p * perp(r)
            alpha[i] = al_p + a[i]
            acceleration[i] = a_p + al_p * perp(r) - w_p ** 2 * r
        else:
            direction = R_p @ np.asarray(dof.axis)
            r = R_p @ offset + direction * q[i]
            origin[i] = o_p + r
            angle[i] = th_p
            omega[i] = w_p
            velocity[i] = v_p + w_p * perp(r) + direction * v[i]
            alpha[i] = al_p
            acceleration[i] = (
                a_p + al_p * perp(r) - w_p ** 2 * r + 2.0 * w_p * perp(direction) * v[i] + direction * a[i]
            )

    return Kinematics(origin, angle, omega, velocity, alpha, acceleration)


def _ancestors(model: RobotModel, index: int) -> List[int]:
    chain = []
    while index >= 0:
        chain.append(index)
        index = model.dofs[index].parent
    return chain


def _point_jacobian(model: RobotModel, kin: Kinematics, dof_index: int, point: np.ndarray) -> np.ndarray:
    J = np.zeros((2, model.n_v))
    for j in _ancestors(model, dof_index):
        dof = model.dofs[j]
        if dof.kind == "revolute":
            J[:, j] = perp(point - kin.origin[j])
        else:
            J[:, j] = rot2(kin.angle[j]) @ np.asarray(dof.axis)
    return J


def _site_terms(model: RobotModel, kin: Kinematics, name: str):
    site = model.site(name)
    k = site.dof
    r = rot2(kin.angle[k]) @ np.asarray(site.offset)
    position = kin.origin[k] + r
    velocity = kin.velocity[k] + kin.omega[k] * perp(r)
    bias = kin.acceleration[k] + kin.alpha[k] * perp(r) - kin.omega[k] ** 2 * r
    J = _point_jacobian(model, kin, k, position)
    return position, velocity, J, bias


def site_kinematics(model: RobotModel, state: RobotState, site: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    World-frame position, velocity and Jacobian of a named site.

    Returns:
        (position (2,), velocity (2,), jacobian (2, n_v))
    """
    check_state(model, state)
    kin = forward_kinematics(model, state.q, state.v)
    position, velocity, J, _ = _site_terms(model, kin, site)
    return position, velocity, J


def site_positions(model: RobotModel, q: np.ndarray, sites: Optional[Sequence[str]] = None) -> np.ndarray:
    """Stacked (len(sites), 2) world positions; all model sites when `sites` is None."""
    names = model.site_names if sites is None else sites
    kin = forward_kinematics(model, q, np.zeros(model.n_v))
    out = np.zeros((len(names), 2))
    for i, name in enumerate(names):
        site = model.site(name)
        out[i] = kin.origin[site.dof] + rot2(kin.angle[site.dof]) @ np.asarray(site.offset)
    return out


def contact_jacobian(model: RobotModel, state: RobotState, sites: Iterable[str]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stacked contact Jacobian and bias acceleration J_dot v for the given sites.

    Returns:
        (J (2k, n_v), J_dot_v (2k,))
    """
    sites = tuple(sites)
    kin = forward_kinematics(model, state.q, state.v)
    J = np.zeros((CONTACT_DIM * len(sites), model.n_v))
    bias = np.zeros(CONTACT_DIM * len(sites))
    for i, name in enumerate(sites):
        _, _, J_site, b = _site_terms(model, kin, name)
        J[CONTACT_DIM * i:CONTACT_DIM * (i + 1)] = J_site
        bias[CONTACT_DIM * i:CONTACT_DIM * (i + 1)] = b
    return J, bias


def com_positions(model: RobotModel, q: np.ndarray) -> np.ndarray:
    kin = forward_kinematics(model, q, np.zeros(model.n_v))
    return np.array([
        kin.origin[b.dof] + rot2(kin.angle[b.dof]) @ np.asarray(b.com) for b in model.bodies
    ])


# ============================================
# CONTACT DYNAMICS
# ============================================


def _factor_mass_matrix(M: np.ndarray):
    try:
        return cho_factor(M)
    except LinAlgError as e:
        raise NumericError("Mass matrix is not positive definite") from e


def _check_rank(J: np.ndarray) -> None:
    sigma = np.linalg.svd(J, compute_uv=False)
    if sigma.size and sigma.min() < RANK_TOLERANCE * max(1.0, sigma.max()):
        raise RankDeficientContactError(
            f"Contact Jacobian is rank deficient (smallest singular value {sigma.min():.3e})"
        )


def _operational_inertia_inverse(J: np.ndarray, Minv_Jt: np.ndarray) -> np.ndarray:
    Lam = J @ Minv_Jt
    if np.linalg.cond(Lam) > DAMPING_CONDITION:
        Lam = Lam + DAMPING * np.eye(Lam.shape[0])
    return Lam


def constrained_forward_dynamics(
    model: RobotModel,
    state: RobotState,
    torque: np.ndarray,
    contacts: Optional[ContactSet] = None,
    velocity_gain: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve [M J^T; J 0][v_dot; -F] = [B u - C; -J_dot v] for rigid point contacts.

    Args:
        model: Robot model
        state: Current state
        torque: Joint torques (n_u,)
        contacts: Active sites; None or empty for free motion
        velocity_gain: Adds -gain * J v to the constraint right-hand side; zero
            gives the exact acceleration-level constraint J v_dot + J_dot v = 0

    Returns:
        (generalized acceleration (n_v,), stacked contact forces (2k,))

    Raises:
        RankDeficientContactError: If the active contact Jacobian loses row rank
    """
    check_state(model, state)
    torque = np.asarray(torque, dtype=float).reshape(-1)
    if torque.shape[0] != model.n_u:
        raise DimensionError(f"Torque has {torque.shape[0]} entries, model expects {model.n_u}")
    _require_finite("constrained_forward_dynamics", torque)

    M = _crba(model, state.q)
    C = rnea(model, state.q, state.v, np.zeros(model.n_v))
    chol = _factor_mass_matrix(M)
    a_free = cho_solve(chol, model.B @ torque - C)

    if contacts is None or len(contacts) == 0:
        return a_free, np.zeros(0)

    J, J_dot_v = contact_jacobian(model, state, contacts.active_sites)
    _check_rank(J)
    Minv_Jt = cho_solve(chol, J.T)
    Lam = _operational_inertia_inverse(J, Minv_Jt)
    forces = solve(Lam, -J_dot_v - velocity_gain * (J @ state.v) - J @ a_free, assume_a="pos")
    accel = a_free + Minv_Jt @ forces
    return accel, forces


def impulse_dynamics(model: RobotModel, state: RobotState, new_contacts: ContactSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Plastic impact map: M (v+ - v-) = J^T Lambda with J v+ = 0.

    Returns:
        (post-impact velocity (n_v,), stacked impulses (2k,))
    """
    check_state(model, state)
    if new_contacts is None or len(new_contacts) == 0:
        raise ValueError("impulse_dynamics needs at least one contact site")

    M = _crba(model, state.q)
    chol = _factor_mass_matrix(M)
    J, _ = contact_jacobian(model, state, new_contacts.active_sites)
    _check_rank(J)
    Minv_Jt = cho_solve(chol, J.T)
    Lam = _operational_inertia_inverse(J, Minv_Jt)
    impulses = solve(Lam, -J @ state.v, assume_a="pos")
    v_plus = state.v + Minv_Jt @ impulses
    return v_plus, impulses


# ============================================
# ENERGY AND PASSIVE SIMULATION
# ============================================


def kinetic_energy(model: RobotModel, state: RobotState) -> float:
    return float(0.5 * state.v @ mass_matrix(model, state) @ state.v)


def potential_energy(model: RobotModel, q: np.ndarray) -> float:
    coms = com_positions(model, q)
    return float(sum(b.mass * model.gravity * c[1] for b, c in zip(model.bodies, coms)))


def total_energy(model: RobotModel, state: RobotState) -> float:
    return kinetic_energy(model, state) + potential_energy(model, state.q)


def _passive_derivative(model: RobotModel, x: np.ndarray) -> np.ndarray:
    q, v = x[:model.n_q], x[model.n_q:]
    M = _crba(model, q)
    C = rnea(model, q, v, np.zeros(model.n_v))
    return np.concatenate([v, cho_solve(_factor_mass_matrix(M), -C)])


def simulate_passive(model: RobotModel, state: RobotState, dt: float, duration: float) -> np.ndarray:
    """
    Unactuated, contact-free simulation with classical RK4.

    Returns:
        (steps + 1, n_q + n_v) array of stacked states, initial state first
    """
    check_state(model, state)
    steps = int(round(duration / dt))
    trajectory = np.zeros((steps + 1, model.n_q + model.n_v))
    x = state.as_vector()
    trajectory[0] = x
    for k in range(steps):
        k1 = _passive_derivative(model, x)
        k2 = _passive_derivative(model, x + 0.5 * dt * k1)
        k3 = _passive_derivative(model, x + 0.5 * dt * k2)
        k4 = _passive_derivative(model, x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"Passive simulation diverged at step {k + 1}")
        trajectory[k + 1] = x
    return trajectory
