# toimit/solver/ddp.py - iLQR (Gauss-Newton DDP) over a hybrid contact schedule
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from toimit.dynamics import CONTACT_DIM, ContactSet, RobotModel, RobotState
from toimit.dynamics.algorithms import constrained_forward_dynamics, impulse_dynamics, site_positions
from toimit.errors import DimensionError, HessianNotPositiveDefiniteError, NumericError
from toimit.schemas import SolverOptions
from toimit.solver.costs import CostStack
from toimit.solver.schedule import ContactSchedule


logger = logging.getLogger(__name__)


# ============================================
# RESULT
# ============================================


@dataclass
class OptimalTrajectory:
    """Knot-wise solution of a trajectory optimization problem."""
    q: np.ndarray  # (n_knots, n_q)
    v: np.ndarray  # (n_knots, n_v)
    u: np.ndarray  # (n_knots - 1, n_u), clamped to the torque limits
    forces: np.ndarray  # (n_knots - 1, 2 * n_sites), model site order, zero when inactive
    site_positions: np.ndarray  # (n_knots, n_sites, 2)
    contact_mask: np.ndarray  # (n_knots, n_sites) bool
    schedule: ContactSchedule
    cost: float
    cost_history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    impulses: dict = field(default_factory=dict)  # impact knot -> stacked impulses

    @property
    def dt(self) -> float:
        return self.schedule.dt

    @property
    def n_knots(self) -> int:
        return self.q.shape[0]

    def states(self) -> np.ndarray:
        return np.hstack([self.q, self.v])


# ============================================
# DISCRETE HYBRID DYNAMICS
# ============================================


def clamp_controls(model: RobotModel, u: np.ndarray) -> np.ndarray:
    return np.clip(u, -model.torque_limits, model.torque_limits)


def step(
    model: RobotModel, schedule: ContactSchedule, k: int, x: np.ndarray, u: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """
    Advance one interval with semi-implicit Euler.

    Contact acceleration constraints are stabilized at the velocity level so
    pinned sites do not drift. If knot k+1 is an impact knot the plastic impact
    map is applied to the new state.

    Returns:
        (x_next, stacked contact forces on interval k, impulses at knot k+1 or None)
    """
    dt = schedule.dt
    n_q = model.n_q
    state = RobotState(q=x[:n_q], v=x[n_q:])
    active = schedule.active_at(k)
    contacts = ContactSet(active_sites=active)

    accel, forces = constrained_forward_dynamics(
        model, state, clamp_controls(model, u), contacts, velocity_gain=1.0 / dt
    )
    v_next = state.v + dt * accel
    q_next = state.q + dt * v_next

    impulses = None
    if (k + 1) in schedule.impact_knots:
        new_contacts = ContactSet(active_sites=schedule.active_at(k + 1))
        v_next, impulses = impulse_dynamics(model, RobotState(q=q_next, v=v_next), new_contacts)

    return np.concatenate([q_next, v_next]), forces, impulses


def rollout(model: RobotModel, schedule: ContactSchedule, controls: np.ndarray, x0: RobotState) -> np.ndarray:
    """
    Integrate the hybrid dynamics from x0 under a control sequence.

    Args:
        controls: (n_knots - 1, n_u) torques, clamped before integration

    Returns:
        (n_knots, n_q + n_v) state sequence
    """
    xs, _, _ = _simulate(model, schedule, controls, x0.as_vector())
    return xs


def _simulate(model: RobotModel, schedule: ContactSchedule, controls: np.ndarray, x0: np.ndarray):
    controls = np.asarray(controls, dtype=float).reshape(-1, model.n_u) if model.n_u else np.zeros((schedule.n_intervals, 0))
    if controls.shape[0] != schedule.n_intervals:
        raise DimensionError(
            f"Expected {schedule.n_intervals} control rows for {schedule.n_knots} knots, got {controls.shape[0]}"
        )

    xs = np.zeros((schedule.n_knots, x0.shape[0]))
    forces = []
    impulses = {}
    xs[0] = x0
    for k in range(schedule.n_intervals):
        xs[k + 1], f_k, imp = step(model, schedule, k, xs[k], controls[k])
        if not np.all(np.isfinite(xs[k + 1])):
            raise NumericError(f"Rollout produced non-finite state at knot {k + 1}")
        forces.append(f_k)
        if imp is not None:
            impulses[k + 1] = imp
    return xs, forces, impulses


def total_cost(
    model: RobotModel, schedule: ContactSchedule, costs: CostStack, xs: np.ndarray, us: np.ndarray, forces
) -> float:
    J = 0.0
    for k in range(schedule.n_intervals):
        r = costs.stage_residual(model, k, xs[k], us[k], schedule.active_at(k), forces[k])
        J += float(r @ r)
    r = costs.terminal_residual(model, xs[-1])
    return J + float(r @ r)


# ============================================
# DERIVATIVES
# ============================================


def _stage_function(model, schedule, costs, k, x, u):
    x_next, forces, _ = step(model, schedule, k, x, u)
    r = costs.stage_residual(model, k, x, u, schedule.active_at(k), forces)
    return np.concatenate([x_next, r])


def _stage_derivatives(model, schedule, costs, k, x, u, h):
    """Central finite differences of (x_next, r_k) with respect to x and u."""
    n_x, n_u = x.shape[0], u.shape[0]
    columns = []
    for i in range(n_x + n_u):
        dx = np.zeros(n_x)
        du = np.zeros(n_u)
        if i < n_x:
            dx[i] = h
        else:
            du[i - n_x] = h
        plus = _stage_function(model, schedule, costs, k, x + dx, u + du)
        minus = _stage_function(model, schedule, costs, k, x - dx, u - du)
        columns.append((plus - minus) / (2.0 * h))
    D = np.column_stack(columns)
    return D[:n_x, :n_x], D[:n_x, n_x:], D[n_x:, :n_x], D[n_x:, n_x:]


def _terminal_derivatives(model, costs, x, h):
    n_x = x.shape[0]
    columns = []
    for i in range(n_x):
        dx = np.zeros(n_x)
        dx[i] = h
        columns.append(
            (costs.terminal_residual(model, x + dx) - costs.terminal_residual(model, x - dx)) / (2.0 * h)
        )
    return np.column_stack(columns)


def _linearize(model, schedule, costs, xs, us, forces, opts):
    """Per-knot Gauss-Newton quadratic model of the cost and linear model of the dynamics."""
    N = schedule.n_intervals
    derivs = []
    for k in range(N):
        A, B, Rx, Ru = _stage_derivatives(model, schedule, costs, k, xs[k], us[k], opts.fd_step)
        r = costs.stage_residual(model, k, xs[k], us[k], schedule.active_at(k), forces[k])
        derivs.append((A, B, 2.0 * Rx.T @ r, 2.0 * Ru.T @ r, 2.0 * Rx.T @ Rx, 2.0 * Ru.T @ Ru, 2.0 * Ru.T @ Rx))
    Rf = _terminal_derivatives(model, costs, xs[-1], opts.fd_step)
    rf = costs.terminal_residual(model, xs[-1])
    return derivs, 2.0 * Rf.T @ rf, 2.0 * Rf.T @ Rf


# ============================================
# BACKWARD / FORWARD PASS
# ============================================


def _backward_pass(derivs, Vx_f, Vxx_f, mu):
    N = len(derivs)
    n_x = Vx_f.shape[0]
    n_u = derivs[0][1].shape[1]
    ks = np.zeros((N, n_u))
    Ks = np.zeros((N, n_u, n_x))
    Vx, Vxx = Vx_f, Vxx_f
    dV1, dV2 = 0.0, 0.0
    reg = mu * np.eye(n_x)

    for k in range(N - 1, -1, -1):
        A, B, lx, lu, lxx, luu, lux = derivs[k]
        Qx = lx + A.T @ Vx
        Qu = lu + B.T @ Vx
        Qxx = lxx + A.T @ Vxx @ A
        Quu = luu + B.T @ Vxx @ B
        Qux = lux + B.T @ Vxx @ A
        # regularized pair only shapes the gains; the value update uses the exact one
        Quu_reg = Quu + B.T @ reg @ B
        Qux_reg = Qux + B.T @ reg @ A

        try:
            chol = cho_factor(0.5 * (Quu_reg + Quu_reg.T))
        except LinAlgError:
            return None

        k_ff = -cho_solve(chol, Qu)
        K_fb = -cho_solve(chol, Qux_reg)
        ks[k] = k_ff
        Ks[k] = K_fb

        dV1 += float(k_ff @ Qu)
        dV2 += float(0.5 * k_ff @ Quu @ k_ff)
        Vx = Qx + K_fb.T @ Quu @ k_ff + K_fb.T @ Qu + Qux.T @ k_ff
        Vxx = Qxx + K_fb.T @ Quu @ K_fb + K_fb.T @ Qux + Qux.T @ K_fb
        Vxx = 0.5 * (Vxx + Vxx.T)

    return ks, Ks, dV1, dV2


def _forward_pass(model, schedule, costs, xs, us, ks, Ks, alpha):
    N = schedule.n_intervals
    xs_new = np.zeros_like(xs)
    us_new = np.zeros_like(us)
    forces = []
    impulses = {}
    xs_new[0] = xs[0]
    for k in range(N):
        us_new[k] = us[k] + alpha * ks[k] + Ks[k] @ (xs_new[k] - xs[k])
        xs_new[k + 1], f_k, imp = step(model, schedule, k, xs_new[k], us_new[k])
        if not np.all(np.isfinite(xs_new[k + 1])):
            raise NumericError(f"Forward pass diverged at knot {k + 1}")
        forces.append(f_k)
        if imp is not None:
            impulses[k + 1] = imp
    J = total_cost(model, schedule, costs, xs_new, us_new, forces)
    return xs_new, us_new, forces, impulses, J


# ============================================
# SOLVE
# ============================================


def solve(
    model: RobotModel,
    schedule: ContactSchedule,
    costs: CostStack,
    x0: RobotState,
    opts: Optional[SolverOptions] = None,
    us_init: Optional[np.ndarray] = None,
) -> OptimalTrajectory:
    """
    Solve the trajectory optimization problem with iLQR.

    Args:
        model: Robot model
        schedule: Contact schedule (fixes the knot grid)
        costs: Cost stack on the same knot grid
        x0: Initial state
        opts: Solver options; defaults when None
        us_init: Warm-start controls (n_knots - 1, n_u); zeros when None

    Returns:
        OptimalTrajectory. converged=False marks the best iterate of a run that
        hit max_iters or stalled.

    Raises:
        HessianNotPositiveDefiniteError: If the backward pass fails at maximum regularization
    """
    opts = opts or SolverOptions()
    N = schedule.n_intervals
    if N < 1:
        raise DimensionError("A solve needs at least two knots")
    if costs.n_knots != schedule.n_knots:
        raise DimensionError(f"Cost stack has {costs.n_knots} knots, schedule has {schedule.n_knots}")

    us = np.zeros((N, model.n_u)) if us_init is None else np.array(us_init, dtype=float).reshape(N, model.n_u)
    xs, forces, impulses = _simulate(model, schedule, us, x0.as_vector())
    J = total_cost(model, schedule, costs, xs, us, forces)
    history = [J]
    mu = opts.reg_init
    converged = False
    iterations = 0

    for _ in range(opts.max_iters):
        derivs, Vx_f, Vxx_f = _linearize(model, schedule, costs, xs, us, forces, opts)

        result = _backward_pass(derivs, Vx_f, Vxx_f, mu)
        while result is None:
            mu *= opts.reg_increase
            if mu > opts.reg_max:
                raise HessianNotPositiveDefiniteError(
                    f"Backward pass Hessian not positive definite at regularization {opts.reg_max:g}"
                )
            result = _backward_pass(derivs, Vx_f, Vxx_f, mu)
        ks, Ks, dV1, dV2 = result

        expected = -(dV1 + dV2)
        if expected < opts.tol * max(abs(J), 1e-12):
            converged = True
            break

        accepted = False
        for alpha in opts.line_search:
            try:
                xs_new, us_new, forces_new, impulses_new, J_new = _forward_pass(
                    model, schedule, costs, xs, us, ks, Ks, alpha
                )
            except NumericError as e:
                logger.debug(f"Line search step alpha={alpha:g} rejected: {e}")
                continue
            if J_new < J:
                accepted = True
                break

        if not accepted:
            if mu >= opts.reg_max:
                logger.warning(f"Line search failed at maximum regularization after {iterations} iterations")
                break
            mu = min(mu * opts.reg_increase, opts.reg_max)
            continue

        improvement = (J - J_new) / max(abs(J), 1e-12)
        xs, us, forces, impulses, J = xs_new, us_new, forces_new, impulses_new, J_new
        history.append(J)
        iterations += 1
        mu = max(mu / opts.reg_decrease, opts.reg_min)

        if improvement < opts.tol:
            converged = True
            break

    if not converged:
        logger.warning(f"iLQR did not converge in {opts.max_iters} iterations (cost {J:.6g})")
    else:
        logger.debug(f"iLQR converged after {iterations} iterations (cost {J:.6g})")

    return _assemble(model, schedule, xs, us, forces, impulses, J, history, iterations, converged)


def _assemble(model, schedule, xs, us, forces, impulses, J, history, iterations, converged) -> OptimalTrajectory:
    names = model.site_names
    n_knots = schedule.n_knots
    stacked = np.zeros((schedule.n_intervals, CONTACT_DIM * len(names)))
    mask = np.zeros((n_knots, len(names)), dtype=bool)

    for k in range(n_knots):
        active = schedule.active_at(k)
        for i, name in enumerate(names):
            if name in active:
                mask[k, i] = True
                if k < schedule.n_intervals:
                    j = active.index(name)
                    stacked[k, CONTACT_DIM * i:CONTACT_DIM * (i + 1)] = forces[k][CONTACT_DIM * j:CONTACT_DIM * (j + 1)]

    positions = np.array([site_positions(model, x[:model.n_q]) for x in xs]) if names else np.zeros((n_knots, 0, 2))
    return OptimalTrajectory(
        q=xs[:, :model.n_q].copy(),
        v=xs[:, model.n_q:].copy(),
        u=clamp_controls(model, us),
        forces=stacked,
        site_positions=positions,
        contact_mask=mask,
        schedule=schedule,
        cost=J,
        cost_history=history,
        iterations=iterations,
        converged=converged,
        impulses=impulses,
    )
