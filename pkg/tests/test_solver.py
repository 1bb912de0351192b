# tests/test_solver.py - iLQR against closed-form oracles, schedules and cost stacks
import dataclasses

import numpy as np
import pytest

from toimit.dynamics import CONTACT_DIM, RobotState
from toimit.errors import ConfigError, DimensionError
from toimit.schemas import CostWeights, SolverOptions
from toimit.solver import ContactSchedule, CostStack, Feature, check_feasibility, rollout, solve
from toimit.solver.ddp import _backward_pass, _linearize, _simulate
from toimit.tasks import sample_task, solve_task, with_parameters


def _lqr(A, B, Q, R, Qf, N):
    """Finite-horizon discrete Riccati recursion; returns gains K_k with u_k = -K_k x_k and P_0."""
    P = Qf
    gains = []
    for _ in range(N):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    return gains[::-1], P


# ============================================
# ORACLES
# ============================================


def test_double_integrator_matches_riccati(double_integrator):
    dt, N = 0.05, 20
    schedule = ContactSchedule.build([(N * dt, ())], dt)
    q_w, v_w, qf_w, vf_w, r = 1.0, 0.1, 10.0, 1.0, 0.1

    costs = CostStack.empty(double_integrator, schedule.n_knots, CostWeights(control=r))
    costs.add_term(Feature("q", index=0), 0.0, [q_w] * N + [qf_w])
    costs.add_term(Feature("v", index=0), 0.0, [v_w] * N + [vf_w])

    x0 = RobotState(q=[1.0], v=[-0.5])
    traj = solve(double_integrator, schedule, costs, x0)

    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[dt * dt], [dt]])
    gains, P0 = _lqr(A, B, np.diag([q_w, v_w]), np.array([[r]]), np.diag([qf_w, vf_w]), N)

    x = x0.as_vector()
    xs, us = [x], []
    for K in gains:
        u = -K @ x
        x = A @ x + B @ u
        us.append(u)
        xs.append(x)

    assert traj.converged
    np.testing.assert_allclose(traj.u, np.array(us), atol=1e-6)
    np.testing.assert_allclose(traj.states(), np.array(xs), atol=1e-6)
    assert traj.cost == pytest.approx(float(x0.as_vector() @ P0 @ x0.as_vector()), rel=1e-6)


def _swing_up(pendulum, horizon=2.0, dt=0.05):
    """Upright terminal target, control cost only along the way."""
    schedule = ContactSchedule.build([(horizon, ())], dt)
    N = schedule.n_intervals
    costs = CostStack.empty(pendulum, schedule.n_knots, CostWeights(control=1e-3))
    costs.add_term(Feature("q", index=0), np.pi, [0.0] * N + [1e4])
    costs.add_term(Feature("v", index=0), 0.0, [0.0] * N + [1e2])
    return schedule, costs


def test_pendulum_swing_up_respects_torque_limit(pendulum):
    schedule, costs = _swing_up(pendulum)
    traj = solve(pendulum, schedule, costs, RobotState(q=[0.0], v=[0.0]), SolverOptions(max_iters=300))

    limit = pendulum.torque_limits[0]
    assert abs(traj.q[-1, 0] - np.pi) < 1e-2
    assert np.max(np.abs(traj.u)) <= limit
    assert np.max(np.abs(traj.u)) == pytest.approx(limit, abs=1e-6)
    assert all(b <= a for a, b in zip(traj.cost_history, traj.cost_history[1:]))

    replay = rollout(pendulum, schedule, traj.u, RobotState(q=[0.0], v=[0.0]))
    np.testing.assert_allclose(replay, traj.states(), atol=1e-6)


def _regulator(model, dt=0.05, N=20):
    schedule = ContactSchedule.build([(N * dt, ())], dt)
    costs = CostStack.empty(model, schedule.n_knots, CostWeights(control=0.1))
    costs.add_term(Feature("q", index=0), 0.0, [1.0] * N + [10.0])
    costs.add_term(Feature("v", index=0), 0.0, [0.1] * N + [1.0])
    return schedule, costs


def test_backward_pass_survives_growing_regularization(pendulum):
    schedule, costs = _swing_up(pendulum)
    us = np.zeros((schedule.n_intervals, pendulum.n_u))
    xs, forces, _ = _simulate(pendulum, schedule, us, np.zeros(2))
    derivs, Vx_f, Vxx_f = _linearize(pendulum, schedule, costs, xs, us, forces, SolverOptions())
    for mu in (1e-6, 1e-1, 10.0, 1e3, 1e6):
        assert _backward_pass(derivs, Vx_f, Vxx_f, mu) is not None, mu


def test_warm_started_resolve_converges_immediately(double_integrator):
    schedule, costs = _regulator(double_integrator)
    x0 = RobotState(q=[1.0], v=[-0.5])
    first = solve(double_integrator, schedule, costs, x0)
    again = solve(double_integrator, schedule, costs, x0, us_init=first.u)
    assert again.converged
    assert again.iterations <= 2
    np.testing.assert_allclose(again.u, first.u, atol=1e-6)


def test_zero_iterations_returns_the_passive_rollout(pendulum):
    schedule, costs = _swing_up(pendulum, horizon=1.0)
    x0 = RobotState(q=[0.3], v=[0.0])
    traj = solve(pendulum, schedule, costs, x0, SolverOptions(max_iters=0))
    assert traj.iterations == 0 and not traj.converged
    assert traj.cost_history == [traj.cost]
    np.testing.assert_array_equal(traj.u, 0.0)
    passive = rollout(pendulum, schedule, np.zeros((schedule.n_intervals, pendulum.n_u)), x0)
    np.testing.assert_allclose(traj.states(), passive, atol=1e-12)


def test_feasibility_flags_scaled_torques(double_integrator):
    schedule, costs = _regulator(double_integrator)
    traj = solve(double_integrator, schedule, costs, RobotState(q=[1.0], v=[0.0]))
    assert check_feasibility(traj, double_integrator, costs).passed

    limit = double_integrator.torque_limits[0]
    scaled = dataclasses.replace(traj, u=np.full_like(traj.u, 10.0 * limit))
    report = check_feasibility(scaled, double_integrator, costs)
    assert not report.passed
    assert report.max_torque_limit_violation == pytest.approx(9.0 * limit)
    assert any("torque limit" in reason for reason in report.reasons)


def test_free_fall_follows_semi_implicit_euler(biped):
    dt, N = 0.01, 30
    schedule = ContactSchedule.build([(N * dt, ())], dt)
    start = biped.default_state()
    v0 = np.zeros(biped.n_v)
    v0[0], v0[1] = 0.3, 1.0
    xs = rollout(biped, schedule, np.zeros((N, biped.n_u)), RobotState(q=start.q, v=v0))

    k = np.arange(N + 1)
    g = biped.gravity
    np.testing.assert_allclose(xs[:, 0], start.q[0] + 0.3 * dt * k, atol=1e-6)
    np.testing.assert_allclose(xs[:, 1], start.q[1] + 1.0 * dt * k - g * dt * dt * k * (k + 1) / 2, atol=1e-6)
    joints = xs[:, 3:biped.n_q]
    np.testing.assert_allclose(joints, np.broadcast_to(start.q[3:], joints.shape), atol=1e-6)


def test_rollout_rejects_wrong_control_count(double_integrator):
    schedule = ContactSchedule.build([(0.5, ())], 0.05)
    with pytest.raises(DimensionError):
        rollout(double_integrator, schedule, np.zeros((3, 1)), RobotState(q=[0.0], v=[0.0]))


def test_solve_rejects_mismatched_cost_grid(double_integrator):
    schedule = ContactSchedule.build([(0.5, ())], 0.05)
    costs = CostStack.empty(double_integrator, schedule.n_knots + 1)
    with pytest.raises(DimensionError):
        solve(double_integrator, schedule, costs, RobotState(q=[0.0], v=[0.0]))


# ============================================
# SCHEDULES
# ============================================


def test_schedule_knots_and_impacts():
    both = ("left_foot", "right_foot")
    schedule = ContactSchedule.build([(0.1, both), (0.2, ("left_foot",)), (0.1, both)], 0.05)
    assert schedule.n_intervals == 8
    assert schedule.n_knots == 9
    assert schedule.boundaries() == [0, 2, 6]
    assert schedule.impact_knots == (6,)
    assert schedule.active_at(3) == ("left_foot",)
    assert schedule.active_at(8) == both


def test_schedule_digest_tracks_content():
    a = ContactSchedule.build([(0.2, ("hand",))], 0.05)
    b = ContactSchedule.build([(0.2, ("hand",))], 0.05)
    c = ContactSchedule.build([(0.25, ("hand",))], 0.05)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert ContactSchedule.from_dict(a.to_dict()) == a


@pytest.mark.parametrize("phases,dt", [([(0.13, ())], 0.05), ([(0.0, ())], 0.05), ([], 0.05), ([(0.1, ())], 0.0)])
def test_schedule_rejects_bad_grids(phases, dt):
    with pytest.raises(ConfigError):
        ContactSchedule.build(phases, dt)


# ============================================
# COSTS
# ============================================


def test_cost_stack_validation(double_integrator):
    with pytest.raises(ConfigError):
        Feature("torque")
    costs = CostStack.empty(double_integrator, 5)
    with pytest.raises(ConfigError):
        costs.add_term(Feature("q", index=0), 0.0, -1.0)
    with pytest.raises(ConfigError):
        CostStack(features=[], targets=np.zeros((5, 0)), weights=np.zeros((5, 0)), control_weight=[0.0])


def test_terminal_residual_ignores_force_features(double_integrator):
    costs = CostStack.empty(double_integrator, 3)
    costs.add_term(Feature("force_n", name="cart"), 5.0, 1.0)
    costs.add_term(Feature("q", index=0), 2.0, 1.0)
    r = costs.terminal_residual(double_integrator, np.array([0.0, 0.0]))
    assert r[0] == 0.0
    assert r[1] == pytest.approx(-2.0)


def test_stage_residual_squares_to_weighted_cost(double_integrator):
    costs = CostStack.empty(double_integrator, 3, CostWeights(control=0.5))
    costs.add_term(Feature("q", index=0), 1.0, 4.0)
    r = costs.stage_residual(double_integrator, 0, np.array([3.0, 0.0]), np.array([2.0]), (), np.zeros(0))
    assert float(r @ r) == pytest.approx(4.0 * 2.0 ** 2 + 0.5 * 2.0 ** 2)


# ============================================
# TASK SOLVES
# ============================================


@pytest.mark.slow
def test_press_solve_passes_gates():
    problem, traj, report = solve_task(sample_task("press", 0))
    assert traj.converged
    assert report.passed, report.reasons
    assert report.min_normal_force >= -1e-6
    assert check_feasibility(traj, problem.model, problem.costs).passed


@pytest.mark.slow
def test_walk_solve_passes_gates():
    problem, traj, report = solve_task(sample_task("walk", 0))
    assert report.passed, report.reasons
    assert report.max_impact_velocity < 1e-8
    assert report.max_dynamics_defect < 1e-6


@pytest.mark.slow
def test_press_tracks_commanded_normal_force():
    problem, traj, report = solve_task(with_parameters(sample_task("press", 0), normal_force=10.0))
    assert report.passed, report.reasons
    hand = problem.model.site_names.index("hand")
    pressing = traj.contact_mask[:-1, hand]
    normal = traj.forces[pressing, CONTACT_DIM * hand + 1]
    assert normal.size > 0
    assert abs(float(np.mean(normal)) - 10.0) < 1.0
