# tests/test_dynamics.py - rigid-body algorithms and the validate property suite
import numpy as np
import pytest

from toimit.dynamics import (
    ContactSet,
    RobotModel,
    RobotState,
    bias_forces,
    constrained_forward_dynamics,
    contact_jacobian,
    impulse_dynamics,
    inverse_dynamics,
    mass_matrix,
    site_positions,
    total_energy,
)
from toimit.dynamics.validation import (
    check_energy,
    check_mass_matrix,
    check_site_jacobians,
    random_state,
    validate_model,
)
from toimit.errors import DimensionError, NumericError, UnknownSiteError
from toimit.schemas import RobotModelDoc
from toimit.solver import static_hold_controls

FEET = ("left_foot", "right_foot")


# ============================================
# MASS MATRIX AND BIAS
# ============================================


def test_pendulum_mass_matrix_is_rod_inertia_about_pivot(pendulum):
    M = mass_matrix(pendulum, RobotState(q=[0.7], v=[0.0]))
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_pendulum_gravity_torque(pendulum):
    C = bias_forces(pendulum, RobotState(q=[np.pi / 2], v=[0.0]))
    assert C[0] == pytest.approx(0.5 * 9.81, abs=1e-9)


def test_pendulum_tip_position(pendulum):
    tip = site_positions(pendulum, np.array([np.pi / 2]))[0]
    np.testing.assert_allclose(tip, [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("fixture", ["biped", "arm", "double_integrator"])
def test_mass_matrix_matches_rnea_columns(fixture, request, rng):
    model = request.getfixturevalue(fixture)
    states = [random_state(model, rng) for _ in range(20)]
    check = check_mass_matrix(model, states)
    assert check.passed, check
    assert check.value <= 1e-9


def test_site_jacobians_match_finite_differences(biped, rng):
    states = [random_state(biped, rng) for _ in range(20)]
    check = check_site_jacobians(biped, states)
    assert check.passed
    assert check.value <= 1e-5


def test_inverse_dynamics_inverts_free_forward_dynamics(arm, rng):
    state = random_state(arm, rng)
    torque = rng.uniform(-5.0, 5.0, size=arm.n_u)
    accel, forces = constrained_forward_dynamics(arm, state, torque)
    assert forces.size == 0
    np.testing.assert_allclose(inverse_dynamics(arm, state, accel), arm.B @ torque, atol=1e-9)


# ============================================
# CONTACT
# ============================================


def test_constrained_dynamics_holds_feet_still(biped):
    state = biped.default_state()
    accel, forces = constrained_forward_dynamics(biped, state, np.zeros(biped.n_u), ContactSet(FEET))
    J, J_dot_v = contact_jacobian(biped, state, FEET)
    np.testing.assert_allclose(J @ accel + J_dot_v, 0.0, atol=1e-8)
    assert forces.shape == (4,)
    # normal components hold the robot up
    assert forces[1] + forces[3] > 0.0


def test_constrained_inverse_dynamics_closes_the_loop(biped):
    state = biped.default_state()
    torque = np.full(biped.n_u, 5.0)
    accel, forces = constrained_forward_dynamics(biped, state, torque, ContactSet(FEET))
    residual = inverse_dynamics(biped, state, accel, ContactSet(FEET, forces=forces))
    np.testing.assert_allclose(residual, biped.B @ torque, atol=1e-7)


def _point_mass(mass: float = 2.0) -> RobotModel:
    doc = RobotModelDoc(
        name="point-mass",
        bodies=[{"name": "ball", "mass": mass, "inertia": 0.01}],
        joints=[{"name": "base", "type": "floating-planar", "child": "ball"}],
        sites=[{"name": "contact", "body": "ball"}],
    )
    return RobotModel.from_doc(doc)


def test_resting_point_mass_carries_its_weight():
    ball = _point_mass(2.0)
    state = RobotState(q=np.zeros(3), v=np.zeros(3))
    accel, forces = constrained_forward_dynamics(ball, state, np.zeros(0), ContactSet(("contact",)))
    np.testing.assert_allclose(accel, 0.0, atol=1e-10)
    np.testing.assert_allclose(forces, [0.0, 2.0 * ball.gravity], atol=1e-9)


def test_falling_point_mass_stops_on_impact():
    ball = _point_mass(2.0)
    v_plus, impulses = impulse_dynamics(ball, RobotState(q=np.zeros(3), v=[0.0, -1.0, 0.0]), ContactSet(("contact",)))
    np.testing.assert_allclose(v_plus, 0.0, atol=1e-12)
    np.testing.assert_allclose(impulses, [0.0, 2.0], atol=1e-12)


def test_standing_biped_needs_no_base_wrench(biped):
    state = biped.default_state()
    u = static_hold_controls(biped, state, FEET)
    accel, forces = constrained_forward_dynamics(biped, state, u, ContactSet(FEET))
    np.testing.assert_allclose(accel, 0.0, atol=1e-8)
    assert forces[1] + forces[3] == pytest.approx(biped.total_mass * biped.gravity, rel=1e-9)

    residual = inverse_dynamics(biped, state, np.zeros(biped.n_v), ContactSet(FEET, forces=forces))
    np.testing.assert_allclose(residual[:3], 0.0, atol=1e-8)
    np.testing.assert_allclose(residual[list(biped.actuated)], u, atol=1e-8)


def test_impulse_stops_landing_feet(biped):
    rest = biped.default_state()
    v = np.zeros(biped.n_v)
    v[1] = -0.5
    state = RobotState(q=rest.q, v=v)
    v_plus, impulses = impulse_dynamics(biped, state, ContactSet(FEET))
    J, _ = contact_jacobian(biped, state, FEET)
    np.testing.assert_allclose(J @ v_plus, 0.0, atol=1e-8)
    assert impulses[1] > 0.0 and impulses[3] > 0.0
    assert total_energy(biped, RobotState(q=rest.q, v=v_plus)) <= total_energy(biped, state)


def test_impacts_never_add_energy(biped, rng):
    for _ in range(100):
        state = random_state(biped, rng)
        v_plus, _ = impulse_dynamics(biped, state, ContactSet(FEET))
        assert total_energy(biped, RobotState(q=state.q, v=v_plus)) <= total_energy(biped, state) + 1e-9


def test_impact_is_a_no_op_when_feet_are_already_still(biped, rng):
    state = random_state(biped, rng)
    J, _ = contact_jacobian(biped, state, FEET)
    null_space = np.linalg.svd(J)[2][J.shape[0]:].T
    still = RobotState(q=state.q, v=null_space @ rng.normal(size=null_space.shape[1]))
    v_plus, impulses = impulse_dynamics(biped, still, ContactSet(FEET))
    np.testing.assert_allclose(v_plus, still.v, atol=1e-10)
    np.testing.assert_allclose(impulses, 0.0, atol=1e-10)


def test_impulse_needs_contacts(biped):
    with pytest.raises(ValueError):
        impulse_dynamics(biped, biped.default_state(), ContactSet())


# ============================================
# ERRORS
# ============================================


def test_wrong_state_dimension_is_rejected(biped):
    with pytest.raises(DimensionError):
        mass_matrix(biped, RobotState(q=np.zeros(3), v=np.zeros(3)))


def test_wrong_torque_dimension_is_rejected(biped):
    with pytest.raises(DimensionError):
        constrained_forward_dynamics(biped, biped.default_state(), np.zeros(2))


def test_non_finite_state_is_rejected():
    with pytest.raises(NumericError):
        RobotState(q=[np.nan], v=[0.0])


def test_unknown_site_is_rejected(pendulum):
    with pytest.raises(UnknownSiteError):
        pendulum.site("hand")


def test_contact_forces_must_match_sites():
    with pytest.raises(DimensionError):
        ContactSet(FEET, forces=np.zeros(3))


# ============================================
# ENERGY AND VALIDATION SUITE
# ============================================


def test_pendulum_energy_is_conserved(pendulum):
    check = check_energy(pendulum, RobotState(q=[1.0], v=[0.0]), dt=1e-3, duration=10.0)
    assert check.passed, check
    assert check.value <= 1e-3


def test_validate_passes_on_pendulum(pendulum):
    report = validate_model(pendulum, seed=0, n_states=20)
    assert report.passed, [c for c in report.checks if not c.passed]
    assert len(report.checks) == 4


def test_validate_catches_flipped_inertia(pendulum):
    report = validate_model(pendulum.with_flipped_inertia(), seed=0, n_states=20, duration=1.0)
    assert not report.passed
    failed = [c.name for c in report.checks if not c.passed]
    assert "spatial inertia positive definite" in failed


def test_scaled_model_keeps_identity(biped):
    heavier = biped.scaled(mass_scale=1.1, gravity_scale=0.9)
    assert heavier.total_mass == pytest.approx(biped.total_mass * 1.1)
    assert heavier.gravity == pytest.approx(biped.gravity * 0.9)
    assert heavier.hash == biped.hash
