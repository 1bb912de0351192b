# toimit/dynamics/validation.py - property checks run by `toimit validate`
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from toimit.dynamics.algorithms import mass_matrix, rnea, site_kinematics, site_positions, simulate_passive, total_energy
from toimit.dynamics.robot import RobotModel, RobotState
from toimit.errors import ToimitError


logger = logging.getLogger(__name__)

MASS_MATRIX_TOL = 1e-9
JACOBIAN_TOL = 1e-5
ENERGY_DRIFT_TOL = 1e-3  # relative
FD_STEP = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class ValidationReport:
    model: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def random_state(model: RobotModel, rng: np.random.Generator) -> RobotState:
    """A state with joints inside their limits and a perturbed base."""
    q = model.default_state().q.copy()
    actuated = list(model.actuated)
    q[actuated] = rng.uniform(model.joint_lower, model.joint_upper)
    if model.floating:
        q[:3] += rng.uniform(-0.5, 0.5, size=3)
    return RobotState(q=q, v=rng.normal(size=model.n_v))


def check_spatial_inertias(model: RobotModel) -> CheckResult:
    smallest = min(float(np.min(np.linalg.eigvalsh(np.asarray(I)))) for I in model.inertias)
    return CheckResult("spatial inertia positive definite", smallest > 0.0, smallest, 0.0)


def check_mass_matrix(model: RobotModel, states: List[RobotState]) -> CheckResult:
    """CRBA against unit-acceleration RNEA columns, plus symmetry and definiteness."""
    worst = 0.0
    for state in states:
        M = mass_matrix(model, state)
        columns = np.column_stack(
            [rnea(model, state.q, np.zeros(model.n_v), e, with_gravity=False) for e in np.eye(model.n_v)]
        )
        worst = max(worst, float(np.max(np.abs(M - columns))), float(np.max(np.abs(M - M.T))))
        try:
            cholesky(M)
        except LinAlgError:
            return CheckResult("mass matrix vs RNEA columns", False, worst, MASS_MATRIX_TOL, "not positive definite")
    return CheckResult("mass matrix vs RNEA columns", worst <= MASS_MATRIX_TOL, worst, MASS_MATRIX_TOL)


def check_site_jacobians(model: RobotModel, states: List[RobotState]) -> CheckResult:
    """Analytic site velocity J v against central differences of site positions along v."""
    worst = 0.0
    for state in states:
        plus = site_positions(model, state.q + FD_STEP * state.v)
        minus = site_positions(model, state.q - FD_STEP * state.v)
        numeric = (plus - minus) / (2 * FD_STEP)
        for i, name in enumerate(model.site_names):
            _, velocity, J = site_kinematics(model, state, name)
            worst = max(worst, float(np.max(np.abs(J @ state.v - numeric[i]))), float(np.max(np.abs(velocity - numeric[i]))))
    return CheckResult("site Jacobians vs finite differences", worst <= JACOBIAN_TOL, worst, JACOBIAN_TOL)


def check_energy(model: RobotModel, state: RobotState, dt: float, duration: float) -> CheckResult:
    trajectory = simulate_passive(model, state, dt, duration)
    energies = [total_energy(model, RobotState.from_vector(x, model.n_q)) for x in trajectory[:: max(1, len(trajectory) // 50)]]
    energies.append(total_energy(model, RobotState.from_vector(trajectory[-1], model.n_q)))
    scale = max(abs(energies[0]), 1.0)
    drift = max(abs(e - energies[0]) for e in energies) / scale
    return CheckResult(
        f"energy drift over {duration:g} s", drift <= ENERGY_DRIFT_TOL, drift, ENERGY_DRIFT_TOL, f"dt {dt:g}"
    )


def _guarded(name: str, tolerance: float, fn: Callable[[], CheckResult]) -> CheckResult:
    try:
        return fn()
    except (ToimitError, LinAlgError, FloatingPointError) as e:
        return CheckResult(name, False, float("nan"), tolerance, f"{type(e).__name__}: {e}")


def validate_model(
    model: RobotModel,
    seed: int = 0,
    n_states: int = 100,
    dt: float = 1e-3,
    duration: Optional[float] = None,
) -> ValidationReport:
    """
    Run the dynamics property suite on a model.

    The passive energy check lasts 10 s for models with at most two dofs and
    1 s otherwise unless `duration` is given.
    """
    rng = np.random.default_rng(seed)
    states = [random_state(model, rng) for _ in range(n_states)]
    if duration is None:
        duration = 10.0 if model.n_v <= 2 else 1.0
    start = random_state(model, rng)

    report = ValidationReport(model=model.name)
    report.checks.append(check_spatial_inertias(model))
    report.checks.append(
        _guarded("mass matrix vs RNEA columns", MASS_MATRIX_TOL, lambda: check_mass_matrix(model, states))
    )
    report.checks.append(
        _guarded("site Jacobians vs finite differences", JACOBIAN_TOL, lambda: check_site_jacobians(model, states))
    )
    report.checks.append(
        _guarded(f"energy drift over {duration:g} s", ENERGY_DRIFT_TOL, lambda: check_energy(model, start, dt, duration))
    )
    for check in report.checks:
        log = logger.info if check.passed else logger.warning
        log(f"{model.name}: {check.name}: {'ok' if check.passed else 'FAILED'} ({check.value:.3g} vs {check.tolerance:g})")
    return report
