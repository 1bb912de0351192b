# tests/conftest.py - shared fixtures: models, a temporary run registry, synthetic references
import numpy as np
import pytest

from toimit.config import settings
from toimit.dataset import DatasetRecord
from toimit.dynamics import RobotState, inverse_dynamics, site_positions
from toimit.schemas import FeasibilityReport, TaskParameters, TaskSpec
from toimit.solver import ContactSchedule
from toimit.tasks import build_model


@pytest.fixture(autouse=True)
def isolated_registry(tmp_path, monkeypatch):
    """Every test writes runs into its own SQLite registry."""
    url = f"sqlite:///{tmp_path / 'registry.db'}"
    monkeypatch.setenv("TOIMIT_REGISTRY_URL", url)
    monkeypatch.setattr(settings, "registry_url", url)
    return url


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def pendulum():
    return build_model("pendulum")


@pytest.fixture
def double_integrator():
    return build_model("double-integrator")


@pytest.fixture
def biped():
    return build_model("planar-biped-7dof")


@pytest.fixture
def arm():
    return build_model("planar-arm-3dof")


def make_pendulum_record(amplitude: float = 0.3, duration: float = 0.9, dt: float = 0.02) -> DatasetRecord:
    """
    A smooth pendulum swing q(t) = A sin(pi t / T) with inverse-dynamics torques.

    Stored under a press task spec (approach + press durations = T) so the
    environment has a fixed-base, contact-free reference to track.
    """
    model = build_model("pendulum")
    t = np.arange(int(round(duration / dt)) + 1) * dt
    w = np.pi / duration
    q = (amplitude * np.sin(w * t))[:, None]
    v = (amplitude * w * np.cos(w * t))[:, None]
    a = -(amplitude * w * w * np.sin(w * t))[:, None]
    u = np.array([
        inverse_dynamics(model, RobotState(q=q[k], v=v[k]), a[k]) for k in range(len(t))
    ])
    u = np.clip(u, -model.torque_limits, model.torque_limits)
    sites = np.array([site_positions(model, q[k]) for k in range(len(t))])

    task = TaskSpec(
        name="press",
        model_id="pendulum",
        horizon=duration,
        dt=dt,
        parameters=TaskParameters(approach_duration=0.3, press_duration=round(duration - 0.3, 9)),
        seed=0,
    )
    schedule = ContactSchedule.build([(duration, ())], dt)
    return DatasetRecord(
        task=task,
        model_hash=model.hash,
        dt=dt,
        schedule_digest=schedule.digest(),
        schedule=schedule.to_dict(),
        feasibility=FeasibilityReport(),
        site_names=tuple(model.site_names),
        floating=False,
        converged=True,
        cost=0.0,
        t=t,
        q=q,
        v=v,
        u=u,
        forces=np.zeros((len(t), 2)),
        sites=sites,
        contact_mask=np.zeros((len(t), 1), dtype=bool),
    )


@pytest.fixture
def pendulum_record():
    return make_pendulum_record()
