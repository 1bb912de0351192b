# toimit/dynamics/robot.py - immutable robot model, state and contact set
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from toimit import schemas
from toimit.dynamics.spatial import mcI
from toimit.errors import ConfigError, DimensionError, NumericError, UnknownSiteError


CONTACT_DIM = 2  # (Fx, Fz) per point contact


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dof:
    """One scalar degree of freedom of the kinematic tree, in topological order."""
    name: str
    kind: str  # "revolute" or "prismatic"
    parent: int  # -1 for the world
    offset: Tuple[float, float]
    axis: Tuple[float, float]
    body: Optional[int]  # index into RobotModel.bodies, None for virtual base links
    actuated: bool


@dataclass(frozen=True)
class Body:
    name: str
    mass: float
    com: Tuple[float, float]
    inertia: float
    dof: int  # the dof whose link frame carries this body


@dataclass(frozen=True)
class Site:
    name: str
    body: int
    dof: int
    offset: Tuple[float, float]


@dataclass(frozen=True, eq=False)
class RobotModel:
    """
    Planar kinematic tree with inertial, limit and contact-site data.

    Built once from a RobotModelDoc and never mutated; safe to share between
    worker threads and processes.
    """
    name: str
    gravity: float
    dofs: Tuple[Dof, ...]
    bodies: Tuple[Body, ...]
    sites: Dict[str, Site]
    inertias: np.ndarray  # (n_v, 3, 3) spatial inertia of each link frame
    floating: bool
    actuated: Tuple[int, ...]
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    torque_limits: np.ndarray
    default_joint_pos: np.ndarray
    nominal_base: Optional[Tuple[float, float, float]]
    hash: str
    B: np.ndarray = field(repr=False)

    # ============================================
    # DIMENSIONS
    # ============================================

    @property
    def n_q(self) -> int:
        return len(self.dofs)

    @property
    def n_v(self) -> int:
        return len(self.dofs)

    @property
    def n_u(self) -> int:
        return len(self.actuated)

    @property
    def n_base(self) -> int:
        return 3 if self.floating else 0

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    @property
    def site_names(self) -> Tuple[str, ...]:
        return tuple(self.sites)

    def site(self, name: str) -> Site:
        try:
            return self.sites[name]
        except KeyError:
            raise UnknownSiteError(f"Unknown site '{name}'. Model '{self.name}' has {list(self.sites)}") from None

    def default_state(self) -> "RobotState":
        """Nominal pose at rest: nominal base (if floating) plus default joint positions."""
        q = np.zeros(self.n_q)
        if self.floating and self.nominal_base is not None:
            q[:3] = self.nominal_base
        q[list(self.actuated)] = self.default_joint_pos
        return RobotState(q=q, v=np.zeros(self.n_v))

    # ============================================
    # DERIVED MODELS
    # ============================================

    def scaled(self, mass_scale: float = 1.0, gravity_scale: float = 1.0) -> "RobotModel":
        """Copy with every mass and inertia scaled, and gravity scaled (domain randomization)."""
        bodies = tuple(
            dataclasses.replace(b, mass=b.mass * mass_scale, inertia=b.inertia * mass_scale) for b in self.bodies
        )
        return dataclasses.replace(
            self,
            bodies=bodies,
            inertias=_frozen(np.asarray(self.inertias) * mass_scale),
            gravity=self.gravity * gravity_scale,
        )

    def with_flipped_inertia(self, body_index: int = 0) -> "RobotModel":
        """Copy with the sign of one body's rotational inertia flipped; used to check the validators."""
        body = self.bodies[body_index]
        inertias = np.array(self.inertias)
        inertias[body.dof] = mcI(body.mass, body.com, -body.inertia)
        bodies = list(self.bodies)
        bodies[body_index] = dataclasses.replace(body, inertia=-body.inertia)
        return dataclasses.replace(self, bodies=tuple(bodies), inertias=_frozen(inertias), hash=self.hash + "-faulty")

    # ============================================
    # CONSTRUCTION
    # ============================================

    @classmethod
    def from_doc(cls, doc: schemas.RobotModelDoc) -> "RobotModel":
        body_index = {b.name: i for i, b in enumerate(doc.bodies)}
        roots = [j for j in doc.joints if j.parent is None]
        floating = any(j.type == "floating-planar" for j in doc.joints)
        if floating and len(roots) != 1:
            raise ConfigError(f"Model '{doc.name}': a floating base must be the only joint attached to the world")

        # Topological order, floating base first
        ordered = sorted(roots, key=lambda j: j.type != "floating-planar")
        queue = list(ordered)
        ordered = []
        while queue:
            joint = queue.pop(0)
            ordered.append(joint)
            queue.extend(j for j in doc.joints if j.parent == joint.child)

        dofs = []
        carrier: Dict[str, int] = {}  # body name -> dof index carrying it
        lower, upper, limits, defaults, actuated = [], [], [], [], []

        for joint in ordered:
            parent_dof = carrier[joint.parent] if joint.parent is not None else -1
            child = body_index[joint.child]

            if joint.type == "floating-planar":
                dofs.append(Dof(f"{joint.name}_x", "prismatic", -1, tuple(joint.offset), (1.0, 0.0), None, False))
                dofs.append(Dof(f"{joint.name}_z", "prismatic", 0, (0.0, 0.0), (0.0, 1.0), None, False))
                dofs.append(Dof(f"{joint.name}_pitch", "revolute", 1, (0.0, 0.0), (1.0, 0.0), child, False))
                carrier[joint.child] = 2
                continue

            dofs.append(Dof(joint.name, joint.type, parent_dof, tuple(joint.offset), tuple(joint.axis), child, True))
            index = len(dofs) - 1
            carrier[joint.child] = index
            actuated.append(index)
            lower.append(joint.lower)
            upper.append(joint.upper)
            limits.append(joint.torque_limit)
            defaults.append(joint.default)

        bodies = tuple(
            Body(b.name, b.mass, tuple(b.com), b.inertia, carrier[b.name]) for b in doc.bodies
        )

        inertias = np.zeros((len(dofs), 3, 3))
        for b in bodies:
            inertias[b.dof] = mcI(b.mass, b.com, b.inertia)

        sites = {
            s.name: Site(s.name, body_index[s.body], carrier[s.body], tuple(s.offset)) for s in doc.sites
        }

        B = np.zeros((len(dofs), len(actuated)))
        for column, row in enumerate(actuated):
            B[row, column] = 1.0

        return cls(
            name=doc.name,
            gravity=doc.gravity,
            dofs=tuple(dofs),
            bodies=bodies,
            sites=sites,
            inertias=_frozen(inertias),
            floating=floating,
            actuated=tuple(actuated),
            joint_lower=_frozen(lower),
            joint_upper=_frozen(upper),
            torque_limits=_frozen(limits),
            default_joint_pos=_frozen(defaults),
            nominal_base=tuple(doc.nominal_base) if doc.nominal_base is not None else None,
            hash=model_hash(doc),
            B=_frozen(B),
        )


def model_hash(doc: schemas.RobotModelDoc) -> str:
    """Content hash of a model document (first 16 hex digits of sha256)."""
    canonical = json.dumps(doc.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ============================================
# STATE AND CONTACTS
# ============================================


@dataclass(frozen=True, eq=False)
class RobotState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        v = np.array(self.v, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise NumericError("RobotState contains non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])

    @classmethod
    def from_vector(cls, x: np.ndarray, n_q: int) -> "RobotState":
        return cls(q=x[:n_q], v=x[n_q:])


@dataclass(frozen=True, eq=False)
class ContactSet:
    active_sites: Tuple[str, ...] = ()
    forces: Optional[np.ndarray] = None
    jacobian_cache: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "active_sites", tuple(self.active_sites))
        if self.forces is not None:
            forces = np.array(self.forces, dtype=float).reshape(-1)
            if forces.shape[0] != CONTACT_DIM * len(self.active_sites):
                raise DimensionError(
                    f"Contact forces have {forces.shape[0]} entries, expected "
                    f"{CONTACT_DIM} x {len(self.active_sites)} active sites"
                )
            object.__setattr__(self, "forces", forces)

    @property
    def dim(self) -> int:
        return CONTACT_DIM * len(self.active_sites)

    def __len__(self) -> int:
        return len(self.active_sites)


def check_state(model: RobotModel, state: RobotState) -> None:
    if state.q.shape[0] != model.n_q or state.v.shape[0] != model.n_v:
        raise DimensionError(
            f"State has dim(q)={state.q.shape[0]}, dim(v)={state.v.shape[0]}; "
            f"model '{model.name}' expects {model.n_q}, {model.n_v}"
        )
