# toimit/dynamics/spatial.py - planar spatial vector algebra
#
# Motion vectors are [omega, vx, vz] and force vectors [n, fx, fz]. The model's
# (x, z) plane plays the role of the (x, y) plane of the usual planar algebra.
import numpy as np


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def perp(r: np.ndarray) -> np.ndarray:
    """Rotate a 2-vector by +90 degrees (omega x r for unit omega)."""
    return np.array([-r[1], r[0]])


def plnr(theta: float, r) -> np.ndarray:
    """
    Coordinate transform from frame A to frame B for motion vectors.

    Args:
        theta: Rotation of B relative to A (rad, counter-clockwise)
        r: Origin of B expressed in A coordinates

    Returns:
        3x3 transform
    """
    c, s = np.cos(theta), np.sin(theta)
    rx, rz = float(r[0]), float(r[1])
    return np.array([
        [1.0, 0.0, 0.0],
        [s * rx - c * rz, c, s],
        [c * rx + s * rz, -s, c],
    ])


def crm(v: np.ndarray) -> np.ndarray:
    """Motion cross-product operator."""
    return np.array([
        [0.0, 0.0, 0.0],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def crf(v: np.ndarray) -> np.ndarray:
    """Force cross-product operator."""
    return -crm(v).T


def mcI(mass: float, com, inertia: float) -> np.ndarray:
    """Spatial inertia of a body from its mass, COM offset and inertia about the COM."""
    cx, cz = float(com[0]), float(com[1])
    return np.array([
        [inertia + mass * (cx * cx + cz * cz), -mass * cz, mass * cx],
        [-mass * cz, mass, 0.0],
        [mass * cx, 0.0, mass],
    ])


def joint_transform(kind: str, q: float, axis) -> tuple:
    """
    Joint transform and motion subspace for a single degree of freedom.

    Returns:
        (XJ, S) where XJ is 3x3 and S is the length-3 motion subspace
    """
    if kind == "revolute":
        return plnr(q, (0.0, 0.0)), np.array([1.0, 0.0, 0.0])
    if kind == "prismatic":
        return plnr(0.0, (q * axis[0], q * axis[1])), np.array([0.0, axis[0], axis[1]])
    raise ValueError(f"Unsupported joint kind '{kind}'")
