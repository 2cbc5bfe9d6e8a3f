"""Rigid state, the orientation ODE and frame transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RigidState:
    """Translational velocity ``xi``, angular velocity ``omega`` and orientation ``Q``.

    All vectors are body-frame components.  ``Q`` maps body-frame components
    to inertial-frame components and starts at the identity.
    """

    xi: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Q: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: float = 0.0

    def copy(self) -> "RigidState":
        return RigidState(self.xi.copy(), self.omega.copy(), self.Q.copy(), self.t)


def skew(omega) -> np.ndarray:
    """The antisymmetric matrix with ``skew(w) @ x == cross(x, w)``."""
    w1, w2, w3 = omega
    return np.array([[0.0, w3, -w2],
                     [-w3, 0.0, w1],
                     [w2, -w1, 0.0]])


def rotation_exp(omega, dt: float) -> np.ndarray:
    """Closed-form ``expm(-skew(omega) * dt)`` via Rodrigues' formula."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega) * dt
    K = -skew(omega) * dt
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3) + np.sin(theta) / theta * K
            + (1.0 - np.cos(theta)) / theta**2 * K @ K)


def update_rotation(Q: np.ndarray, omega, dt: float) -> np.ndarray:
    """Advance ``dQ/dt = -Q skew(omega)`` over ``dt`` with ``omega`` frozen."""
    return Q @ rotation_exp(omega, dt)


def to_body_frame(w, Q: np.ndarray) -> np.ndarray:
    return Q.T @ np.asarray(w, dtype=float)


def rigid_velocity(xi, omega, x) -> np.ndarray:
    """``xi + omega x x`` for a point (or an (..., 3) array of points)."""
    return np.asarray(xi, dtype=float) + np.cross(omega, x)


def orthogonality_defect(Q: np.ndarray) -> tuple[float, float]:
    """Frobenius norm of ``Q^T Q - I`` and ``|det Q - 1|``."""
    return (float(np.linalg.norm(Q.T @ Q - np.eye(3))),
            float(abs(np.linalg.det(Q) - 1.0)))
