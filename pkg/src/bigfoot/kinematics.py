"""Geometric model: frames, position vectors, angular velocities, contact constraints.

Everything is expressed in Platform Fixed components.  Rotation matrices hold
the frame unit vectors as rows, so ``R @ v`` gives the body components of a
platform vector ``v``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import _model
from .params import RobotParams


class ContactState(enum.IntEnum):
    """Active foot/platform contact; values index the (a, b, c, d) indicators."""

    A_EDGE = _model.A_EDGE
    B_EDGE = _model.B_EDGE
    A_CURVE = _model.A_CURVE
    B_CURVE = _model.B_CURVE

    @property
    def indicators(self) -> tuple[int, int, int, int]:
        out = [0, 0, 0, 0]
        out[int(self)] = 1
        return tuple(out)

    @property
    def stance_leg(self) -> str:
        return "A" if self in (ContactState.A_EDGE, ContactState.A_CURVE) else "B"

    @property
    def is_edge(self) -> bool:
        return self in (ContactState.A_EDGE, ContactState.B_EDGE)

    def swapped(self) -> "ContactState":
        """Same contact type on the other leg."""
        return ContactState(int(self) ^ 1)

    @classmethod
    def parse(cls, value) -> "ContactState":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip()
            aliases = {"a": cls.A_EDGE, "b": cls.B_EDGE, "c": cls.A_CURVE, "d": cls.B_CURVE}
            if key.lower() in aliases:
                return aliases[key.lower()]
            return cls[key.upper()]
        return cls(int(value))


COORDS = ("theta1", "theta2", "phi", "psi", "x", "y")


@dataclass(frozen=True)
class GeneralizedState:
    """Configuration ``q``, rates ``qdot``, active contact and time.

    ``q = (theta_1, theta_2, phi, psi, x, y)`` where ``(x, y)`` is the planar
    position of the stance hip joint.  The height is not stored.
    """

    q: np.ndarray
    qdot: np.ndarray
    contact: ContactState = ContactState.A_EDGE
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(6)
        qdot = np.array(self.qdot, dtype=float).reshape(6)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError("state must be finite")
        q.setflags(write=False)
        qdot.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)
        object.__setattr__(self, "contact", ContactState.parse(self.contact))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def at_rest(cls, contact=ContactState.A_EDGE, **coords) -> "GeneralizedState":
        q = np.zeros(6)
        for k, v in coords.items():
            q[COORDS.index(k)] = v
        return cls(q, np.zeros(6), contact)

    def evolve(self, **changes) -> "GeneralizedState":
        return replace(self, **changes)

    @property
    def phi(self) -> float:
        return float(self.q[2])


class FrameSet(NamedTuple):
    """Platform rotation R_s (rows: platform axes in space components) and
    R_1..R_4 (rows: frame axes in platform components)."""

    R_s: np.ndarray
    R_1: np.ndarray
    R_2: np.ndarray
    R_3: np.ndarray
    R_4: np.ndarray

    @property
    def i1(self):
        return self.R_1[0]

    @property
    def j1(self):
        return self.R_1[1]

    @property
    def j2(self):
        return self.R_2[1]

    @property
    def k2(self):
        return self.R_2[2]

    @property
    def k3(self):
        return self.R_3[2]

    @property
    def k4(self):
        return self.R_4[2]


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def build_frames(state: GeneralizedState, params: RobotParams) -> FrameSet:
    R1, R2, R3, R4 = _model.frames(state.q)
    return FrameSet(rot_y(params.beta).T, R1, R2, R3, R4)


def holonomic_height(phi: float, contact, params: RobotParams) -> float:
    """Stance hip height from the integrated normal component of rolling."""
    z, _, _ = _model.height(float(phi), int(ContactState.parse(contact)), params.packed)
    return z


def positions(state: GeneralizedState, params: RobotParams) -> dict[str, np.ndarray]:
    """Stance joint r_A, shaft centre r_D, body COMs and contact point r_C."""
    r = _model.positions(state.q, int(state.contact), params.packed)
    if state.contact.is_edge:
        r_c = r[0] - params.H * _model.frames(state.q)[1][2]
    else:
        r_c = r[1] - np.array([0.0, 0.0, params.H_B])
    return {"r_A": r[0], "r_D": r[1], "r_GA": r[2], "r_GB": r[3], "r_GD": r[4], "r_C": r_c}


def angular_velocities(state: GeneralizedState, params: RobotParams) -> dict[str, np.ndarray]:
    R1, R2, _, _ = _model.frames(state.q)
    t1d, t2d, phd, psd = state.qdot[:4]
    omega_3 = psd * R1[2] + phd * R1[0]
    return {
        "omega_1": omega_3 + t1d * R2[1],
        "omega_2": omega_3 + t2d * R2[1],
        "omega_3": omega_3,
    }


@dataclass(frozen=True)
class RollingConstraint:
    """x/y rows of the rolling constraint, ``J_c @ qdot = 0``."""

    J_c: np.ndarray
    residual_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)


def rolling_constraint_matrix(state: GeneralizedState, params: RobotParams) -> RollingConstraint:
    J_c, _ = _model.constraint(state.q, state.qdot, int(state.contact), params.packed)
    J_c = np.array(J_c)

    def residual(qdot) -> np.ndarray:
        return J_c @ np.asarray(qdot, dtype=float)

    return RollingConstraint(J_c, residual)


def consistent_rates(q, angle_rates, contact, params: RobotParams) -> np.ndarray:
    """Full ``qdot`` whose planar rates satisfy the rolling constraint."""
    return np.array(_model.planar_rates(np.asarray(q, float), np.asarray(angle_rates, float)[:4],
                                        int(ContactState.parse(contact)), params.packed))
