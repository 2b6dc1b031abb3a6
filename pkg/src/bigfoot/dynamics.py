"""Constrained equations of motion and event-terminated continuous integration.

The dynamics are ``M qdd + h = Q_ext + J_c^T r`` together with the
differentiated rolling constraint ``J_c qdd + Jdot_c qd = 0``, where
``r = (r_x, r_y)`` are the contact force multipliers.  ``M`` and ``h`` are
assembled from body velocity Jacobians (projected Newton-Euler), which is
exact for the Lagrangian written from the kinetic and potential energies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _integrate, _model
from .kinematics import ContactState, GeneralizedState, consistent_rates
from .params import RobotParams


class SingularMass(RuntimeError):
    """Augmented KKT matrix too ill-conditioned (degenerate geometry)."""


class IntegrationFailure(RuntimeError):
    """Step size underflow or step budget exhausted."""


@dataclass(frozen=True)
class MagneticFieldCommand:
    """Uniform field ``p_m * j_m``; angles in rad, ``p_m`` a unitless power."""

    psi_m: float = 0.0
    phi_m: float = 0.0
    p_m: float = 0.0

    def __post_init__(self):
        if self.p_m < 0:
            raise ValueError("p_m must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_m, self.phi_m, self.p_m], dtype=float)

    @property
    def direction(self) -> np.ndarray:
        """Field unit vector j_m in platform components."""
        c = np.cos(self.phi_m)
        return np.array([-c * np.sin(self.psi_m), c * np.cos(self.psi_m), np.sin(self.phi_m)])


FIELD_OFF = MagneticFieldCommand()


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-11
    friction_eps: float = 0.05
    fall_threshold: float = np.deg2rad(60.0)
    event_tol: float = 1e-8
    max_steps: int = 200_000
    sample_dt: float = 0.0
    # below this post-impact roll rate the biped settles onto both feet
    rest_rate: float = 1e-2
    kkt_cond_limit: float = 1e12
    # let the stance foot roll from its inner edge onto its spherical surface
    curve_contact: bool = True

    def __post_init__(self):
        if self.friction_eps <= 0:
            raise ValueError("friction_eps must be positive")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


class EventKind(enum.Enum):
    HEEL_STRIKE = "HeelStrike"
    FALL = "Fall"
    BACKWARD_STEP = "BackwardStep"
    TIME_EXPIRED = "TimeExpired"
    CONTACT_SWITCH = "ContactSwitch"


@dataclass(frozen=True)
class SimEvent:
    kind: EventKind
    t: float
    state_before: GeneralizedState


class MagneticTorque(NamedTuple):
    tau_m: np.ndarray
    Q_3m: float
    Q_4m: float


class GeneralizedForces(NamedTuple):
    Q_c: np.ndarray
    Q_r: np.ndarray
    Q_f: np.ndarray
    Q_m: np.ndarray


class EOM(NamedTuple):
    M: np.ndarray
    h: np.ndarray
    J_c: np.ndarray
    Jdot_qdot: np.ndarray
    Q_ext: np.ndarray


class Accelerations(NamedTuple):
    qddot: np.ndarray
    r_x: float
    r_y: float


def magnetic_torque(state: GeneralizedState, cmd: MagneticFieldCommand,
                    params: RobotParams) -> MagneticTorque:
    """Torque on the shaft magnet and its projections on the roll and yaw axes."""
    tau = np.array(_model.field_torque(state.q, cmd.as_array(), params.packed))
    i1 = _model.frames(state.q)[0][0]
    return MagneticTorque(tau, float(tau @ i1), float(tau[2]))


def friction_forces(state: GeneralizedState, params: RobotParams,
                    regularization_eps: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Rolling friction ``Q_r`` (theta_1, theta_2, phi, psi) and hip damping ``Q_f``.

    The sign function is smoothed as ``tanh(rate / eps)``; rolling friction on
    a leg's pitch acts only while that leg is the stance leg.
    """
    if regularization_eps <= 0:
        raise ValueError("regularization_eps must be positive")
    qd = state.qdot
    sat = np.tanh(qd[:4] / regularization_eps)
    stance_a = state.contact.stance_leg == "A"
    Q_r = np.array([
        -params.c_r1 * sat[0] * stance_a,
        -params.c_r1 * sat[1] * (not stance_a),
        -params.c_r2 * sat[2],
        -params.c_r2 * sat[3],
    ])
    Q_f = -params.c_f1 * qd[:2]
    return Q_r, Q_f


def assemble_eom(state: GeneralizedState, cmd: MagneticFieldCommand, params: RobotParams,
                 friction_eps: float = 0.05, cond_limit: float = 1e12) -> EOM:
    M, h, J_c, jcd, Q = _model.eom(state.q, state.qdot, int(state.contact), cmd.as_array(),
                                   params.packed, friction_eps)
    kkt = np.block([[M, -J_c.T], [J_c, np.zeros((2, 2))]])
    if not np.isfinite(kkt).all() or np.linalg.cond(kkt) > cond_limit:
        raise SingularMass(f"KKT condition number exceeds {cond_limit:g}")
    return EOM(np.array(M), np.array(h), np.array(J_c), np.array(jcd), np.array(Q))


def accelerations(state: GeneralizedState, cmd: MagneticFieldCommand, params: RobotParams,
                  friction_eps: float = 0.05) -> Accelerations:
    eom = assemble_eom(state, cmd, params, friction_eps)
    sol = _model.solve_kkt(eom.M, eom.Q_ext - eom.h, eom.J_c, -eom.Jdot_qdot)
    return Accelerations(np.array(sol[:6]), float(sol[6]), float(sol[7]))


def generalized_forces(state: GeneralizedState, cmd: MagneticFieldCommand, params: RobotParams,
                       friction_eps: float = 0.05) -> GeneralizedForces:
    acc = accelerations(state, cmd, params, friction_eps)
    J_c = _model.constraint(state.q, state.qdot, int(state.contact), params.packed)[0]
    Q_r, Q_f = friction_forces(state, params, friction_eps)
    mt = magnetic_torque(state, cmd, params)
    return GeneralizedForces(J_c.T @ np.array([acc.r_x, acc.r_y]), Q_r, Q_f,
                             np.array([mt.Q_3m, mt.Q_4m]))


def kinetic_energy(state: GeneralizedState, params: RobotParams) -> float:
    return float(_model.kinetic_energy(state.q, state.qdot, int(state.contact), params.packed))


def potential_energy(state: GeneralizedState, params: RobotParams) -> float:
    return float(_model.potential_energy(state.q, int(state.contact), params.packed))


def total_energy(state: GeneralizedState, params: RobotParams) -> float:
    return kinetic_energy(state, params) + potential_energy(state, params)


# -- continuous integration ---------------------------------------------------

def pack_state(state: GeneralizedState, aux=(0.0, 0.0)) -> np.ndarray:
    """Integrator vector: q, angle rates, field impulse and external work."""
    y = np.zeros(_model.NY)
    y[:6] = state.q
    y[6:10] = state.qdot[:4]
    y[10:12] = aux
    return y


def unpack_state(y: np.ndarray, contact: ContactState, t: float,
                 params: RobotParams) -> GeneralizedState:
    q = np.array(y[:6])
    return GeneralizedState(q, consistent_rates(q, y[6:10], contact, params), contact, t)


def curve_switch_angle(params: RobotParams, tol: float = 1e-6) -> float:
    """Roll angle where the inner edge becomes the lowest point of the foot sphere.

    Edge and curved contact meet continuously (same hip height, same contact
    point) only when ``H_B**2 == H**2 + L**2``; otherwise there is no such
    angle and 0 is returned.
    """
    if abs(np.hypot(params.H, params.L) - params.H_B) > tol * params.H_B:
        return 0.0
    return float(np.arctan2(params.L, params.H))


def heel_direction(contact: ContactState) -> int:
    """Sign of the roll rate at which the swing foot reaches the ground."""
    return -1 if contact.stance_leg == "A" else 1


@dataclass
class Segment:
    """Samples of one continuous phase with fixed contact and field command."""

    t: np.ndarray
    y: np.ndarray
    contact: ContactState
    cmd: MagneticFieldCommand

    def state_at(self, k: int, params: RobotParams) -> GeneralizedState:
        return unpack_state(self.y[k], self.contact, float(self.t[k]), params)


def step_continuous(state: GeneralizedState, cmd: MagneticFieldCommand, params: RobotParams,
                    cfg: IntegratorConfig = IntegratorConfig(), t_stop: float = np.inf,
                    h_init: float = 0.0, detect_heel: bool = True, aux=(0.0, 0.0),
                    ) -> tuple[Segment, SimEvent, float]:
    """Integrate from ``state`` until a hybrid event or ``t_stop``.

    Returns the sampled segment, the terminating event and a step-size hint
    for a subsequent call.  With ``cfg.curve_contact`` the phase also ends
    where the stance foot passes between edge and curved contact.  ``aux`` seeds the running magnetic impulse and
    external work channels (``y[10]``, ``y[11]``).  Heel strike is the zero crossing of phi toward the
    swing side; a fall is |phi| or |theta_i| reaching ``cfg.fall_threshold``.
    """
    if not np.isfinite(t_stop):
        raise ValueError("t_stop must be finite")
    y0 = pack_state(state, aux)
    heel = heel_direction(state.contact) if detect_heel and state.contact.is_edge else 0
    switch = curve_switch_angle(params) if cfg.curve_contact else 0.0
    status, t, y, h, _, ts, ys = _integrate.integrate(
        y0, state.t, float(t_stop), int(state.contact), cmd.as_array(), params.packed,
        cfg.friction_eps, cfg.rtol, cfg.atol, h_init, heel,
        cfg.fall_threshold, cfg.max_steps, cfg.sample_dt, switch)
    if status == _integrate.FAILED:
        raise IntegrationFailure(f"step size underflow at t={t:.9g}")
    if status == _integrate.MAX_STEPS:
        raise IntegrationFailure(f"step budget exhausted at t={t:.9g}")
    seg = Segment(ts, ys, state.contact, cmd)
    end = unpack_state(y, state.contact, t, params)
    kind = {
        _integrate.DONE: EventKind.TIME_EXPIRED,
        _integrate.HEEL: EventKind.HEEL_STRIKE,
        _integrate.FALL: EventKind.FALL,
        _integrate.SWITCH: EventKind.CONTACT_SWITCH,
    }[status]
    return seg, SimEvent(kind, t, end), h
