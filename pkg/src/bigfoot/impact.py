"""Plastic heel-strike impact with stance exchange.

At impact the model is expanded to seven coordinates
``(theta_1, theta_2, phi, psi, c_x, c_y, c_z)``, where ``c`` is the stance
foot's contact point.  Zero restitution means the striking foot's contact
point is at rest right after impact, which gives the linear system

    M7 (qd+ - qd-) = G^T tau,    G qd+ = 0

with ``tau`` the contact impulse at the striking foot and ``qd-`` having
``c_dot = 0``.  It is solved through the Schur complement ``G M7^-1 G^T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _model
from .kinematics import ContactState, GeneralizedState, consistent_rates
from .params import RobotParams

IMPACT_COORDS = ("theta1", "theta2", "phi", "psi", "c_x", "c_y", "c_z")


class SingularImpactSystem(np.linalg.LinAlgError):
    """The impact system is rank deficient (degenerate geometry)."""


class NonDissipative(UserWarning):
    """Impact gained kinetic energy beyond round-off."""


class NonPhysicalImpulse(UserWarning):
    """Solved normal impulse is negative (the foot would pull on the ground)."""


@dataclass(frozen=True)
class ImpactState:
    """Expanded-coordinate view of one impact."""

    q_imp: np.ndarray
    qdot_minus: np.ndarray
    qdot_plus: np.ndarray
    tau: np.ndarray


@dataclass(frozen=True)
class ImpactResult:
    state_plus: GeneralizedState
    tau: np.ndarray
    ke_loss: float
    detail: ImpactState


def _expanded(state: GeneralizedState, params: RobotParams):
    q = state.q
    R2 = _model.frames(q)[1]
    c = np.array(_model.positions(q, int(state.contact), params.packed)[0]) - params.H * R2[2]
    return np.concatenate([q[:4], c])


def impulsive_kinetic_gradients(q, qdot, params: RobotParams,
                                contact=ContactState.A_EDGE) -> np.ndarray:
    """Gradient of kinetic energy with respect to the seven impact rates.

    ``q`` holds at least ``(theta_1, theta_2, phi, psi)``; ``qdot`` is the
    7-vector of impact-coordinate rates.  The stance joint velocity is
    expressed through ``c_dot`` plus the rotation of the stance leg about the
    contact point, so the result is ``M7 @ qdot``.
    """
    q6 = np.zeros(6)
    q6[:4] = np.asarray(q, float)[:4]
    M7, _, _ = _model.impact_matrices(q6, int(ContactState.parse(contact)), params.packed)
    return M7 @ np.asarray(qdot, float)


def _solve(M7: np.ndarray, G: np.ndarray, qd_minus: np.ndarray, rcond: float = 1e-12):
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise SingularImpactSystem("striking-foot velocity map is rank deficient")
    try:
        cho = linalg.cho_factor(M7)
    except linalg.LinAlgError:
        raise SingularImpactSystem("impact mass matrix is not positive definite") from None
    MinvGt = linalg.cho_solve(cho, G.T)
    S = G @ MinvGt
    if np.linalg.cond(S) > 1 / rcond:
        raise SingularImpactSystem("impact Schur complement is singular")
    tau = np.linalg.solve(S, -G @ qd_minus)
    return qd_minus + MinvGt @ tau, tau


def impact_map(state_minus: GeneralizedState, params: RobotParams,
               event_tol: float = 1e-8, ke_tol: float = 1e-12) -> ImpactResult:
    """Post-impact state, contact impulse and kinetic energy lost at heel strike.

    Positions are continuous; the planar coordinates are re-referenced to the
    new stance joint, which sits ``2L`` along the shaft from the old one.
    """
    contact = state_minus.contact
    if not contact.is_edge:
        raise ValueError("heel strike is defined for edge contact states only")
    if abs(state_minus.phi) >= event_tol:
        raise ValueError(f"|phi| = {abs(state_minus.phi):.3g} is not at the switching angle")
    q = state_minus.q.copy()
    q[2] = 0.0
    M7, G, offset = _model.impact_matrices(q, int(contact), params.packed)
    qd_minus = np.zeros(7)
    qd_minus[:4] = state_minus.qdot[:4]
    qd_plus, tau = _solve(M7, G, qd_minus)

    new_contact = contact.swapped()
    q_plus = q.copy()
    q_plus[4:6] += offset[:2]
    state_plus = GeneralizedState(q_plus, consistent_rates(q_plus, qd_plus[:4], new_contact, params),
                                  new_contact, state_minus.t)
    t_minus = 0.5 * qd_minus @ M7 @ qd_minus
    t_plus = float(_model.kinetic_energy(q_plus, state_plus.qdot, int(new_contact), params.packed))
    ke_loss = float(t_minus - t_plus)
    if ke_loss < -ke_tol:
        warnings.warn(f"impact gained {-ke_loss:.3g} J of kinetic energy", NonDissipative,
                      stacklevel=2)
    if tau[2] < 0:
        warnings.warn(f"negative normal impulse {tau[2]:.3g} N s", NonPhysicalImpulse,
                      stacklevel=2)
    q_imp = _expanded(state_minus.evolve(q=q), params)
    return ImpactResult(state_plus, tau, ke_loss, ImpactState(q_imp, qd_minus, qd_plus, tau))
