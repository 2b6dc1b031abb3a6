"""Hybrid rigid-body simulator for a magnetically actuated millimetre-scale biped."""

from .params import RobotParams, default_params, load_params
from .kinematics import ContactState, GeneralizedState
from .dynamics import IntegratorConfig, MagneticFieldCommand
from .actuation import ActuationProgram, PulseParams, Scheme
from .simulation import Trajectory, run_program, simulate

__all__ = [
    "RobotParams", "default_params", "load_params",
    "ContactState", "GeneralizedState",
    "IntegratorConfig", "MagneticFieldCommand",
    "ActuationProgram", "PulseParams", "Scheme",
    "Trajectory", "run_program", "simulate",
]
