"""Hybrid simulation: continuous phases, heel-strike impacts and field programs.

A run alternates single-support phases integrated by
:func:`bigfoot.dynamics.step_continuous` with the impact map.  Phases are
split at every switching instant of the field command so no discontinuity is
ever smeared across an integrator step.

When an impact leaves almost no roll rate the biped settles on both feet.
It then stays put, velocities zero, until the field produces a roll
acceleration that lifts one foot.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _model
from .actuation import (ActuationProgram, Scheme, constant_wave_command, constant_wave_edges,
                        heel_strike_command)
from .dynamics import (FIELD_OFF, EventKind, IntegratorConfig, MagneticFieldCommand, Segment,
                       SimEvent, pack_state, step_continuous)
from .impact import NonDissipative, NonPhysicalImpulse, impact_map
from .kinematics import ContactState, GeneralizedState, consistent_rates
from .params import RobotParams


class Terminal(enum.Enum):
    TIME_EXPIRED = "TimeExpired"
    FALL = "Fall"
    STOPPED = "Stopped"
    SECTION = "Section"
    IMPACT_LIMIT = "ImpactLimit"


@dataclass(frozen=True)
class StepRecord:
    """One heel strike.  ``index`` counts impacts from 1."""

    index: int
    t: float
    state_minus: GeneralizedState
    state_plus: GeneralizedState
    tau: np.ndarray
    ke_loss: float
    hip: np.ndarray
    psi_d: float
    backward: bool
    rest: bool


@dataclass
class Trajectory:
    params: RobotParams
    segments: list[Segment] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    events: list[SimEvent] = field(default_factory=list)
    pulses: list[tuple[float, float]] = field(default_factory=list)
    terminal: Terminal = Terminal.TIME_EXPIRED
    final_state: GeneralizedState | None = None
    initial_state: GeneralizedState | None = None
    t_start: float = 0.0
    switches: int = 0
    diagnostics: dict = field(default_factory=lambda: {"non_dissipative": 0, "negative_impulse": 0})

    @property
    def t_end(self) -> float:
        return self.final_state.t if self.final_state is not None else self.t_start

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def arrays(self) -> dict[str, np.ndarray]:
        """Concatenated samples: t, y (n x 12), contact codes and field (n x 3)."""
        if not self.segments:
            return {"t": np.zeros(0), "y": np.zeros((0, _model.NY)),
                    "contact": np.zeros(0, int), "field": np.zeros((0, 3))}
        t = np.concatenate([s.t for s in self.segments])
        y = np.concatenate([s.y for s in self.segments])
        contact = np.concatenate([np.full(s.t.size, int(s.contact)) for s in self.segments])
        fld = np.concatenate([np.tile(s.cmd.as_array(), (s.t.size, 1)) for s in self.segments])
        return {"t": t, "y": y, "contact": contact, "field": fld}

    def hip_path(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample times and planar shaft-centre positions (n x 2)."""
        a = self.arrays()
        p = self.params.packed
        hip = np.array([_model.positions(y[:6].copy(), c, p)[1, :2]
                        for y, c in zip(a["y"], a["contact"])]).reshape(-1, 2)
        return a["t"], hip

    def magnetic_impulse(self, window: tuple[float, float]) -> float:
        """Integral of |tau_m| over ``window`` from the running quadrature channel."""
        from .actuation import WindowNotCovered
        a = self.arrays()
        t, I = a["t"], a["y"][:, 10]
        if t.size == 0 or window[0] < t[0] - 1e-12 or window[1] > t[-1] + 1e-12:
            raise WindowNotCovered(f"window {window} outside [{t[0] if t.size else np.nan}, "
                                   f"{t[-1] if t.size else np.nan}]")
        # channel is monotone and continuous, so interpolation between dense samples is safe
        return float(np.interp(window[1], t, I) - np.interp(window[0], t, I))

    def write_csv(self, path: str | Path) -> None:
        write_trajectory_csv(self, path)


TRAJECTORY_COLUMNS = ("t", "theta1", "theta2", "phi", "psi", "x", "y", "z",
                      "theta1_dot", "theta2_dot", "phi_dot", "psi_dot", "x_dot", "y_dot",
                      "contact", "p_m", "psi_m", "phi_m", "event",
                      "tau_x", "tau_y", "tau_z", "ke_loss")


def _row(state: GeneralizedState, cmd: MagneticFieldCommand, event: str, params: RobotParams,
         tau=None, ke_loss=None):
    z = _model.height(state.phi, int(state.contact), params.packed)[0]
    vals = [state.t, *state.q, z, *state.qdot]
    out = [f"{v:.12e}" for v in vals]
    out.append(state.contact.name)
    out += [f"{v:.12e}" for v in (cmd.p_m, cmd.psi_m, cmd.phi_m)]
    out.append(event)
    if tau is None:
        out += ["", "", "", ""]
    else:
        out += [f"{v:.12e}" for v in tau] + [f"{ke_loss:.12e}"]
    return out


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    steps = iter(traj.steps)
    pending = next(steps, None)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for seg in traj.segments:
            for k in range(seg.t.size):
                st = seg.state_at(k, traj.params)
                w.writerow(_row(st, seg.cmd, "", traj.params))
            while pending is not None and pending.t <= seg.t[-1] + 1e-15:
                w.writerow(_row(pending.state_minus, seg.cmd, EventKind.HEEL_STRIKE.value,
                                traj.params, pending.tau, pending.ke_loss))
                pending = next(steps, None)
        for ev in traj.events:
            if ev.kind in (EventKind.FALL, EventKind.TIME_EXPIRED):
                w.writerow(_row(ev.state_before, FIELD_OFF, ev.kind.value, traj.params))


def hip_position(state: GeneralizedState, params: RobotParams) -> np.ndarray:
    return np.array(_model.positions(state.q, int(state.contact), params.packed)[1, :2])


def _stance_side(contact: ContactState) -> int:
    return 1 if contact.stance_leg == "A" else -1


class _Commander:
    """Field command and switching instants for one run."""

    def __init__(self, program: ActuationProgram | None):
        self.program = program
        self.t_s: float | None = None
        self.sign = 1
        self.windows: list[tuple[float, float]] = []

    def trigger(self, t: float, sign: int) -> None:
        self.t_s, self.sign = t, sign
        if self.program is not None and self.program.pulse.P_in > 0:
            self.windows.append((t, t + self.program.pulse.P_L))

    def pulse_windows(self, t0: float, t1: float) -> list[tuple[float, float]]:
        """Powered intervals that start inside ``[t0, t1]``."""
        prog = self.program
        if prog is None or prog.pulse.P_in == 0:
            return []
        if prog.scheme is Scheme.HEEL_STRIKE:
            return [w for w in self.windows if w[0] <= t1]
        p = prog.pulse
        out = []
        k = math.floor(t0 / p.period)
        while k * p.period <= t1:
            for off in (0.0, p.P_L + p.t_off):
                a = k * p.period + off
                if t0 <= a <= t1:
                    out.append((a, a + p.P_L))
            k += 1
        return out

    def command(self, t: float, psi_d: float) -> MagneticFieldCommand:
        prog = self.program
        if prog is None:
            return FIELD_OFF
        if prog.scheme is Scheme.HEEL_STRIKE:
            if self.t_s is None:
                return FIELD_OFF
            return heel_strike_command(t, self.t_s, self.sign, prog.pulse, psi_d)
        return constant_wave_command(t, prog.pulse, psi_d)

    def next_edge(self, t: float) -> float:
        prog = self.program
        if prog is None or prog.pulse.P_in == 0:
            return math.inf
        if prog.scheme is Scheme.HEEL_STRIKE:
            if self.t_s is not None and t < self.t_s + prog.pulse.P_L:
                return self.t_s + prog.pulse.P_L
            return math.inf
        pulse = prog.pulse
        edges = constant_wave_edges(t + 1e-12, t + pulse.period + 1e-9, pulse)
        return float(edges[0])

    def pending(self, t: float) -> bool:
        """Whether the command can still change after ``t``."""
        return math.isfinite(self.next_edge(t))


def _lift_direction(state: GeneralizedState, cmd: MagneticFieldCommand, params: RobotParams,
                    eps: float) -> int:
    """Side (+1 leg A, -1 leg B) the field rolls the resting biped onto, 0 if neither."""
    p = params.packed
    out = 0
    for contact in (ContactState.A_EDGE, ContactState.B_EDGE):
        q = state.q.copy()
        acc = _model.accelerations(q, np.zeros(6), int(contact), cmd.as_array(), p, eps)
        side = _stance_side(contact)
        if acc[2] * side > 0:
            out = side
            break
    return out


def simulate(state0: GeneralizedState, program: ActuationProgram | None, params: RobotParams,
             t_end: float, cfg: IntegratorConfig = IntegratorConfig(), *,
             max_sections: int | None = None, initial_impact: bool = False,
             record: bool = True, max_impacts: int = 100_000) -> Trajectory:
    """Run the hybrid model from ``state0`` until ``t_end`` or a terminal event.

    Parameters
    ----------
    max_sections
        Stop at the given number of section crossings (pre-impact states
        with leg A in stance and phi reaching 0 from above); the final state
        is the pre-impact state of the last one.
    initial_impact
        ``state0`` is a pre-impact state on the section; apply the impact
        before integrating.  With the heel-strike scheme the first pulse
        starts at that impact.
    record
        Keep sampled segments.  Steps and events are always kept.
    """
    traj = Trajectory(params=params, t_start=state0.t, initial_state=state0)
    cmdr = _Commander(program)
    state = state0
    t = state0.t
    aux = np.zeros(2)
    h = 0.0
    n_sections = 0
    last_hip = hip_position(state, params)
    resting = bool(np.all(state.qdot == 0.0)) and abs(state.phi) < cfg.event_tol

    def psi_d() -> float:
        return program.psi_d(len(traj.steps)) if program is not None else 0.0

    def do_impact(st: GeneralizedState):
        nonlocal last_hip
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = impact_map(st, params, event_tol=cfg.event_tol)
        for wmsg in caught:
            if issubclass(wmsg.category, NonDissipative):
                traj.diagnostics["non_dissipative"] += 1
            elif issubclass(wmsg.category, NonPhysicalImpulse):
                traj.diagnostics["negative_impulse"] += 1
        plus = res.state_plus
        side = _stance_side(plus.contact)
        rest = abs(plus.qdot[2]) < cfg.rest_rate or plus.qdot[2] * side <= 0
        if rest:
            plus = plus.evolve(qdot=np.zeros(6))
        hip = hip_position(plus, params)
        backward = bool(hip[0] < last_hip[0])
        last_hip = hip
        rec = StepRecord(len(traj.steps) + 1, st.t, st, plus, res.tau, res.ke_loss, hip,
                         psi_d(), backward, rest)
        traj.steps.append(rec)
        traj.events.append(SimEvent(EventKind.HEEL_STRIKE, st.t, st))
        if backward:
            traj.events.append(SimEvent(EventKind.BACKWARD_STEP, st.t, st))
        cmdr.trigger(st.t, side)
        return plus, rest

    if initial_impact:
        state, resting = do_impact(state)
    elif program is not None and program.scheme is Scheme.HEEL_STRIKE:
        side = _stance_side(state.contact)
        if state.qdot[2] != 0.0:
            side = 1 if state.qdot[2] > 0 else -1
        cmdr.trigger(t, side)

    while t < t_end:
        stop = min(cmdr.next_edge(t), t_end)
        cmd = cmdr.command(0.5 * (t + stop), psi_d())
        if resting:
            side = _lift_direction(state, cmd, params, cfg.friction_eps)
            if side == 0:
                if not cmdr.pending(t) and program is not None and program.scheme is Scheme.HEEL_STRIKE:
                    traj.terminal = Terminal.STOPPED
                    break
                if program is None:
                    traj.terminal = Terminal.STOPPED
                    break
                if record:
                    y = pack_state(state, aux)
                    traj.segments.append(Segment(np.array([t, stop]), np.array([y, y]),
                                                 state.contact, cmd))
                t = stop
                state = state.evolve(t=t)
                continue
            contact = ContactState.A_EDGE if side > 0 else ContactState.B_EDGE
            if contact != state.contact:
                q = state.q.copy()
                offset = _model.positions(q, int(state.contact), params.packed)[1] \
                    - _model.positions(q, int(contact), params.packed)[1]
                q[4:6] += offset[:2]
                state = GeneralizedState(q, np.zeros(6), contact, t)
            resting = False
            h = 0.0

        seg, ev, h = step_continuous(state, cmd, params, cfg, t_stop=stop, h_init=h, aux=aux)
        if record:
            traj.segments.append(seg)
        aux = seg.y[-1, 10:12].copy()
        state, t = ev.state_before, ev.t
        if ev.kind is EventKind.CONTACT_SWITCH:
            # edge <-> curve on the same leg: hip joint and rates are continuous
            contact = ContactState(int(state.contact) ^ 2)
            state = GeneralizedState(state.q, consistent_rates(state.q, state.qdot[:4], contact,
                                                               params), contact, t)
            traj.switches += 1
            continue
        if ev.kind is EventKind.FALL:
            traj.events.append(ev)
            traj.terminal = Terminal.FALL
            break
        if ev.kind is EventKind.HEEL_STRIKE:
            if state.contact is ContactState.A_EDGE:
                n_sections += 1
                if max_sections is not None and n_sections >= max_sections:
                    traj.terminal = Terminal.SECTION
                    break
            if len(traj.steps) >= max_impacts:
                traj.terminal = Terminal.IMPACT_LIMIT
                break
            state, resting = do_impact(state)
            h = 0.0
    else:
        traj.terminal = Terminal.TIME_EXPIRED
    if traj.terminal is Terminal.TIME_EXPIRED:
        traj.events.append(SimEvent(EventKind.TIME_EXPIRED, t, state))
    if traj.terminal is Terminal.STOPPED:
        state = state.evolve(t=t_end)
    traj.final_state = state
    traj.pulses = cmdr.pulse_windows(traj.t_start, state.t)
    return traj


def run_program(program: ActuationProgram, params: RobotParams, t_end: float,
                cfg: IntegratorConfig = IntegratorConfig(), contact=ContactState.A_EDGE,
                **kwargs) -> Trajectory:
    """Start from the upright rest posture and run ``program``."""
    return simulate(GeneralizedState.at_rest(contact), program, params, t_end, cfg, **kwargs)


def state_from_section(xi, t: float, params: RobotParams) -> GeneralizedState:
    """Pre-impact state (leg A stance, phi = 0) from section coordinates.

    ``xi = (theta_1, theta_2, psi, theta_1_dot, theta_2_dot, phi_dot, psi_dot)``.
    """
    xi = np.asarray(xi, float)
    q = np.array([xi[0], xi[1], 0.0, xi[2], 0.0, 0.0])
    rates = np.array([xi[3], xi[4], xi[5], xi[6]])
    return GeneralizedState(q, consistent_rates(q, rates, ContactState.A_EDGE, params),
                            ContactState.A_EDGE, t)


def section_coordinates(state: GeneralizedState) -> np.ndarray:
    q, qd = state.q, state.qdot
    return np.array([q[0], q[1], q[3], qd[0], qd[1], qd[2], qd[3]])
