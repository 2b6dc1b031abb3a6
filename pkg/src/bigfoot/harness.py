"""Slope-ladder sweeps, maximum slopes, scripted maneuvers, coil export and result files.

A sweep visits every ``(P_L, P_Area)`` pair and climbs a slope ladder for
it: the first rung starts from rest, each later rung starts from the last
section crossing of the rung below, and the ladder ends once the biped walks
backward or stops walking.  Ladders are independent and may run in worker
processes; rungs inside a ladder are sequential.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata, resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .actuation import ActuationProgram, PulseParams, Scheme, constant_wave_command
from .analysis import (AnalysisConfig, CycleLost, GaitClass, GaitKind, InsufficientData,
                       LocomotionLost, NoConvergence, SectionPoint, StabilityReport, classify_gait,
                       find_fixed_point, floquet_multipliers, period_of, poincare_crossings)
from .dynamics import IntegratorConfig, MagneticFieldCommand
from .kinematics import ContactState, GeneralizedState
from .params import RobotParams
from .simulation import Terminal, Trajectory, hip_position, simulate

GRID_P_L = (0.005, 0.0225, 0.040)
GRID_P_AREA = (0.002, 0.004, 0.006, 0.008, 0.010)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class ResultsIOError(OSError):
    """Writing or reading a result file failed; the message names the file."""


class CellTerminal(enum.Enum):
    WALKING = "Walking"
    BACKWARD = "Backward"
    LOCOMOTION_LOST = "LocomotionLost"


class Limiting(enum.Enum):
    BACKWARD = "Backward"
    INSTABILITY = "Instability"


# -- sweeps ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """Grid, ladder and stop conditions of a sweep.  SI units and radians.

    ``psi_m`` and ``phi_m`` are the pulse field angles, mirrored by the
    scheme for the negative half-cycle.  A rung stops early once its last
    ``2 * n_max + 1`` crossings repeat with some period ``n <= n_max``.
    """

    scheme: Scheme
    P_L_values: tuple[float, ...] = GRID_P_L
    P_Area_values: tuple[float, ...] = GRID_P_AREA
    slope_start: float = 0.0
    slope_step: float = float(np.deg2rad(0.5))
    psi_m: float = float(np.deg2rad(-20.0))
    phi_m: float = float(np.deg2rad(60.0))
    t_off: float = 0.060
    cell_time: float = 30.0
    max_slope: float = float(np.deg2rad(20.0))
    backward_window: int = 10
    # mm/s; slower net travel over the window counts as locomotion lost
    min_velocity: float = 0.1
    warm_start: bool = True
    early_stop: bool = True
    stability: bool = True
    chunk_sections: int = 10

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme) if isinstance(self.scheme, str)
                           else self.scheme)
        object.__setattr__(self, "P_L_values", tuple(float(v) for v in self.P_L_values))
        object.__setattr__(self, "P_Area_values", tuple(float(v) for v in self.P_Area_values))
        if not self.P_L_values or not self.P_Area_values:
            raise ValueError("P_L_values and P_Area_values must be non-empty")
        if not self.slope_step > 0:
            raise ValueError("slope_step must be positive")
        if min(self.P_L_values) <= 0 or min(self.P_Area_values) < 0:
            raise ValueError("pulse lengths must be positive and areas non-negative")
        if self.cell_time <= 0 or self.backward_window < 1 or self.chunk_sections < 1:
            raise ValueError("cell_time, backward_window and chunk_sections must be positive")

    def program(self, P_L: float, P_Area: float) -> ActuationProgram:
        t_off = self.t_off if self.scheme is Scheme.CONSTANT_PULSE_WAVE else 0.0
        pulse = PulseParams(self.psi_m, self.phi_m, P_Area / P_L, P_L, t_off)
        return ActuationProgram(self.scheme, pulse)

    def slopes(self) -> np.ndarray:
        """Every rung of the ladder up to ``max_slope``."""
        n = int(math.floor((self.max_slope - self.slope_start) / self.slope_step + 1e-9))
        return self.slope_start + self.slope_step * np.arange(max(n, 0) + 1)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "P_L_ms": [round(v * 1e3, 9) for v in self.P_L_values],
            "P_Area_ms": [round(v * 1e3, 9) for v in self.P_Area_values],
            "slope_start_deg": round(float(np.rad2deg(self.slope_start)), 9),
            "slope_step_deg": round(float(np.rad2deg(self.slope_step)), 9),
            "max_slope_deg": round(float(np.rad2deg(self.max_slope)), 9),
            "psi_m_deg": round(float(np.rad2deg(self.psi_m)), 9),
            "phi_m_deg": round(float(np.rad2deg(self.phi_m)), 9),
            "t_off_ms": round(self.t_off * 1e3, 9),
            "cell_time_s": self.cell_time,
            "backward_window": self.backward_window,
            "min_velocity_mm_s": self.min_velocity,
            "warm_start": self.warm_start,
            "early_stop": self.early_stop,
            "stability": self.stability,
        }


@dataclass(frozen=True)
class SweepCell:
    """Outcome of one rung.  Velocity in mm/s and stride in mm along uphill.

    ``fixed_point`` and ``section_phi`` (roll angle and rate at every
    recorded crossing) are kept in memory only and not written to CSV.
    """

    P_L: float
    P_Area: float
    beta: float
    gait: GaitClass
    avg_max_multiplier: float
    velocity: float
    stride: float
    terminal: CellTerminal
    n_steps: int = 0
    error: str = ""
    fixed_point: SectionPoint | None = field(default=None, compare=False, repr=False)
    section_phi: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), compare=False,
                                    repr=False)

    @property
    def key(self) -> tuple[float, float]:
        return (self.P_L, self.P_Area)


def _lost(P_L, P_Area, beta, error: str, n_steps: int = 0) -> SweepCell:
    return SweepCell(P_L, P_Area, beta, GaitClass(GaitKind.FALLEN), math.nan, 0.0, 0.0,
                     CellTerminal.LOCOMOTION_LOST, n_steps, error)


def _window_travel(steps, final: GeneralizedState, params: RobotParams, window: int):
    """Uphill velocity (mm/s) and stride (mm) from ``window`` impacts back to the end."""
    if len(steps) < window:
        return None
    first = steps[-window]
    end_hip = hip_position(final, params)
    dt = final.t - first.t
    dist = float(end_hip[0] - first.hip[0]) * 1e3
    return (dist / dt if dt > 0 else 0.0), dist / window


def _classify(sections: list[SectionPoint], acfg: AnalysisConfig, early_n: int | None) -> GaitClass:
    if early_n is not None:
        return GaitClass(GaitKind.PERIOD1) if early_n == 1 else GaitClass(GaitKind.PERIOD_N, early_n)
    try:
        return classify_gait(sections, acfg)
    except InsufficientData:
        pass
    if len(sections) >= 2:
        X = np.array([s.xi for s in sections])
        n = period_of(X[len(X) // 2:], acfg.cluster_tol, acfg.n_max, np.asarray(acfg.scales))
        if n is not None:
            return GaitClass(GaitKind.PERIOD1) if n == 1 else GaitClass(GaitKind.PERIOD_N, n)
    return GaitClass(GaitKind.NON_PERIODIC)


def run_rung(spec: SweepSpec, program: ActuationProgram, params: RobotParams, beta: float,
             start: SectionPoint | None = None, cfg: IntegratorConfig = IntegratorConfig(),
             acfg: AnalysisConfig | None = None) -> tuple[SweepCell, SectionPoint | None]:
    """Simulate one rung and return its cell and its last section crossing."""
    acfg = acfg or AnalysisConfig(integrator=cfg)
    P_L, P_Area = program.pulse.P_L, program.pulse.P_Area
    p = params.replace(beta=float(beta))
    if start is None:
        state, impact = GeneralizedState.at_rest(), False
    else:
        state, impact = start.to_state(p), True
    t_limit = state.t + spec.cell_time
    steps, sections, phis = [], [], []
    early_n = None
    window = 2 * acfg.n_max + 1
    while True:
        traj = simulate(state, program, p, t_limit, cfg, max_sections=spec.chunk_sections,
                        initial_impact=impact, record=False)
        steps += traj.steps
        last_t = sections[-1].t if sections else -math.inf
        for sp in poincare_crossings(traj):
            if sp.t > last_t:
                sections.append(sp)
        phis += _section_phi(traj, last_t)
        state = traj.final_state
        if traj.terminal is not Terminal.SECTION:
            break
        impact = True
        if spec.early_stop and len(sections) >= window:
            X = np.array([s.xi for s in sections[-window:]])
            early_n = period_of(X, acfg.cluster_tol, acfg.n_max, np.asarray(acfg.scales))
            if early_n is not None:
                break
    phi_arr = np.array(phis, dtype=float).reshape(-1, 2)
    last = sections[-1] if sections else None
    if traj.terminal in (Terminal.FALL, Terminal.STOPPED):
        cell = _lost(P_L, P_Area, beta, traj.terminal.value, len(steps))
        return _with_sections(cell, phi_arr), last

    travel = _window_travel(steps, state, p, spec.backward_window)
    if travel is None:
        cell = _lost(P_L, P_Area, beta, f"only {len(steps)} impacts", len(steps))
        return _with_sections(cell, phi_arr), last
    velocity, stride = travel
    if velocity < 0:
        cell = SweepCell(P_L, P_Area, beta, GaitClass(GaitKind.BACKWARD), math.nan, velocity,
                         stride, CellTerminal.BACKWARD, len(steps))
        return _with_sections(cell, phi_arr), last
    if velocity < spec.min_velocity:
        cell = _lost(P_L, P_Area, beta, f"stationary ({velocity:.3g} mm/s)", len(steps))
        return _with_sections(cell, phi_arr), last

    gait = _classify(sections, acfg, early_n)
    avg, fp, error = math.nan, None, ""
    if spec.stability and gait.kind is GaitKind.PERIOD1 and last is not None:
        try:
            fp = find_fixed_point(program, p, last, acfg)
            avg = floquet_multipliers(program, p, fp, acfg, gait).avg_max_multiplier
        except (NoConvergence, LocomotionLost, CycleLost) as exc:
            error = f"{type(exc).__name__}: {exc}"
    cell = SweepCell(P_L, P_Area, beta, gait, avg, velocity, stride, CellTerminal.WALKING,
                     len(steps), error, fp)
    return _with_sections(cell, phi_arr), last


def _section_phi(traj: Trajectory, after: float) -> list[tuple[float, float]]:
    """Roll angle and rate of every leg-A heel strike the run recorded after ``after``.

    No sign filter is applied, so the caller can audit the section condition.
    """
    out = []
    states = [r.state_minus for r in traj.steps]
    if traj.terminal is Terminal.SECTION:
        states.append(traj.final_state)
    for st in states:
        if st.contact is ContactState.A_EDGE and st.t > after:
            out.append((st.phi, float(st.qdot[2])))
    return out


def _with_sections(cell: SweepCell, phi: np.ndarray) -> SweepCell:
    object.__setattr__(cell, "section_phi", phi)
    return cell


def run_ladder(spec: SweepSpec, params: RobotParams, P_L: float, P_Area: float,
               cfg: IntegratorConfig = IntegratorConfig()) -> list[SweepCell]:
    """Climb the slope ladder of one ``(P_L, P_Area)`` pair."""
    program = spec.program(P_L, P_Area)
    cells: list[SweepCell] = []
    start = None
    for beta in spec.slopes():
        try:
            cell, last = run_rung(spec, program, params, float(beta), start, cfg)
        except Exception as exc:  # recorded in the cell, never aborts the sweep
            cell, last = _lost(P_L, P_Area, float(beta), f"{type(exc).__name__}: {exc}"), None
        cells.append(cell)
        if cell.terminal is not CellTerminal.WALKING:
            break
        start = last if spec.warm_start else None
    return cells


def _ladder_job(args):
    spec, params, P_L, P_Area, cfg = args
    return run_ladder(spec, params, P_L, P_Area, cfg)


def run_sweep(spec: SweepSpec, params: RobotParams, cfg: IntegratorConfig = IntegratorConfig(),
              workers: int = 1) -> list[SweepCell]:
    """All ladders of the grid, in ``P_L``-major, ``P_Area``-minor order."""
    jobs = [(spec, params, a, b, cfg) for a in spec.P_L_values for b in spec.P_Area_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ladders = list(pool.map(_ladder_job, jobs))
    else:
        ladders = [_ladder_job(j) for j in jobs]
    return [c for ladder in ladders for c in ladder]


class SlopeResult(NamedTuple):
    beta_max: float | None
    limiting: Limiting | None
    cells: list[SweepCell]


def slope_summary(cells: Sequence[SweepCell]) -> SlopeResult:
    """Last walking slope of one ladder and why the next rung failed.

    ``beta_max`` is ``None`` when the first rung already fails; ``limiting``
    is ``None`` when the ladder reached its top without failing.
    """
    cells = list(cells)
    walking = [c for c in cells if c.terminal is CellTerminal.WALKING]
    beta_max = walking[-1].beta if walking else None
    limiting = None
    if cells and cells[-1].terminal is CellTerminal.BACKWARD:
        limiting = Limiting.BACKWARD
    elif cells and cells[-1].terminal is CellTerminal.LOCOMOTION_LOST:
        limiting = Limiting.INSTABILITY
    return SlopeResult(beta_max, limiting, cells)


def max_slope(scheme, P_L: float, P_Area: float, params: RobotParams,
              cfg: IntegratorConfig = IntegratorConfig(), **spec_options) -> SlopeResult:
    spec = SweepSpec(scheme, (P_L,), (P_Area,), **spec_options)
    return slope_summary(run_ladder(spec, params, P_L, P_Area, cfg))


def ladders(cells: Sequence[SweepCell]) -> dict[tuple[float, float], list[SweepCell]]:
    """Group sweep cells by ``(P_L, P_Area)`` keeping ladder order."""
    out: dict[tuple[float, float], list[SweepCell]] = {}
    for c in cells:
        out.setdefault(c.key, []).append(c)
    return out


def max_slopes(cells: Sequence[SweepCell]) -> dict[tuple[float, float], SlopeResult]:
    return {k: slope_summary(v) for k, v in ladders(cells).items()}


# -- maneuvers -------------------------------------------------------------------------

@dataclass(frozen=True)
class Forward:
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("Forward needs n_steps >= 1")


@dataclass(frozen=True)
class TurnBy:
    delta_psi_d: float


@dataclass(frozen=True)
class SetTurnPerStep:
    """Per-step heading increments, cycled over later forward steps; empty clears."""

    increments: tuple[float, ...]


MAX_TURN_STEP = float(np.deg2rad(5.0))


@dataclass(frozen=True)
class ManeuverScript:
    """Line-oriented script: ``FWD n``, ``TURN deg``, ``TURNSTEP deg [deg ...]``."""

    instructions: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "ManeuverScript":
        out = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            words = raw.split("#", 1)[0].split()
            if not words:
                continue
            verb, args = words[0].upper(), words[1:]
            try:
                if verb == "FWD" and len(args) == 1:
                    out.append(Forward(int(args[0])))
                elif verb == "TURN" and len(args) == 1:
                    out.append(TurnBy(float(np.deg2rad(float(args[0])))))
                elif verb == "TURNSTEP":
                    out.append(SetTurnPerStep(tuple(float(np.deg2rad(float(a))) for a in args)))
                else:
                    raise ValueError(f"unknown instruction {raw.strip()!r}")
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(tuple(out))

    def format(self) -> str:
        lines = []
        for ins in self.instructions:
            if isinstance(ins, Forward):
                lines.append(f"FWD {ins.n_steps}")
            elif isinstance(ins, TurnBy):
                lines.append(f"TURN {np.rad2deg(ins.delta_psi_d):.10g}")
            else:
                lines.append(" ".join(["TURNSTEP"] + [f"{np.rad2deg(v):.10g}" for v in ins.increments]))
        return "\n".join(lines) + ("\n" if lines else "")

    def schedule(self, max_turn_step: float | None = MAX_TURN_STEP) -> np.ndarray:
        """Commanded ``psi_d`` of every step, increments summed in script order.

        A ``TURN`` larger than ``max_turn_step`` is walked as extra steps of
        equal increments, since a single large jump of the field heading
        topples the biped; the last of them lands exactly on the target.
        """
        psi, per_step, k = 0.0, (), 0
        out = []
        for ins in self.instructions:
            if isinstance(ins, TurnBy):
                target = psi + ins.delta_psi_d
                if max_turn_step is not None and abs(ins.delta_psi_d) > max_turn_step:
                    m = int(math.ceil(abs(ins.delta_psi_d) / max_turn_step))
                    out += [psi + ins.delta_psi_d * j / m for j in range(1, m)]
                    out.append(target)
                psi = target
            elif isinstance(ins, SetTurnPerStep):
                per_step, k = ins.increments, 0
            else:
                for _ in range(ins.n_steps):
                    if per_step:
                        psi += per_step[k % len(per_step)]
                        k += 1
                    out.append(psi)
        return np.array(out)

    @property
    def n_steps(self) -> int:
        return len(self.schedule())


EXAMPLE_MANEUVERS = ("square", "circle", "figure8", "maze")


def example_maneuver(name: str) -> ManeuverScript:
    if name not in EXAMPLE_MANEUVERS:
        raise ValueError(f"unknown example {name!r}; choose from {', '.join(EXAMPLE_MANEUVERS)}")
    text = resources.files("bigfoot.data").joinpath("maneuvers").joinpath(f"{name}.txt")
    return ManeuverScript.parse(text.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ManeuverResult:
    """Shaft-centre path (start plus one point per impact, m) and per-step log."""

    path: np.ndarray
    t: np.ndarray
    psi_d: np.ndarray
    heading: np.ndarray
    completed: bool
    terminal: str

    @property
    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.path, axis=0), axis=1)))

    @property
    def closure_error(self) -> float:
        return float(np.linalg.norm(self.path[-1] - self.path[0])) if len(self.path) else 0.0

    def realized_heading_change(self, stride: int = 2) -> float:
        """Net turn of the path direction, from chords spanning ``stride`` steps (rad)."""
        pts = self.path[::stride]
        d = np.diff(pts, axis=0)
        if len(d) < 2:
            return 0.0
        ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
        return float(ang[-1] - ang[0])


class ManeuverAborted(LocomotionLost):
    """Locomotion was lost mid-script; ``result`` holds the partial path."""

    def __init__(self, message: str, result: ManeuverResult):
        super().__init__(message)
        self.result = result


def run_maneuver(script: ManeuverScript, program: ActuationProgram, params: RobotParams,
                 cfg: IntegratorConfig = IntegratorConfig(), step_budget: float = 1.0,
                 start: GeneralizedState | None = None,
                 max_turn_step: float | None = MAX_TURN_STEP) -> ManeuverResult:
    """Walk the script, changing ``psi_d`` between steps.

    ``step_budget`` is the simulated time allowed per scheduled step.
    """
    sched = script.schedule(max_turn_step)
    n = sched.size
    if n == 0:
        return ManeuverResult(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0), True, "Empty")
    steering, prev = [], None
    for k, v in enumerate(sched):
        if prev is None or v != prev:
            steering.append((k, float(v)))
            prev = v
    prog = program.with_steering(steering)
    state = start or GeneralizedState.at_rest()
    traj = simulate(state, prog, params, state.t + step_budget * n, cfg, max_impacts=n,
                    record=False)
    path = np.vstack([hip_position(state, params)[None, :]] + [s.hip[None, :] for s in traj.steps])
    res = ManeuverResult(path, np.array([state.t] + [s.t for s in traj.steps]),
                         np.array([s.psi_d for s in traj.steps]),
                         np.array([s.state_plus.q[3] for s in traj.steps]),
                         len(traj.steps) >= n, traj.terminal.value)
    if not res.completed:
        raise ManeuverAborted(f"{traj.terminal.value} after {len(traj.steps)} of {n} steps", res)
    return res


# -- coils -----------------------------------------------------------------------------

class CoilDrive(NamedTuple):
    P_x: float
    P_y: float
    P_z: float


def coil_voltages(cmd: MagneticFieldCommand, k_x: float = 1.0, k_y: float = 1.0,
                  k_z: float = 1.0) -> CoilDrive:
    """Drive values of the three orthogonal Helmholtz pairs for a field command."""
    c = math.cos(cmd.phi_m)
    return CoilDrive(cmd.p_m * c * math.cos(cmd.psi_m) * k_x,
                     cmd.p_m * c * math.sin(cmd.psi_m) * k_y,
                     cmd.p_m * math.sin(cmd.phi_m) * k_z)


def coil_series(program: ActuationProgram, params: RobotParams, duration: float, dt: float,
                gains=(1.0, 1.0, 1.0), cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Rows ``(t, P_x, P_y, P_z)`` sampled every ``dt`` over ``[0, duration]``.

    The constant wave is open loop and sampled directly.  Heel-strike pulses
    depend on impact times, so that scheme is simulated from rest first.
    """
    if dt <= 0 or duration < 0:
        raise ValueError("dt must be positive and duration non-negative")
    t = np.arange(int(math.floor(duration / dt + 1e-9)) + 1) * dt
    if program.scheme is Scheme.CONSTANT_PULSE_WAVE:
        cmds = [constant_wave_command(tk, program.pulse, program.psi_d(0)) for tk in t]
    else:
        traj = simulate(GeneralizedState.at_rest(), program, params, duration, cfg)
        starts = np.array([s.t[0] for s in traj.segments])
        cmds = []
        for tk in t:
            k = max(int(np.searchsorted(starts, tk, side="right")) - 1, 0)
            cmds.append(traj.segments[k].cmd if traj.segments else MagneticFieldCommand())
    rows = [(tk, *coil_voltages(c, *gains)) for tk, c in zip(t, cmds)]
    return np.array(rows, dtype=float).reshape(-1, 4)


# -- result files ----------------------------------------------------------------------

CELL_COLUMNS = ("P_L_ms", "P_Area_ms", "beta_deg", "terminal", "gait", "avg_max_multiplier",
                "velocity_mm_s", "stride_mm", "n_steps", "error")


def _f(x: float, nd: int) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.{nd}f}"


def provenance(params: RobotParams | None = None, spec: SweepSpec | None = None, **extra) -> dict:
    doc = {"tool": "bigfoot", "version": tool_version()}
    if params is not None:
        doc["params"] = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                         for k, v in params.to_dict().items()}
    if spec is not None:
        doc["spec"] = spec.to_dict()
    doc.update(extra)
    return doc


def _header(meta: dict | None) -> str:
    if not meta:
        return ""
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())


def format_cells(cells: Sequence[SweepCell], meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(_header(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_COLUMNS)
    for c in cells:
        w.writerow([_f(c.P_L * 1e3, 4), _f(c.P_Area * 1e3, 4), _f(float(np.rad2deg(c.beta)), 4),
                    c.terminal.value, str(c.gait), _f(c.avg_max_multiplier, 6),
                    _f(c.velocity, 6), _f(c.stride, 6), str(c.n_steps), c.error])
    return buf.getvalue()


def parse_cells(text: str) -> list[SweepCell]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if lines and tuple(csv.reader(lines[:1]).__next__()) != CELL_COLUMNS:
        raise ValueError("unexpected sweep CSV header")
    return [SweepCell(float(r["P_L_ms"]) * 1e-3, float(r["P_Area_ms"]) * 1e-3,
                      float(np.deg2rad(float(r["beta_deg"]))), GaitClass.parse(r["gait"]),
                      float(r["avg_max_multiplier"]), float(r["velocity_mm_s"]),
                      float(r["stride_mm"]), CellTerminal(r["terminal"]), int(r["n_steps"]),
                      r["error"]) for r in rows]


def format_path(result: ManeuverResult, meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(_header(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step", "t", "x_mm", "y_mm", "psi_d_deg", "psi_deg"))
    for k, (pt, tk) in enumerate(zip(result.path, result.t)):
        psi_d = np.rad2deg(result.psi_d[k - 1]) if k else 0.0
        psi = np.rad2deg(result.heading[k - 1]) if k else 0.0
        w.writerow([k, _f(tk, 6), _f(pt[0] * 1e3, 6), _f(pt[1] * 1e3, 6), _f(psi_d, 6), _f(psi, 6)])
    return buf.getvalue()


def format_coil_series(rows: np.ndarray, meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(_header(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "P_x", "P_y", "P_z"))
    for r in rows:
        w.writerow([_f(r[0], 6)] + [_f(v, 9) for v in r[1:]])
    return buf.getvalue()


def emit_results(obj, destination: str | Path | None = None, meta: dict | None = None) -> str:
    """Serialize cells, a stability report, a maneuver path or a trajectory.

    Tabular data becomes CSV with fixed decimals, a report becomes JSON.
    ``meta`` is written as ``# key: value`` lines above the CSV header.
    Returns the text; also writes it when ``destination`` is given (a
    trajectory is only written, since its CSV is streamed).
    """
    if isinstance(obj, Trajectory):
        if destination is None:
            raise ValueError("a trajectory needs a destination")
        try:
            obj.write_csv(destination)
        except OSError as exc:
            raise ResultsIOError(f"cannot write {destination}: {exc}") from exc
        return ""
    if isinstance(obj, StabilityReport):
        doc = json.loads(obj.to_json())
        if meta:
            doc["provenance"] = meta
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif isinstance(obj, ManeuverResult):
        text = format_path(obj, meta)
    elif isinstance(obj, np.ndarray):
        text = format_coil_series(obj, meta)
    else:
        cells = list(obj)
        if cells and not all(isinstance(c, SweepCell) for c in cells):
            raise TypeError("expected sweep cells")
        text = format_cells(cells, meta)
    if destination is not None:
        try:
            Path(destination).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ResultsIOError(f"cannot write {destination}: {exc}") from exc
    return text


def read_cells(path: str | Path) -> list[SweepCell]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ResultsIOError(f"cannot read {path}: {exc}") from exc
    return parse_cells(text)
