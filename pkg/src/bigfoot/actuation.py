"""Magnetic field command generators, pulse bookkeeping and program files.

Two schemes drive the biped.  The heel-strike scheme fires one pulse right
after every impact, with field angles mirrored according to the direction the
body is rolling.  The constant pulse wave is open loop: a positive pulse,
an off gap, a negative pulse and a second gap, repeated forever.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .dynamics import FIELD_OFF, MagneticFieldCommand


class WindowNotCovered(ValueError):
    """The trajectory does not span the requested pulse window."""


class Scheme(enum.Enum):
    HEEL_STRIKE = "HeelStrike"
    CONSTANT_PULSE_WAVE = "ConstantPulseWave"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {"heelstrike": cls.HEEL_STRIKE, "hs": cls.HEEL_STRIKE,
                   "constantpulsewave": cls.CONSTANT_PULSE_WAVE, "cpw": cls.CONSTANT_PULSE_WAVE}
        if key not in aliases:
            raise ValueError(f"unknown scheme {text!r}")
        return aliases[key]


class Regime(enum.Enum):
    IMPACT = "Impact"
    IMPULSIVE = "Impulsive"


@dataclass(frozen=True)
class PulseParams:
    """Pulse shape: field direction, power, duration and constant-wave gap.

    Angles in rad, durations in s.  ``P_in`` is a unitless multiplier of the
    field power; the absolute strength lives in ``RobotParams.k_m``.
    """

    psi_in: float
    phi_in: float
    P_in: float
    P_L: float
    t_off: float = 0.0

    def __post_init__(self):
        if not self.P_L > 0:
            raise ValueError("P_L must be positive")
        if self.P_in < 0:
            raise ValueError("P_in must be >= 0")
        if self.t_off < 0:
            raise ValueError("t_off must be >= 0")

    @classmethod
    def from_area(cls, P_L: float, P_Area: float, psi_in: float = np.deg2rad(-20.0),
                  phi_in: float = np.deg2rad(60.0), t_off: float = 0.0) -> "PulseParams":
        return cls(psi_in, phi_in, P_Area / P_L, P_L, t_off)

    @property
    def P_Area(self) -> float:
        return self.P_L * self.P_in

    @property
    def period(self) -> float:
        """Constant-wave period t_4."""
        return 2.0 * (self.P_L + self.t_off)


@dataclass(frozen=True)
class ActuationProgram:
    """Scheme, pulse shape and a steering schedule of ``(step_index, psi_d)``.

    ``psi_d`` of an entry applies from that heel-strike count onward; steps
    are counted from 0 at the start of a run.
    """

    scheme: Scheme
    pulse: PulseParams
    steering: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self):
        steering = tuple((int(k), float(v)) for k, v in self.steering)
        idx = [k for k, _ in steering]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("steering indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise ValueError("steering indices must be >= 0")
        object.__setattr__(self, "steering", steering)

    def psi_d(self, step_index: int) -> float:
        value = 0.0
        for k, v in self.steering:
            if k > step_index:
                break
            value = v
        return value

    def with_steering(self, steering) -> "ActuationProgram":
        return ActuationProgram(self.scheme, self.pulse, tuple(steering))


def heel_strike_command(t: float, t_s: float, phi_sign: int, pulse: PulseParams,
                        psi_d: float = 0.0) -> MagneticFieldCommand:
    """Field command of the heel-strike scheme at time ``t``.

    ``t_s`` is the last heel-strike time and ``phi_sign`` the sign of the roll
    motion right after it.  The pulse is on over ``[t_s, t_s + P_L)``.
    """
    if not (t_s <= t < t_s + pulse.P_L) or pulse.P_in == 0:
        return FIELD_OFF
    s = 1.0 if phi_sign > 0 else -1.0
    return MagneticFieldCommand(s * pulse.psi_in + psi_d, s * pulse.phi_in, pulse.P_in)


def constant_wave_command(t: float, pulse: PulseParams, psi_d: float = 0.0) -> MagneticFieldCommand:
    """Field command of the constant pulse wave; a function of ``t mod t_4`` only."""
    t1 = pulse.P_L
    t2 = t1 + pulse.t_off
    t3 = t2 + pulse.P_L
    tau = math.fmod(t, pulse.period)
    if tau < 0:
        tau += pulse.period
    if pulse.P_in == 0:
        return FIELD_OFF
    if tau < t1:
        return MagneticFieldCommand(pulse.psi_in + psi_d, pulse.phi_in, pulse.P_in)
    if t2 <= tau < t3:
        return MagneticFieldCommand(-pulse.psi_in + psi_d, -pulse.phi_in, pulse.P_in)
    return FIELD_OFF


def constant_wave_edges(t0: float, t1: float, pulse: PulseParams) -> np.ndarray:
    """Switching instants of the constant wave strictly inside ``(t0, t1)``."""
    period = pulse.period
    offsets = np.array([0.0, pulse.P_L, pulse.P_L + pulse.t_off, 2 * pulse.P_L + pulse.t_off])
    k0 = math.floor(t0 / period)
    out = []
    k = k0
    while k * period < t1:
        for off in offsets:
            e = k * period + off
            if t0 < e < t1:
                out.append(e)
        k += 1
    return np.unique(np.array(out))


def magnetic_impulse(t: np.ndarray, torque_norm: np.ndarray, window: tuple[float, float]) -> float:
    """Time integral of the torque magnitude over a pulse window.

    ``t`` and ``torque_norm`` are dense samples of ``|tau_m|`` (for example
    the cumulative-impulse channel differentiated, or direct evaluations).
    The integrand is resampled on the window by linear interpolation and
    integrated with the trapezoid rule.
    """
    t = np.asarray(t, float)
    f = np.asarray(torque_norm, float)
    a, b = window
    if b < a:
        raise ValueError("window end precedes its start")
    if t.size == 0 or t[0] > a + 1e-12 or t[-1] < b - 1e-12:
        raise WindowNotCovered(f"samples span [{t[0] if t.size else np.nan:.6g}, "
                               f"{t[-1] if t.size else np.nan:.6g}], window [{a:.6g}, {b:.6g}]")
    inside = (t > a) & (t < b)
    grid = np.concatenate([[a], t[inside], [b]])
    return float(integrate.trapezoid(np.interp(grid, t, f), grid))


def classify_regime(t: np.ndarray, q: np.ndarray, pulse: PulseParams, pulse_start: float,
                    step_window: tuple[float, float], fraction: float = 0.25) -> Regime | None:
    """Impact if coordinates barely move while the pulse is on, Impulsive otherwise.

    The change of each angle over the pulse is compared with its excursion
    (max minus min) over the whole step.  Right after heel strike the roll
    rate is high, so even a very short pulse sees the roll angle move by a
    sizeable fraction of its excursion; the default cut-off allows for that.  Returns ``None`` when no power is
    applied, since there is no pulse to classify.
    """
    if pulse.P_in == 0 or pulse.P_Area == 0:
        return None
    t = np.asarray(t, float)
    q = np.asarray(q, float)
    in_step = (t >= step_window[0]) & (t <= step_window[1])
    in_pulse = (t >= pulse_start) & (t <= pulse_start + pulse.P_L) & in_step
    if in_pulse.sum() < 2:
        raise WindowNotCovered("pulse window has fewer than two samples")
    excursion = np.ptp(q[in_step], axis=0)
    change = np.ptp(q[in_pulse], axis=0)
    mask = excursion > 0
    if not mask.any():
        return Regime.IMPACT
    rel = np.max(change[mask] / excursion[mask])
    return Regime.IMPACT if rel < fraction else Regime.IMPULSIVE


# -- program files -------------------------------------------------------------
#
#   scheme = HeelStrike
#   psi_in = -20       # deg
#   phi_in = 60        # deg
#   P_L = 40           # ms
#   P_Area = 10        # ms  (or P_in = 0.25)
#   t_off = 60         # ms
#   steer = 0 0; 36 90 # step_index psi_d(deg) pairs separated by ';'

def format_program(program: ActuationProgram) -> str:
    p = program.pulse
    lines = [
        f"scheme = {program.scheme.value}",
        f"psi_in = {np.rad2deg(p.psi_in):.10g}",
        f"phi_in = {np.rad2deg(p.phi_in):.10g}",
        f"P_L = {p.P_L * 1e3:.10g}",
        f"P_in = {p.P_in:.10g}",
        f"t_off = {p.t_off * 1e3:.10g}",
    ]
    if program.steering:
        lines.append("steer = " + "; ".join(f"{k} {np.rad2deg(v):.10g}" for k, v in program.steering))
    return "\n".join(lines) + "\n"


def parse_program(text: str) -> ActuationProgram:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rhs = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = rhs.strip()
    known = {"scheme", "psi_in", "phi_in", "P_L", "P_in", "P_Area", "t_off", "steer"}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(sorted(unknown))}")
    if "P_in" in values and "P_Area" in values:
        raise ValueError("give either P_in or P_Area, not both")
    try:
        P_L = float(values["P_L"]) * 1e-3
        if "P_Area" in values:
            P_in = float(values["P_Area"]) * 1e-3 / P_L
        else:
            P_in = float(values["P_in"])
        pulse = PulseParams(
            psi_in=np.deg2rad(float(values.get("psi_in", -20.0))),
            phi_in=np.deg2rad(float(values.get("phi_in", 60.0))),
            P_in=P_in, P_L=P_L,
            t_off=float(values.get("t_off", 0.0)) * 1e-3,
        )
        scheme = Scheme.parse(values["scheme"])
    except KeyError as exc:
        raise ValueError(f"missing key {exc.args[0]!r}") from None
    steering = []
    for chunk in values.get("steer", "").split(";"):
        if chunk.strip():
            k, v = chunk.split()
            steering.append((int(k), np.deg2rad(float(v))))
    return ActuationProgram(scheme, pulse, tuple(steering))


def load_program(path: str | Path) -> ActuationProgram:
    return parse_program(Path(path).read_text(encoding="utf-8"))
