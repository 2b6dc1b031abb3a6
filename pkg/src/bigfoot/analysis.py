"""Limit-cycle tools: Poincare section, fixed points, Floquet multipliers, gait classes.

The section is the pre-impact instant at which leg A is in stance and the
roll angle returns to zero from above, so one return of the map spans two
steps (A stance, then B stance).  Section points carry seven coordinates

    xi = (theta_1, theta_2, psi, theta_1_dot, theta_2_dot, phi_dot, psi_dot)

with ``phi = 0`` implied and the planar position dropped (the dynamics are
invariant under translation of the stance joint).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .actuation import ActuationProgram
from .dynamics import IntegratorConfig
from .kinematics import ContactState, GeneralizedState
from .params import RobotParams
from .simulation import (Terminal, Trajectory, hip_position, section_coordinates, simulate,
                         state_from_section)

SECTION_COORDS = ("theta1", "theta2", "psi", "theta1_dot", "theta2_dot", "phi_dot", "psi_dot")
# typical magnitudes used to weight section distances (rad and rad/s)
SECTION_SCALES = np.array([0.1, 0.1, 0.1, 10.0, 10.0, 10.0, 10.0])
DELTA_GRID = (0.01, 0.025, 0.05, 0.075, 0.1)


class NoConvergence(RuntimeError):
    """Fixed-point search exhausted its cycle budget."""


class LocomotionLost(RuntimeError):
    """The biped fell, stopped or walked backward while the map was iterated."""


class CycleLost(RuntimeError):
    """A perturbed cycle did not return to the section."""


class InsufficientData(ValueError):
    """Too few section crossings to classify a gait."""


@dataclass(frozen=True)
class SectionPoint:
    """One crossing of the section; ``xi`` follows :data:`SECTION_COORDS`."""

    xi: np.ndarray
    t: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).reshape(7)
        if not np.all(np.isfinite(xi)):
            raise ValueError("section point must be finite")
        if not xi[5] < 0:
            raise ValueError("section points require phi_dot < 0")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def from_state(cls, state: GeneralizedState, step_index: int = 0,
                   phi_tol: float = 1e-8) -> "SectionPoint":
        if state.contact is not ContactState.A_EDGE:
            raise ValueError("section states have leg A in edge contact")
        if abs(state.phi) >= phi_tol:
            raise ValueError(f"|phi| = {abs(state.phi):.3g} is off the section")
        return cls(section_coordinates(state), state.t, step_index)

    def to_state(self, params: RobotParams) -> GeneralizedState:
        return state_from_section(self.xi, self.t, params)


def weighted_norm(dx, scales=SECTION_SCALES) -> float:
    return float(np.linalg.norm(np.asarray(dx, float) / scales))


# -- section extraction ---------------------------------------------------------

def poincare_crossings(traj: Trajectory, phi_tol: float = 1e-8) -> list[SectionPoint]:
    """Pre-impact states with leg A in stance and phi reaching zero from above.

    The final state is included when the run stopped on the section.
    """
    out = []
    states = [(rec.state_minus, rec.index) for rec in traj.steps]
    if traj.terminal is Terminal.SECTION and traj.final_state is not None:
        states.append((traj.final_state, len(traj.steps) + 1))
    for st, k in states:
        if st.contact is ContactState.A_EDGE and abs(st.phi) < phi_tol and st.qdot[2] < 0:
            out.append(SectionPoint(section_coordinates(st), st.t, k))
    return out


# -- the return map ---------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    fp_tol: float = 1e-8
    max_cycles: int = 200
    newton_iters: int = 20
    fd_step: float = 1e-6
    delta_grid: tuple[float, ...] = DELTA_GRID
    zero_tol: float = 1e-6
    # "abs" uses |lambda| for the stability verdict, "real" uses |Re(lambda)|
    multiplier: str = "abs"
    cluster_tol: float = 1e-3
    n_max: int = 12
    min_steps: int = 60
    transient: int = 20
    cycle_time: float = 2.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    scales: tuple[float, ...] = tuple(SECTION_SCALES)

    def __post_init__(self):
        if self.multiplier not in ("abs", "real"):
            raise ValueError("multiplier must be 'abs' or 'real'")
        if not self.delta_grid or min(self.delta_grid) <= 0:
            raise ValueError("delta_grid must hold positive values")


def return_map(point: SectionPoint, program: ActuationProgram | None, params: RobotParams,
               cfg: AnalysisConfig = AnalysisConfig()) -> tuple[SectionPoint, float]:
    """Apply the impact at ``point`` and integrate to the next section crossing.

    Returns the new point and the uphill hip displacement over the cycle.
    Raises :class:`CycleLost` if the biped falls, stops or runs out of time.
    """
    state = point.to_state(params)
    traj = simulate(state, program, params, point.t + cfg.cycle_time, cfg.integrator,
                    max_sections=1, initial_impact=True, record=False)
    if traj.terminal is not Terminal.SECTION:
        raise CycleLost(f"cycle from t={point.t:.6g} ended with {traj.terminal.value}")
    end = traj.final_state
    # the shaft centre is continuous through impacts, so no re-referencing is needed
    shift = float(hip_position(end, params)[0] - hip_position(state, params)[0])
    return SectionPoint(section_coordinates(end), end.t, point.step_index + len(traj.steps)), shift


def _map_fn(program, params, cfg, t0):
    def P(xi):
        nxt, _ = return_map(SectionPoint(xi, t0), program, params, cfg)
        return nxt.xi
    return P


def find_fixed_point(program: ActuationProgram | None, params: RobotParams, init: SectionPoint,
                     cfg: AnalysisConfig = AnalysisConfig()) -> SectionPoint:
    """Fixed point of the return map by iteration, then a quasi-Newton polish.

    With the heel-strike scheme the map is autonomous.  The constant pulse
    wave makes it depend on the crossing time; iteration then follows the
    natural phase and the polish keeps the start time of the last iterate.
    """
    scales = np.asarray(cfg.scales)
    point = init
    shifts = []
    best = (math.inf, init)
    for _ in range(cfg.max_cycles):
        try:
            nxt, shift = return_map(point, program, params, cfg)
        except CycleLost as exc:
            raise LocomotionLost(str(exc)) from None
        shifts.append(shift)
        err = weighted_norm(nxt.xi - point.xi, scales)
        if err < best[0]:
            best = (err, point)
        if err < cfg.fp_tol:
            _check_forward(shifts)
            return point
        point = nxt
    # quasi-Newton on F(xi) = P(xi) - xi from the best iterate
    t0 = best[1].t
    P = _map_fn(program, params, cfg, t0)

    def F(z):
        xi = z * scales
        try:
            return (P(xi) - xi) / scales
        except (CycleLost, ValueError):
            return np.full(7, 1e3)

    sol = optimize.root(F, best[1].xi / scales, method="hybr",
                        options={"xtol": 1e-12, "maxfev": cfg.newton_iters * 8, "eps": cfg.fd_step})
    xi = sol.x * scales
    if xi[5] < 0 and np.linalg.norm(F(sol.x)) < cfg.fp_tol:
        _check_forward(shifts)
        return SectionPoint(xi, t0, best[1].step_index)
    raise NoConvergence(f"no fixed point within {cfg.max_cycles} cycles "
                        f"(best residual {best[0]:.3g})")


def _check_forward(shifts: Sequence[float], window: int = 10) -> None:
    tail = shifts[-window:]
    if tail and float(np.mean(tail)) < 0:
        raise LocomotionLost("walking backward")


# -- Floquet multipliers ------------------------------------------------------------

def fd_jacobian(P: Callable[[np.ndarray], np.ndarray], xi: np.ndarray, delta: float,
                zero_tol: float = 1e-6, scales=SECTION_SCALES,
                base: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian of a section map with relative perturbations.

    Coordinate ``n`` is scaled by ``1 + delta``; when ``|xi_n| < zero_tol`` the
    perturbation falls back to ``delta * scales[n]``.  ``base`` is ``P(xi)``
    when already known.
    """
    xi = np.asarray(xi, float)
    f0 = P(xi) if base is None else np.asarray(base, float)
    J = np.empty((xi.size, xi.size))
    for n in range(xi.size):
        step = delta * xi[n] if abs(xi[n]) >= zero_tol else delta * scales[n]
        x = xi.copy()
        x[n] += step
        J[:, n] = (P(x) - f0) / step
    return J


def multipliers_of(eigs: np.ndarray, mode: str = "abs") -> np.ndarray:
    return np.abs(eigs) if mode == "abs" else np.abs(eigs.real)


@dataclass(frozen=True)
class StabilityReport:
    fixed_point: SectionPoint
    multipliers: list[tuple[float, complex]]
    avg_max_multiplier: float
    classification: "GaitClass"
    delta_grid: tuple[float, ...]
    spectra: dict[float, np.ndarray] = field(default_factory=dict)
    mode: str = "abs"

    @property
    def stable(self) -> bool:
        return self.avg_max_multiplier < 1.0

    def to_json(self) -> str:
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]
        doc = {
            "fixed_point": {"xi": dict(zip(SECTION_COORDS, map(float, self.fixed_point.xi))),
                            "t": self.fixed_point.t, "step_index": self.fixed_point.step_index},
            "mode": self.mode,
            "delta_grid": list(self.delta_grid),
            "multipliers": [{"rho": float(r), "abs": float(abs(z)), "abs_real": float(abs(z.real)),
                             "lambda": cplx(z)} for r, z in self.multipliers],
            "spectra": {f"{d:g}": [cplx(z) for z in s] for d, s in self.spectra.items()},
            "max_per_delta": {f"{d:g}": float(multipliers_of(s, self.mode).max())
                              for d, s in self.spectra.items()},
            "avg_max_multiplier": self.avg_max_multiplier,
            "classification": str(self.classification),
            "verdict": "stable" if self.stable else "unstable",
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StabilityReport":
        doc = json.loads(text)
        fp = doc["fixed_point"]
        point = SectionPoint([fp["xi"][k] for k in SECTION_COORDS], fp["t"], fp["step_index"])
        mults = [(m["rho"], complex(*m["lambda"])) for m in doc["multipliers"]]
        spectra = {float(d): np.array([complex(*z) for z in s]) for d, s in doc["spectra"].items()}
        return cls(point, mults, doc["avg_max_multiplier"], GaitClass.parse(doc["classification"]),
                   tuple(doc["delta_grid"]), spectra, doc["mode"])


def floquet_from_map(P: Callable[[np.ndarray], np.ndarray], xi_star, delta_grid=DELTA_GRID,
                     zero_tol: float = 1e-6, scales=SECTION_SCALES, mode: str = "abs"):
    """Per-delta eigenvalues and the average of the per-delta maximum multiplier."""
    xi_star = np.asarray(xi_star, float)
    base = P(xi_star)
    spectra = {}
    for d in delta_grid:
        J = fd_jacobian(P, xi_star, d, zero_tol, scales, base)
        eigs = np.linalg.eigvals(J)
        spectra[float(d)] = eigs[np.argsort(-np.abs(eigs))]
    avg = float(np.mean([multipliers_of(s, mode).max() for s in spectra.values()]))
    return spectra, avg


def floquet_multipliers(program: ActuationProgram | None, params: RobotParams,
                        xi_star: SectionPoint, cfg: AnalysisConfig = AnalysisConfig(),
                        classification: "GaitClass | None" = None) -> StabilityReport:
    """Finite-difference Floquet multipliers of the return map at ``xi_star``."""
    P = _map_fn(program, params, cfg, xi_star.t)

    def guarded(xi):
        try:
            return P(xi)
        except ValueError as exc:  # perturbed state left the section half-space
            raise CycleLost(str(exc)) from None

    spectra, avg = floquet_from_map(guarded, xi_star.xi, cfg.delta_grid, cfg.zero_tol,
                                    np.asarray(cfg.scales), cfg.multiplier)
    first = spectra[float(cfg.delta_grid[0])]
    mults = [(float(r), complex(z)) for r, z in zip(multipliers_of(first, cfg.multiplier), first)]
    cls = classification if classification is not None else GaitClass(GaitKind.PERIOD1)
    return StabilityReport(xi_star, mults, avg, cls, tuple(cfg.delta_grid), spectra,
                           cfg.multiplier)


# -- gait classification ----------------------------------------------------------

class GaitKind(enum.Enum):
    PERIOD1 = "Period1"
    PERIOD_N = "PeriodN"
    QUASI_PERIODIC = "QuasiPeriodic"
    NON_PERIODIC = "NonPeriodic"
    BACKWARD = "Backward"
    FALLEN = "Fallen"


@dataclass(frozen=True)
class GaitClass:
    kind: GaitKind
    n: int = 1

    def __post_init__(self):
        if self.kind is GaitKind.PERIOD_N and self.n < 2:
            raise ValueError("PeriodN requires n >= 2")
        if self.kind is GaitKind.PERIOD1 and self.n != 1:
            raise ValueError("Period1 has n = 1")

    def __str__(self) -> str:
        if self.kind is GaitKind.PERIOD_N:
            return f"Period{self.n}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "GaitClass":
        text = text.strip()
        for kind in GaitKind:
            if kind is not GaitKind.PERIOD_N and text == kind.value:
                return cls(kind)
        if text.startswith("Period") and text[6:].isdigit():
            n = int(text[6:])
            return cls(GaitKind.PERIOD1) if n == 1 else cls(GaitKind.PERIOD_N, n)
        raise ValueError(f"unknown gait class {text!r}")

    @property
    def periodic(self) -> bool:
        return self.kind in (GaitKind.PERIOD1, GaitKind.PERIOD_N)


def _as_matrix(crossings) -> np.ndarray:
    return np.array([c.xi if isinstance(c, SectionPoint) else np.asarray(c, float)
                     for c in crossings], dtype=float).reshape(-1, 7)


def period_of(X: np.ndarray, cluster_tol: float, n_max: int, scales=SECTION_SCALES) -> int | None:
    """Smallest n whose residue classes each fit in a ball of radius ``cluster_tol``."""
    Z = X / scales
    for n in range(1, n_max + 1):
        if Z.shape[0] < 2 * n:
            break
        ok = True
        for r in range(n):
            pts = Z[r::n]
            if np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)) >= cluster_tol:
                ok = False
                break
        if ok:
            return n
    return None


def _closed_curve(psi: np.ndarray, max_gap: float = 0.25, min_ratio: float = 0.2) -> bool:
    """Whether the return map (psi_k, psi_k+1) traces a closed curve.

    The points are whitened; on an invariant circle the polar angle about the
    centroid advances monotonically from one iterate to the next, the points
    stay away from the centre, and sorted by angle they leave no large gaps.
    """
    P = np.column_stack([psi[:-1], psi[1:]])
    P = P - P.mean(axis=0)
    cov = np.cov(P.T)
    w, V = np.linalg.eigh(cov)
    if w.min() <= 1e-14 * max(w.max(), 1e-300):
        return False
    Z = (P @ V) / np.sqrt(w)
    r = np.linalg.norm(Z, axis=1)
    if r.min() < min_ratio * r.max():
        return False
    ang = np.arctan2(Z[:, 1], Z[:, 0])
    step = np.angle(np.exp(1j * np.diff(ang)))
    if not (np.all(step > 0) or np.all(step < 0)):
        return False
    srt = np.sort(ang)
    gaps = np.diff(np.concatenate([srt, [srt[0] + 2 * np.pi]]))
    return bool(gaps.max() < max_gap * 2 * np.pi)


def classify_gait(crossings, cfg: AnalysisConfig = AnalysisConfig()) -> GaitClass:
    """Period-n, quasi-periodic or non-periodic from section crossings."""
    X = _as_matrix(crossings)
    X = X[cfg.transient:]
    if X.shape[0] < cfg.min_steps:
        raise InsufficientData(f"{X.shape[0]} crossings after the transient, "
                               f"need {cfg.min_steps}")
    n = period_of(X, cfg.cluster_tol, cfg.n_max, np.asarray(cfg.scales))
    if n == 1:
        return GaitClass(GaitKind.PERIOD1)
    if n is not None:
        return GaitClass(GaitKind.PERIOD_N, n)
    if _closed_curve(X[:, 2]):
        return GaitClass(GaitKind.QUASI_PERIODIC)
    return GaitClass(GaitKind.NON_PERIODIC)


# -- travel ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TravelMetrics:
    velocity: float  # mm/s
    stride: float  # mm
    n_steps: int
    distance: float  # mm
    duration: float  # s

    @property
    def stationary(self) -> bool:
        return self.n_steps == 0


def travel_summary(distance_mm: float, duration: float, n_steps: int) -> TravelMetrics:
    """Velocity is distance over duration, stride is distance per step (0 without steps)."""
    velocity = distance_mm / duration if duration > 0 else 0.0
    stride = distance_mm / n_steps if n_steps > 0 else 0.0
    return TravelMetrics(velocity, stride, n_steps, distance_mm, duration)


def travel_metrics(traj: Trajectory, horizon: float = 10.0, direction=(1.0, 0.0)) -> TravelMetrics:
    """Hip displacement along ``direction`` (uphill by default) over the horizon.

    Uses the stance-shaft centre at the start and at the last impact inside
    the horizon, so partial steps at the end are not counted.
    """
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    t0 = traj.t_start
    t1 = min(traj.t_end, t0 + horizon)
    steps = [s for s in traj.steps if s.t <= t1 + 1e-12]
    if not steps or traj.initial_state is None:
        return travel_summary(0.0, t1 - t0, 0)
    start = hip_position(traj.initial_state, traj.params)
    dist = float((steps[-1].hip - start) @ d) * 1e3
    return travel_summary(dist, t1 - t0, len(steps))
