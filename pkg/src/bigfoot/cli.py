"""Command line: ``bigfoot simulate | sweep | stability | maneuver | coil-export``.

Angles are given in degrees and durations in milliseconds (simulated spans
in seconds); everything is converted to SI radians internally.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness
from .actuation import ActuationProgram, PulseParams, Scheme, format_program, load_program
from .dynamics import IntegratorConfig
from .params import default_params, load_params
from .simulation import run_program


def _program_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("actuation")
    g.add_argument("--program", type=Path, help="program file (overrides the flags below)")
    g.add_argument("--scheme", default="HeelStrike", help="HeelStrike or ConstantPulseWave")
    g.add_argument("--P-L", dest="P_L", type=float, default=40.0, help="pulse length, ms")
    g.add_argument("--P-area", dest="P_Area", type=float, default=10.0, help="pulse area, ms")
    g.add_argument("--psi-in", type=float, default=-20.0, help="field yaw, deg")
    g.add_argument("--phi-in", type=float, default=60.0, help="field elevation, deg")
    g.add_argument("--t-off", type=float, default=60.0, help="constant-wave gap, ms")


def _common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", type=Path, help="parameter file (default: shipped set)")
    p.add_argument("--friction-eps", type=float, default=IntegratorConfig.friction_eps,
                   help="sign-function smoothing width, rad/s")


def _program(a) -> ActuationProgram:
    if a.program is not None:
        return load_program(a.program)
    pulse = PulseParams.from_area(a.P_L * 1e-3, a.P_Area * 1e-3, np.deg2rad(a.psi_in),
                                  np.deg2rad(a.phi_in), a.t_off * 1e-3)
    return ActuationProgram(Scheme.parse(a.scheme), pulse)


def _params(a, slope_deg: float | None = None):
    params = load_params(a.params) if a.params else default_params()
    if slope_deg is not None:
        params = params.replace(beta=float(np.deg2rad(slope_deg)))
    return params


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            out.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise harness.ResultsIOError(f"cannot write {out}: {exc}") from exc


def cmd_simulate(a) -> int:
    params, program = _params(a, a.slope), _program(a)
    cfg = IntegratorConfig(friction_eps=a.friction_eps, sample_dt=a.sample_dt * 1e-3)
    traj = run_program(program, params, a.t_end, cfg, record=a.out is not None)
    if a.out is not None:
        harness.emit_results(traj, a.out)
    m = analysis.travel_metrics(traj, horizon=a.t_end)
    summary = {"terminal": traj.terminal.value, "steps": traj.n_steps,
               "velocity_mm_s": round(m.velocity, 6), "stride_mm": round(m.stride, 6),
               "program": format_program(program)}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sweep(a) -> int:
    params = _params(a)
    spec = harness.SweepSpec(
        Scheme.parse(a.scheme), tuple(v * 1e-3 for v in a.P_L), tuple(v * 1e-3 for v in a.P_Area),
        slope_start=float(np.deg2rad(a.slope_start)), slope_step=float(np.deg2rad(a.slope_step)),
        psi_m=float(np.deg2rad(a.psi_m)), phi_m=float(np.deg2rad(a.phi_m)), t_off=a.t_off * 1e-3,
        cell_time=a.cell_time, max_slope=float(np.deg2rad(a.max_slope)),
        warm_start=not a.cold, stability=not a.no_stability)
    cfg = IntegratorConfig(friction_eps=a.friction_eps)
    cells = harness.run_sweep(spec, params, cfg, workers=a.workers)
    meta = harness.provenance(params, spec, seed=None)
    text = harness.format_cells(cells, meta)
    _write(text, a.out)
    if a.out is not None:
        for (P_L, P_Area), res in harness.max_slopes(cells).items():
            b = "none" if res.beta_max is None else f"{np.rad2deg(res.beta_max):.1f} deg"
            lim = res.limiting.value if res.limiting else "ladder top"
            print(f"P_L {P_L * 1e3:g} ms, P_Area {P_Area * 1e3:g} ms: beta_max {b} ({lim})")
    return 0


def cmd_stability(a) -> int:
    params, program = _params(a, a.slope), _program(a)
    acfg = analysis.AnalysisConfig(integrator=IntegratorConfig(friction_eps=a.friction_eps))
    traj = run_program(program, params, a.warmup, acfg.integrator, record=False)
    crossings = analysis.poincare_crossings(traj)
    if not crossings:
        print(f"no section crossing during warm-up ({traj.terminal.value})", file=sys.stderr)
        return 1
    fp = analysis.find_fixed_point(program, params, crossings[-1], acfg)
    report = analysis.floquet_multipliers(program, params, fp, acfg)
    meta = harness.provenance(params, program=format_program(program),
                              slope_deg=a.slope, seed=None)
    _write(harness.emit_results(report, meta=meta), a.out)
    return 0


def cmd_maneuver(a) -> int:
    params, program = _params(a), _program(a)
    if a.script is not None:
        script = harness.ManeuverScript.parse(a.script.read_text(encoding="utf-8"))
    else:
        script = harness.example_maneuver(a.example)
    cfg = IntegratorConfig(friction_eps=a.friction_eps)
    status = 0
    try:
        res = harness.run_maneuver(script, program, params, cfg,
                                   max_turn_step=float(np.deg2rad(a.max_turn_step)))
    except harness.ManeuverAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        res, status = exc.result, 2
    meta = harness.provenance(params, program=format_program(program), script=script.format())
    _write(harness.emit_results(res, meta=meta), a.out)
    if a.out is not None and res.path.size:
        print(f"path length {res.path_length * 1e3:.1f} mm, closure {res.closure_error * 1e3:.1f} mm, "
              f"heading change {np.rad2deg(res.realized_heading_change()):.1f} deg")
    return status


def cmd_coil_export(a) -> int:
    params, program = _params(a), _program(a)
    rows = harness.coil_series(program, params, a.duration, a.dt * 1e-3, tuple(a.gains))
    meta = harness.provenance(program=format_program(program), gains=list(a.gains))
    _write(harness.emit_results(rows, meta=meta), a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bigfoot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="run one program and write the trajectory")
    _common_args(s)
    _program_args(s)
    s.add_argument("--slope", type=float, default=0.0, help="deg")
    s.add_argument("--t-end", type=float, default=5.0, help="simulated time, s")
    s.add_argument("--sample-dt", type=float, default=0.0, help="output spacing, ms (0: steps)")
    s.add_argument("--out", type=Path, help="trajectory CSV")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="slope-ladder sweep over P_L x P_Area")
    _common_args(w)
    w.add_argument("--scheme", default="HeelStrike")
    w.add_argument("--P-L", dest="P_L", type=float, nargs="+",
                   default=[v * 1e3 for v in harness.GRID_P_L], help="ms")
    w.add_argument("--P-area", dest="P_Area", type=float, nargs="+",
                   default=[v * 1e3 for v in harness.GRID_P_AREA], help="ms")
    w.add_argument("--slope-start", type=float, default=0.0, help="deg")
    w.add_argument("--slope-step", type=float, default=0.5, help="deg")
    w.add_argument("--max-slope", type=float, default=20.0, help="deg")
    w.add_argument("--psi-m", type=float, default=-20.0, help="deg")
    w.add_argument("--phi-m", type=float, default=60.0, help="deg")
    w.add_argument("--t-off", type=float, default=60.0, help="ms")
    w.add_argument("--cell-time", type=float, default=30.0, help="simulated time per cell, s")
    w.add_argument("--cold", action="store_true", help="start every rung from rest")
    w.add_argument("--no-stability", action="store_true", help="skip Floquet analysis")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--out", type=Path, help="cells CSV (default stdout)")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("stability", help="fixed point and Floquet multipliers")
    _common_args(t)
    _program_args(t)
    t.add_argument("--slope", type=float, default=0.0, help="deg")
    t.add_argument("--warmup", type=float, default=10.0, help="simulated time before the search, s")
    t.add_argument("--out", type=Path, help="report JSON (default stdout)")
    t.set_defaults(func=cmd_stability)

    m = sub.add_parser("maneuver", help="run a FWD/TURN/TURNSTEP script")
    _common_args(m)
    _program_args(m)
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--script", type=Path)
    src.add_argument("--example", choices=harness.EXAMPLE_MANEUVERS)
    m.add_argument("--max-turn-step", type=float, default=float(np.rad2deg(harness.MAX_TURN_STEP)),
                   help="largest heading change per step when executing TURN, deg")
    m.add_argument("--out", type=Path, help="path CSV (default stdout)")
    m.set_defaults(func=cmd_maneuver)

    c = sub.add_parser("coil-export", help="coil drive values of a program over time")
    _common_args(c)
    _program_args(c)
    c.add_argument("--duration", type=float, default=1.0, help="s")
    c.add_argument("--dt", type=float, default=1.0, help="ms")
    c.add_argument("--gains", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("K_X", "K_Y", "K_Z"))
    c.add_argument("--out", type=Path, help="CSV (default stdout)")
    c.set_defaults(func=cmd_coil_export)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.func(a)
    except (ValueError, OSError, analysis.NoConvergence, analysis.LocomotionLost) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
