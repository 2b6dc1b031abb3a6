"""Acceptance criteria 1-11, each reporting one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary.  Criteria 5-7, 10 and 11 share one full dual-scheme
sweep, computed once per session.
"""

import time
import warnings

import numpy as np
import pytest

from bigfoot import (ActuationProgram, ContactState, GeneralizedState, IntegratorConfig,
                     PulseParams, Scheme, default_params)
from bigfoot import harness
from bigfoot.analysis import (AnalysisConfig, CycleLost, GaitKind, SectionPoint, floquet_from_map,
                              return_map, weighted_norm)
from bigfoot.cli import main as cli_main
from bigfoot.dynamics import FIELD_OFF, EventKind, step_continuous, total_energy
from bigfoot.impact import impact_map
from bigfoot.kinematics import consistent_rates

from conftest import random_state
from oracles import mass_matrix_error, random_pre_impact, striking_contact_velocity

pytestmark = pytest.mark.slow

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


SCHEMES = (Scheme.HEEL_STRIKE, Scheme.CONSTANT_PULSE_WAVE)


@pytest.fixture(scope="session")
def sweep():
    """Full 3 x 5 grid for both schemes with the shipped parameters."""
    params = default_params()
    out = {"params": params, "cells": {}, "text": {}, "spec": {}}
    t0 = time.perf_counter()
    for scheme in SCHEMES:
        spec = harness.SweepSpec(scheme)
        cells = harness.run_sweep(spec, params)
        out["spec"][scheme] = spec
        out["cells"][scheme] = cells
        out["text"][scheme] = harness.emit_results(
            cells, meta=harness.provenance(params, spec, seed=None))
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_criterion_01_energy_conservation():
    params = default_params(c_r1=0.0, c_r2=0.0, c_f1=0.0)
    cfg = IntegratorConfig(curve_contact=False)
    # single support on the foot sphere: the mass centre hangs below its centre
    q = np.array([0.3, -0.2, 0.6, 0.4, 0.0, 0.0])
    s0 = GeneralizedState(q, consistent_rates(q, [2.0, -1.0, 0.5, 3.0], ContactState.A_CURVE, params),
                          ContactState.A_CURVE)
    step_continuous(s0, FIELD_OFF, params, cfg, t_stop=0.01, detect_heel=False)  # compile
    t0 = time.perf_counter()
    seg, ev, _ = step_continuous(s0, FIELD_OFF, params, cfg, t_stop=1.0, detect_heel=False)
    runtime = time.perf_counter() - t0
    E0 = total_energy(s0, params)
    drift = max(abs(total_energy(seg.state_at(k, params), params) - E0) for k in range(seg.t.size))
    rel = drift / abs(E0)
    ok = ev.kind is EventKind.TIME_EXPIRED and rel < 1e-6 and runtime < 5.0
    report(1, ok, f"relative drift {rel:.2e} over {ev.t:.3f} s, runtime {runtime:.3f} s")


def test_criterion_02_mass_matrix_oracle():
    params = default_params()
    rng = np.random.default_rng(2)
    errs = [mass_matrix_error(random_state(rng, params=params, consistent=False), params)
            for _ in range(100)]
    report(2, max(errs) < 1e-6, f"max scaled |M - Hessian(T)| {max(errs):.2e} on 100 states")


def test_criterion_03_impact_properties():
    params = default_params()
    rng = np.random.default_rng(3)
    worst_loss, worst_res = np.inf, 0.0
    for _ in range(1000):
        s = random_pre_impact(rng, params)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = impact_map(s, params)
        v = striking_contact_velocity(s.q, res.detail.qdot_plus, s.contact, params)
        worst_loss = min(worst_loss, res.ke_loss)
        worst_res = max(worst_res, np.abs(v).max() / (params.H_B * np.abs(s.qdot[:4]).max()))
    zero = [impact_map(GeneralizedState.at_rest(c), params) for c in (ContactState.A_EDGE,
                                                                        ContactState.B_EDGE)]
    zero_ok = all(not r.state_plus.qdot.any() and r.ke_loss == 0.0 for r in zero)
    ok = worst_loss >= -1e-12 and worst_res < 1e-10 and zero_ok
    report(3, ok, f"min ke_loss {worst_loss:.2e} J, max contact residual {worst_res:.2e}, "
                  f"zero in -> zero out: {zero_ok}")


def test_criterion_04_floquet_oracle():
    from test_analysis import EIGS, XI_STAR, affine_map
    P, _ = affine_map(EIGS, seed=11)
    spectra, _ = floquet_from_map(P, XI_STAR)
    want = np.sort(np.abs(np.array(EIGS, dtype=complex)))
    err = max(np.abs(np.sort(np.abs(s)) - want).max() for s in spectra.values())
    report(4, err < 1e-3, f"max ||lambda| error| {err:.2e} over {len(spectra)} perturbation sizes")


def _returns(cell, params, n_cycles=30):
    """Iterate the map from a 1% perturbation; distance to the fixed point per cycle."""
    fp = cell.fixed_point
    program = harness.SweepSpec(Scheme.HEEL_STRIKE).program(cell.P_L, cell.P_Area)
    p = params.replace(beta=cell.beta)
    cfg = AnalysisConfig()
    point = SectionPoint(fp.xi * 1.01, fp.t, fp.step_index)
    dist = []
    for _ in range(n_cycles):
        try:
            point, _ = return_map(point, program, p, cfg)
        except (CycleLost, ValueError):
            dist.append(np.inf)
            break
        dist.append(weighted_norm(point.xi - fp.xi))
    return dist


def test_criterion_05_stability_consistency(sweep):
    params = sweep["params"]
    fp_tol = AnalysisConfig().fp_tol
    lines, ok = [], True
    checked = 0
    for scheme in SCHEMES:
        for c in sweep["cells"][scheme]:
            if c.gait.kind is not GaitKind.PERIOD1 or c.fixed_point is None:
                continue
            rho = c.avg_max_multiplier
            if not (rho < 0.9 or rho > 1.1):
                continue
            assert scheme is Scheme.HEEL_STRIKE
            checked += 1
            dist = _returns(c, params)
            returned = min(dist) < fp_tol
            good = returned if rho < 0.9 else not returned
            ok &= good
            if not good:
                lines.append(f"{c.P_L * 1e3:g}/{c.P_Area * 1e3:g} ms at "
                             f"{np.rad2deg(c.beta):.1f} deg (rho {rho:.3f}, "
                             f"distance after 30 cycles {dist[-1]:.1e})")
    ok &= checked > 0
    detail = f"{checked} cells checked, {len(lines)} inconsistent"
    if lines:
        detail += ": " + "; ".join(lines[:4]) + (" ..." if len(lines) > 4 else "")
    report(5, ok, detail)


def test_criterion_06_scheme_comparison(sweep):
    res = {s: harness.max_slopes(sweep["cells"][s])[(0.04, 0.01)] for s in SCHEMES}
    hs, cpw = res[Scheme.HEEL_STRIKE].beta_max, res[Scheme.CONSTANT_PULSE_WAVE].beta_max

    def deg(b):
        return "none" if b is None else f"{np.rad2deg(b):.1f} deg"

    ordered = cpw is not None and (hs is None or cpw > hs)
    fast = sweep["elapsed"] < 30 * 60
    report(6, ordered and fast, f"beta_max constant wave {deg(cpw)} vs heel strike {deg(hs)} "
                                f"at 40/10 ms; sweep time {sweep['elapsed'] / 60:.1f} min")


def test_criterion_07_cpw_stride_trend(sweep):
    bad, multi = [], 0
    for key, ladder in harness.ladders(sweep["cells"][Scheme.CONSTANT_PULSE_WAVE]).items():
        walking = [c for c in ladder if c.terminal is harness.CellTerminal.WALKING]
        strides = [c.stride for c in walking]
        multi += len(walking) >= 2
        if any(b > a for a, b in zip(strides, strides[1:])):
            bad.append(f"{key[0] * 1e3:g}/{key[1] * 1e3:g}")
    report(7, not bad, f"{len(bad)} ladders with increasing stride; "
                       f"{multi} ladders have two or more walking rungs")


def test_criterion_08_travel_magnitudes(sweep):
    walking = [c for c in sweep["cells"][Scheme.HEEL_STRIKE]
               if c.terminal is harness.CellTerminal.WALKING]
    best = max(walking, key=lambda c: c.velocity)
    v_ok = 50.0 / 3 <= best.velocity <= 150.0
    s_ok = 8.0 / 3 <= best.stride <= 24.0
    report(8, v_ok and s_ok, f"best heel-strike cell {best.P_L * 1e3:g}/{best.P_Area * 1e3:g} ms "
                             f"at {np.rad2deg(best.beta):.1f} deg: {best.velocity:.1f} mm/s, "
                             f"stride {best.stride:.2f} mm")


def test_criterion_09_maneuvers():
    params = default_params()
    program = ActuationProgram(Scheme.HEEL_STRIKE, PulseParams.from_area(0.04, 0.01))
    sq = harness.run_maneuver(harness.example_maneuver("square"), program, params)
    ratio = sq.closure_error / sq.path_length
    circle = harness.example_maneuver("circle")
    commanded = np.rad2deg(circle.schedule()[-1])
    ci = harness.run_maneuver(circle, program, params)
    realized = np.rad2deg(ci.realized_heading_change())
    ok = ratio < 0.15 and abs(commanded - 360) <= 5 and abs(realized - commanded) <= 0.2 * commanded
    report(9, ok, f"square closure {100 * ratio:.1f}% of {sq.path_length * 1e3:.0f} mm; circle "
                  f"commanded {commanded:.1f} deg, realized {realized:.1f} deg")


def test_criterion_10_section_discipline(sweep):
    phi = np.vstack([c.section_phi for s in SCHEMES for c in sweep["cells"][s]])
    bad = int(np.sum((np.abs(phi[:, 0]) >= 1e-8) | (phi[:, 1] >= 0)))
    report(10, bad == 0 and len(phi) > 0,
           f"{len(phi)} section points, {bad} violations, max |phi| {np.abs(phi[:, 0]).max():.1e}")


def test_criterion_11_determinism(sweep, tmp_path, capsys):
    same = []
    for scheme in SCHEMES:
        out = tmp_path / f"{scheme.value}.csv"
        assert cli_main(["sweep", "--scheme", scheme.value, "--out", str(out)]) == 0
        same.append(out.read_bytes() == sweep["text"][scheme].encode("utf-8"))
    capsys.readouterr()
    report(11, all(same), "repeated sweeps byte-identical: "
                          + ", ".join(f"{s.value} {ok}" for s, ok in zip(SCHEMES, same)))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
