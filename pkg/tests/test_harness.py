import json
import math

import numpy as np
import pytest

from bigfoot import ActuationProgram, MagneticFieldCommand, PulseParams, Scheme, default_params
from bigfoot.analysis import GaitClass, GaitKind
from bigfoot.cli import main
from bigfoot.harness import (CELL_COLUMNS, EXAMPLE_MANEUVERS, CellTerminal, Limiting,
                             ManeuverAborted, ManeuverScript, ResultsIOError, SweepCell, SweepSpec,
                             coil_series, coil_voltages, emit_results, example_maneuver,
                             format_cells, max_slope, parse_cells, read_cells, run_ladder,
                             run_maneuver, run_sweep, slope_summary)

HS = ActuationProgram(Scheme.HEEL_STRIKE, PulseParams.from_area(0.04, 0.01))


@pytest.mark.parametrize("phi, psi, gains, expected", [
    (90, 0, (1, 1, 2), (0.0, 0.0, 2.0)),
    (0, 0, (3, 1, 1), (3.0, 0.0, 0.0)),
    (60, 20, (1, 1, 1), (0.4698, 0.1710, 0.8660)),
])
def test_coil_voltages(phi, psi, gains, expected):
    cmd = MagneticFieldCommand(np.deg2rad(psi), np.deg2rad(phi), 1.0)
    assert tuple(coil_voltages(cmd, *gains)) == pytest.approx(expected, abs=5e-5)


def test_coil_voltages_direct_evaluation():
    cmd = MagneticFieldCommand(np.deg2rad(20), np.deg2rad(60), 0.7)
    d = coil_voltages(cmd, 1, 2, 3)
    c60, s60, c20, s20 = np.cos(np.pi / 3), np.sin(np.pi / 3), np.cos(np.pi / 9), np.sin(np.pi / 9)
    assert d == pytest.approx((0.7 * c60 * c20, 1.4 * c60 * s20, 2.1 * s60), rel=1e-14)


def test_constant_wave_coil_series(params):
    prog = ActuationProgram(Scheme.CONSTANT_PULSE_WAVE,
                            PulseParams.from_area(0.04, 0.01, np.deg2rad(-20), np.deg2rad(60), 0.06))
    rows = coil_series(prog, params, 0.2, 0.01)
    assert rows.shape == (21, 4)
    on = coil_voltages(MagneticFieldCommand(np.deg2rad(-20), np.deg2rad(60), 0.25))
    np.testing.assert_allclose(rows[1, 1:], on, atol=1e-15)
    np.testing.assert_array_equal(rows[7, 1:], 0.0)  # t = 70 ms is in the gap
    assert rows[12, 3] < 0  # mirrored half-cycle


def test_heel_strike_coil_series_has_pulses(params):
    rows = coil_series(HS, params, 0.5, 0.001)
    assert np.any(rows[:, 3] > 0) and np.any(rows[:, 3] < 0)
    assert np.any(np.all(rows[:, 1:] == 0.0, axis=1))


def test_coil_series_rejects_bad_step(params):
    with pytest.raises(ValueError):
        coil_series(HS, params, 1.0, 0.0)


def test_script_parse_and_format():
    s = ManeuverScript.parse("FWD 36  # straight\n\nturn 90\nTURNSTEP 4 5\nFWD 2\nTURNSTEP\n")
    assert ManeuverScript.parse(s.format()) == s
    assert len(s.instructions) == 5


@pytest.mark.parametrize("text", ["FWD\n", "FWD 0\n", "JUMP 3\n", "TURN left\n", "FWD 2 3\n"])
def test_script_errors(text):
    with pytest.raises(ValueError, match="line 1"):
        ManeuverScript.parse(text)


def test_schedule_turns_spread_and_exact():
    s = ManeuverScript.parse("FWD 2\nTURN 90\nFWD 1\nTURN -12\nFWD 1\n")
    sched = s.schedule()
    assert sched.size == 2 + 18 + 1 + 3 + 1
    assert np.all(np.abs(np.diff(sched)) <= np.deg2rad(5.0) + 1e-15)
    assert sched[20] == np.deg2rad(90.0)
    assert sched[-1] == np.deg2rad(90.0) + np.deg2rad(-12.0)
    # without spreading a TURN only changes the heading of the next steps
    np.testing.assert_array_equal(s.schedule(None), [0, 0, np.deg2rad(90), np.deg2rad(78)])


def test_schedule_heading_bookkeeping_exact():
    script = example_maneuver("circle")
    incs = [np.deg2rad(4.0), np.deg2rad(5.0)]
    total = 0.0
    for k in range(80):
        total += incs[k % 2]
    sched = script.schedule()
    assert sched.size == 80
    assert sched[-1] == total
    assert np.rad2deg(sched[-1]) == pytest.approx(360.0, abs=1e-9)


@pytest.mark.parametrize("name", EXAMPLE_MANEUVERS)
def test_examples_load(name):
    assert example_maneuver(name).n_steps > 0


def test_square_example_shape():
    s = example_maneuver("square")
    assert s.schedule(None).size == 4 * 36
    assert s.schedule()[-1] == pytest.approx(2 * np.pi, abs=1e-12)


def test_unknown_example():
    with pytest.raises(ValueError):
        example_maneuver("spiral")


def test_empty_script_gives_empty_path(params):
    res = run_maneuver(ManeuverScript(), HS, params)
    assert res.path.shape == (0, 2) and res.completed
    assert res.path_length == 0.0 and res.closure_error == 0.0


def test_short_maneuver_logs_commanded_headings(params):
    script = ManeuverScript.parse("FWD 6\nTURN 10\nFWD 6\n")
    res = run_maneuver(script, HS, params)
    np.testing.assert_array_equal(res.psi_d, script.schedule())
    assert res.path.shape == (script.n_steps + 1, 2)
    assert res.path_length > 0
    assert res.completed


def test_maneuver_abort_keeps_partial_path(params):
    falling = ActuationProgram(Scheme.HEEL_STRIKE, PulseParams.from_area(0.0225, 0.01))
    with pytest.raises(ManeuverAborted) as info:
        run_maneuver(ManeuverScript.parse("FWD 200\n"), falling, params)
    res = info.value.result
    assert not res.completed
    assert 1 <= len(res.path) < 201


def _cell(beta_deg=0.0, terminal=CellTerminal.WALKING, gait="Period1", mult=0.5, vel=12.5,
          stride=1.25, n=40, error="", P_Area=0.01):
    return SweepCell(0.04, P_Area, float(np.deg2rad(beta_deg)), GaitClass.parse(gait), mult, vel,
                     stride, terminal, n, error)


def test_cells_csv_round_trip():
    cells = [_cell(0.0), _cell(0.5, gait="Period3", mult=math.nan),
             _cell(1.0, CellTerminal.LOCOMOTION_LOST, "Fallen", math.nan, 0.0, 0.0, 3, "Fall, twice")]
    text = format_cells(cells, {"seed": None})
    again = parse_cells(text)
    assert format_cells(again, {"seed": None}) == text
    for a, b in zip(cells, again):
        assert (a.terminal, a.gait, a.n_steps, a.error) == (b.terminal, b.gait, b.n_steps, b.error)
        assert a.beta == pytest.approx(b.beta, abs=1e-12)
        assert a.velocity == b.velocity
        assert (math.isnan(a.avg_max_multiplier) and math.isnan(b.avg_max_multiplier)) or \
            a.avg_max_multiplier == b.avg_max_multiplier


def test_empty_cells_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    text = emit_results([], path)
    assert text == ",".join(CELL_COLUMNS) + "\n"
    assert read_cells(path) == []


def test_results_io_errors_name_destination(tmp_path):
    bad = tmp_path / "missing" / "cells.csv"
    with pytest.raises(ResultsIOError, match="missing"):
        emit_results([_cell()], bad)
    with pytest.raises(ResultsIOError):
        read_cells(bad)


def test_spec_slopes_strictly_increase():
    spec = SweepSpec(Scheme.HEEL_STRIKE, slope_step=np.deg2rad(0.5), max_slope=np.deg2rad(3.0))
    sl = spec.slopes()
    np.testing.assert_allclose(np.diff(sl), np.deg2rad(0.5), rtol=1e-12)
    assert sl[0] == 0.0 and sl.size == 7


@pytest.mark.parametrize("kwargs", [{"slope_step": 0.0}, {"P_L_values": ()}, {"P_L_values": (0.0,)},
                                    {"cell_time": 0.0}])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SweepSpec(Scheme.HEEL_STRIKE, **kwargs)


def test_summary_of_immediately_backward_ladder():
    res = slope_summary([_cell(0.0, CellTerminal.BACKWARD, "Backward", math.nan, -1.0, -0.1)])
    assert res.beta_max is None and res.limiting is Limiting.BACKWARD and len(res.cells) == 1


def test_zero_area_never_walks(params):
    res = max_slope(Scheme.HEEL_STRIKE, 0.04, 0.0, params, cell_time=2.0)
    assert res.beta_max is None
    assert res.limiting is Limiting.INSTABILITY
    assert len(res.cells) == 1


def test_short_ladder(params):
    spec = SweepSpec(Scheme.HEEL_STRIKE, (0.04,), (0.01,), max_slope=np.deg2rad(1.0), cell_time=10.0)
    cells = run_ladder(spec, params, 0.04, 0.01)
    betas = [c.beta for c in cells]
    np.testing.assert_allclose(betas, spec.slopes()[:len(cells)])
    assert all(c.terminal is CellTerminal.WALKING for c in cells)
    for c in cells:
        assert c.gait.kind is GaitKind.PERIOD1 and c.avg_max_multiplier < 1
        assert np.all(np.abs(c.section_phi[:, 0]) < 1e-8) and np.all(c.section_phi[:, 1] < 0)
    # climbing costs speed
    assert cells[0].velocity > cells[-1].velocity > 0


def test_parallel_sweep_matches_serial(params):
    spec = SweepSpec(Scheme.HEEL_STRIKE, (0.04,), (0.0, 0.01), max_slope=np.deg2rad(0.5),
                     cell_time=4.0, stability=False)
    a = format_cells(run_sweep(spec, params, workers=1))
    b = format_cells(run_sweep(spec, params, workers=2))
    assert a == b


def test_cli_simulate(capsys):
    assert main(["simulate", "--t-end", "0.5"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["terminal"] == "TimeExpired" and doc["steps"] > 0


def test_cli_simulate_trajectory_file(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--t-end", "0.2", "--sample-dt", "5", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].startswith("t,theta1")


def test_cli_sweep_writes_provenance(tmp_path, capsys):
    out = tmp_path / "cells.csv"
    assert main(["sweep", "--P-L", "40", "--P-area", "0", "--cell-time", "2", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# version:" in text and "# params:" in text and "# spec:" in text and "# seed: null" in text
    assert read_cells(out)[0].terminal is CellTerminal.LOCOMOTION_LOST
    assert "beta_max none" in capsys.readouterr().out


def test_cli_stability(tmp_path):
    out = tmp_path / "report.json"
    assert main(["stability", "--warmup", "6", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["verdict"] == "stable" and "provenance" in doc


def test_cli_maneuver_script(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("FWD 4\nTURN 10\nFWD 2\n")
    out = tmp_path / "path.csv"
    assert main(["maneuver", "--script", str(script), "--out", str(out)]) == 0
    rows = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "step,t,x_mm,y_mm,psi_d_deg,psi_deg" and len(rows) == 1 + 9


def test_cli_coil_export(capsys):
    assert main(["coil-export", "--scheme", "ConstantPulseWave", "--duration", "0.1", "--dt", "10"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("#")]
    assert lines[0] == "t,P_x,P_y,P_z" and len(lines) == 12


def test_cli_reports_bad_input(tmp_path, capsys):
    assert main(["simulate", "--params", str(tmp_path / "nope.txt")]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["simulate", "--scheme", "Gallop"]) == 1
