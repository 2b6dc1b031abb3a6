import numpy as np
import pytest

from bigfoot.params import ParameterError, format_params, load_params, parse_params, save_params


def test_default_total_mass_matches_prototype(params):
    assert params.total_mass == pytest.approx(3.0e-4, rel=1e-12)


def test_default_edge_and_curve_radii_meet(params):
    # the inner edge is where the foot sphere is cut by the leg's inner face
    assert np.hypot(params.H, params.L) == pytest.approx(params.H_B, rel=1e-6)


def test_round_trip_through_file(params, tmp_path):
    path = tmp_path / "p.txt"
    save_params(params, path)
    again = load_params(path)
    assert again.to_dict() == params.to_dict()
    np.testing.assert_array_equal(again.packed, params.packed)


def test_replace_keeps_other_fields(params):
    p2 = params.replace(beta=0.1)
    assert p2.beta == 0.1
    assert p2.L == params.L
    assert params.beta == 0.0


@pytest.mark.parametrize("change, message", [
    ({"m_A": 0.0}, "masses"),
    ({"I_1": np.diag([1.0, -1.0, 1.0])}, "positive definite"),
    ({"I_2": [[1, 2, 0], [0, 1, 0], [0, 0, 1]]}, "symmetric"),
    ({"H_B": 1e-3}, "H_B"),
    ({"c_r1": -1.0}, "friction"),
])
def test_invalid_parameters_rejected(params, change, message):
    with pytest.raises(ParameterError, match=message):
        params.replace(**change)


@pytest.mark.parametrize("text, message", [
    ("m_A = 1\nm_A = 2\n", "duplicate"),
    ("mass = 1\n", "unknown"),
    ("m_A 1\n", "expected"),
    ("m_A = 1\n", "missing"),
    ("m_A = one\n", "line 1"),
])
def test_parse_errors(text, message):
    with pytest.raises(ParameterError, match=message):
        parse_params(text)


def test_format_is_parseable_and_exact(params):
    assert parse_params(format_params(params)) == params
