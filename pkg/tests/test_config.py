import json

import pytest

from nctorus.config import ExperimentConfig, load_config, parse_config, validate_text
from nctorus.exceptions import ConfigError


def _errors(diagnostics):
    return [d for d in diagnostics if d.level == "error"]


def test_minimal_config_parses_cleanly():
    config, diagnostics = parse_config('{"kind": "spectrum"}')
    assert diagnostics == []
    assert config.window_N == 16
    assert config.gauge.is_hermitian
    r1, r2 = config.perturbation_pair()
    assert r1.is_zero() and r2.is_zero()


def test_malformed_json_reports_line_number():
    config, diagnostics = parse_config('{\n  "kind": "spectrum",\n}\n')
    assert config is None
    assert len(diagnostics) == 1
    assert diagnostics[0].location == "<json>"
    assert diagnostics[0].line == 3


def test_non_antisymmetric_psi_yields_one_diagnostic_naming_the_field():
    text = json.dumps({"kind": "flow", "gauge": {"psi": [[0, 1], [1, 0]]}}, indent=2)
    config, diagnostics = parse_config(text)
    assert config is None
    assert len(diagnostics) == 1
    assert diagnostics[0].location == "gauge.psi"
    assert "antisymmetric" in diagnostics[0].message
    assert diagnostics[0].line == text.splitlines().index('    "psi": [') + 1


def test_schema_errors_are_all_reported():
    text = json.dumps({"kind": "spectrum", "window_N": 100, "bogus": 1}, indent=2)
    diagnostics = validate_text(text)
    locations = sorted(d.location for d in diagnostics)
    assert locations == ["bogus", "window_N"]
    by_location = {d.location: d for d in diagnostics}
    assert by_location["window_N"].line == 3


def test_unknown_kind_is_rejected():
    _, diagnostics = parse_config('{"kind": "wavelets"}')
    assert [d.location for d in diagnostics] == ["kind"]


def test_literal_mode_cannot_drive_hermitian_experiments():
    text = json.dumps({"kind": "heat-trace", "gauge": {"symbol_mode": "literal"}})
    config, diagnostics = parse_config(text)
    assert config is not None
    assert [d.location for d in _errors(diagnostics)] == ["gauge.symbol_mode"]

    flow = json.dumps({"kind": "flow", "gauge": {"symbol_mode": "literal"}})
    assert _errors(validate_text(flow)) == []


def test_hermitian_mode_needs_self_adjoint_perturbation():
    text = json.dumps(
        {"kind": "spectrum", "perturbation": {"r1": {"theta": 0.0, "coeffs": [[1, 0, 1.0, 0.0]]}}}
    )
    errors = _errors(validate_text(text))
    assert [d.location for d in errors] == ["perturbation.r1"]
    assert "self-adjoint" in errors[0].message


def test_perturbation_theta_must_match_gauge():
    text = json.dumps(
        {
            "kind": "spectrum",
            "gauge": {"theta": 0.3},
            "perturbation": {"r2": {"theta": 0.1, "coeffs": []}},
        }
    )
    config, diagnostics = parse_config(text)
    assert config is None
    assert "perturbation.r2.theta" in diagnostics[0].message


def test_t_grid_outside_validity_window_only_warns():
    text = json.dumps({"kind": "heat-trace", "window_N": 16, "t_grid": [0.05, 0.08, 0.2]})
    config, diagnostics = parse_config(text)
    assert config is not None
    assert _errors(diagnostics) == []
    messages = [d.message for d in diagnostics if d.level == "warning"]
    assert len(messages) == 2
    assert messages[0].startswith("2 point(s) below t_min(N)")
    assert messages[1].startswith("1 point(s) above")


def test_t_grid_must_be_strictly_increasing():
    _, diagnostics = parse_config(json.dumps({"kind": "heat-trace", "t_grid": [0.05, 0.05]}))
    assert [d.location for d in diagnostics] == ["t_grid"]
    assert "strictly increasing" in diagnostics[0].message


def test_default_t_grid_spans_window():
    config = ExperimentConfig(kind="heat-trace", window_N=16)
    grid = config.effective_t_grid()
    assert len(grid) == 12
    assert grid[0] == pytest.approx(0.05)
    assert grid[-1] == pytest.approx(0.1)
    wide = ExperimentConfig(kind="heat-trace", window_N=48).effective_t_grid()
    assert wide[0] == pytest.approx(46.0 / 48**2)


def test_record_times_bounded_by_horizon():
    text = json.dumps({"kind": "flow", "mc": {"dt": 0.01, "steps": 10, "record_times": [0.5]}})
    _, diagnostics = parse_config(text)
    assert [d.location for d in diagnostics] == ["mc"]


def test_moments_accept_lambda_alias():
    config, _ = parse_config(json.dumps({"kind": "moments", "moments": {"lambda": -0.25}}))
    assert config.moments.lam == -0.25
    assert config.payload()["moments"]["lambda"] == -0.25


def test_digest_ignores_output_dir(tmp_path):
    a = ExperimentConfig(kind="spectrum", window_N=8)
    b = ExperimentConfig(kind="spectrum", window_N=8, output_dir=tmp_path)
    c = ExperimentConfig(kind="spectrum", window_N=10)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 12


def test_load_config_raises_with_all_diagnostics(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kind": "spectrum", "window_N": 2, "t_grid": [-1.0]}))
    with pytest.raises(ConfigError, match="invalid config") as excinfo:
        load_config(path)
    assert sorted(d.location for d in excinfo.value.diagnostics) == ["t_grid", "window_N"]


def test_load_config_reports_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "missing.json")


def test_load_config_returns_config_with_warnings(tmp_path):
    path = tmp_path / "warn.json"
    path.write_text(json.dumps({"kind": "heat-trace", "t_grid": [0.01, 0.02, 0.05, 0.1]}))
    config = load_config(path)
    assert config.t_grid == [0.01, 0.02, 0.05, 0.1]


def test_diagnostic_renders_level_line_and_location():
    _, diagnostics = parse_config('{\n  "kind": "spectrum",\n  "window_N": 3\n}')
    assert str(diagnostics[0]).startswith("error: line 3: window_N: ")
