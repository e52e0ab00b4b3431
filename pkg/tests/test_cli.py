import csv
import json

import numpy as np
import pytest

from stochastic_reduction.cli import emit_plotdata, execute, main
from stochastic_reduction.ensemble import (
    ScalingFit,
    empty_summary,
    run_ensemble,
)
from stochastic_reduction.errors import ExecutionError
from stochastic_reduction.scenario import Scenario, emit_scenario, parse_scenario, preset_scenario
from stochastic_reduction.sde import StochasticProcessSpec

H01 = np.diag([0.0, 1.0])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if isinstance(doc, dict) else doc)
    return str(path)


def test_preset_list(capsys):
    assert main(["preset", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("stern-gerlach", "energy-driven-qubit", "lattice-localization", "pauli-z"):
        assert name in out


def test_preset_show_round_trips(capsys):
    assert main(["preset", "show", "energy-driven-qubit"]) == 0
    text = capsys.readouterr().out
    assert parse_scenario(text) == preset_scenario("energy-driven-qubit")


def test_verify_default_config_passes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("PASS") >= 15


def test_verify_mode_exit_status(monkeypatch, capsys):
    from stochastic_reduction import cli
    from stochastic_reduction.verify import CheckResult

    monkeypatch.setattr(cli, "run_checks", lambda: [CheckResult("a", True, ""), CheckResult("b", False, "x")])
    assert execute(Scenario(name="v", mode="verify")) == 1
    assert "FAIL  b" in capsys.readouterr().out
    monkeypatch.setattr(cli, "run_checks", lambda: [CheckResult("a", True, "")])
    assert execute(Scenario(name="v", mode="verify")) == 0


def test_ensemble_twice_is_byte_identical(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        prefix = tmp_path / run / "edq"
        assert main(["energy-driven-qubit", "--seed", "42", "--trajectories", "200", "--out", str(prefix)]) == 0
        outs.append(prefix)
    for suffix in ("summary.json", "outcomes.csv", "born_bars.csv", "weights.csv"):
        a = (tmp_path / "a" / f"edq_{suffix}").read_bytes()
        b = (tmp_path / "b" / f"edq_{suffix}").read_bytes()
        assert a == b, suffix


def test_flags_override_file(tmp_path, capsys):
    path = write(tmp_path, "s.json", {"preset": "energy-driven-qubit", "trajectories": 5000, "horizon": 0.0})
    prefix = tmp_path / "o"
    assert main([path, "--trajectories", "40", "--seed", "3", "--out", str(prefix), "--threads", "2"]) == 0
    summary = json.loads((tmp_path / "o_summary.json").read_text())
    assert summary["n_trajectories"] == 40 and summary["seed"] == 3
    assert len(rows(tmp_path / "o_outcomes.csv")) == 41


def test_scaling_with_one_gap_is_invalid(tmp_path, capsys):
    path = write(tmp_path, "s.json", {"preset": "energy-driven-qubit", "mode": "scaling", "gaps": [1.0]})
    assert main([path]) == 2
    assert "at least 3" in capsys.readouterr().err


def test_malformed_file_reports_line(tmp_path, capsys):
    path = write(tmp_path, "s.json", '{"name": "x",\n"mode": }')
    assert main([path]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["/nonexistent/scenario.json"]) == 2


def test_simulate_writes_jsonl(tmp_path, capsys):
    path = write(tmp_path, "s.json", {"preset": "energy-driven-qubit", "mode": "simulate", "stride": 500,
                                      "output": str(tmp_path / "sim")})
    assert main([path]) == 0
    lines = (tmp_path / "sim_trajectory.jsonl").read_text().splitlines()
    snaps = [json.loads(x) for x in lines]
    assert snaps[0]["t"] == 0.0
    assert all(abs(sum(s["projector_weights"]) - 1) < 1e-10 for s in snaps)
    info = json.loads((tmp_path / "sim_trajectory.json").read_text())
    assert info["resolved"] and info["outcome"] in (0, 1)
    assert rows(tmp_path / "sim_weights.csv")[0] == ["trajectory_index", "t", "weight_0", "weight_1"]


def test_histories_table(tmp_path, capsys):
    path = write(tmp_path, "s.json", {"preset": "energy-driven-qubit", "mode": "histories",
                                      "output": str(tmp_path / "h")})
    assert main([path]) == 0
    table = rows(tmp_path / "h_histories.csv")
    assert table[0][-1] == "probability"
    assert len(table) == 5
    assert sum(float(r[-1]) for r in table[1:]) == pytest.approx(1.0, abs=1e-12)


def test_module_errors_carry_scenario_context(tmp_path):
    s = parse_scenario(json.dumps({"preset": "energy-driven-qubit", "mode": "simulate", "name": "boom",
                                   "sigma": 40.0, "dt": 0.5, "output": str(tmp_path / "x")}))
    with pytest.raises(ExecutionError, match="boom.*simulate.*StepRejected"):
        execute(s)


def test_empty_ensemble_gives_header_only_csv(tmp_path):
    spec = StochasticProcessSpec(H01, (H01,), 1.0, 1e-3)
    paths = emit_plotdata(empty_summary(spec, np.array([0.6, 0.8])), str(tmp_path / "e"))
    assert len(paths) == 3
    for p in paths:
        assert len(rows(p)) == 1


def test_qubit_bar_rows_match_eigenvalues(tmp_path):
    spec = StochasticProcessSpec(H01, (H01,), 1.0, 1e-3, seed=1)
    summary = run_ensemble(spec, np.array([0.6, 0.8]), 200.0, n=30)
    emit_plotdata(summary, str(tmp_path / "q"))
    bars = rows(tmp_path / "q_born_bars.csv")
    assert bars[0] == ["outcome_index", "eigenvalue", "count", "frequency", "born_probability"]
    assert len(bars) - 1 == 2


def test_scaling_fit_row(tmp_path):
    fit = ScalingFit([(0.25, 100.0), (0.5, 25.0), (1.0, 6.25)], -2.0, 0.01, 1.8, 1.0, [(10, 0)] * 3)
    emit_plotdata(fit, str(tmp_path / "s"))
    table = rows(tmp_path / "s_scaling_fit.csv")
    assert table[0][:2] == ["slope", "slope_stderr"]
    assert len(table) == 2 and float(table[1][0]) == -2.0
    assert len(rows(tmp_path / "s_scaling_points.csv")) == 4


def test_emit_scenario_is_schema_versioned():
    doc = json.loads(emit_scenario(preset_scenario("stern-gerlach")))
    assert next(iter(doc)) == "schema_version"
