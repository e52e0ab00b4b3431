import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochastic_reduction.errors import ParseError, ValidationError
from stochastic_reduction.scenario import (
    SCENARIO_PRESETS,
    SCHEMA_VERSION,
    Scenario,
    build_operators,
    degeneracy_warning,
    emit_scenario,
    parse_scenario,
    preset_scenario,
    process_spec,
)

MINIMAL = """{
  "name": "qubit",
  "mode": "ensemble",
  "hilbert_dim": 2,
  "hamiltonian": "energy-qubit",
  "collapse_ops": ["hamiltonian"],
  "sigma": 1.0,
  "t_max": 100.0,
  "seed": 42,
  "initial_state": [[0.5477225575051661, 0], [0.8366600265340756, 0]],
  "output": "out/qubit"
}"""


def test_minimal_document_gets_defaults():
    s = parse_scenario(MINIMAL)
    assert s.dt == 1e-3
    assert s.epsilon == 1e-6
    assert s.trajectories == 1000
    assert s.schema_version == SCHEMA_VERSION
    spec, psi0 = process_spec(s)
    assert spec.energy_driven
    assert np.allclose(np.abs(psi0) ** 2, [0.3, 0.7])


def test_dimension_mismatch_reported():
    doc = json.loads(MINIMAL)
    doc["initial_state"] = [[1, 0], [0, 0], [0, 0]]
    with pytest.raises(ValidationError, match="initial_state"):
        parse_scenario(json.dumps(doc))


def test_unknown_presets_name_their_key():
    doc = json.loads(MINIMAL)
    doc["hamiltonian"] = "not-an-operator"
    with pytest.raises(ValidationError, match="hamiltonian: unknown operator preset 'not-an-operator'"):
        parse_scenario(json.dumps(doc))
    with pytest.raises(ValidationError, match="preset"):
        parse_scenario('{"preset": "nowhere"}')


def test_every_problem_listed():
    doc = json.loads(MINIMAL)
    doc.update(sigma=-1.0, dt=0.0, trajectories=0, collapse_ops=["pauli-q"])
    with pytest.raises(ValidationError) as err:
        parse_scenario(json.dumps(doc))
    fields = {p.split(":")[0] for p in err.value.problems}
    assert {"sigma", "dt", "trajectories", "collapse_ops[0]"} <= fields


def test_scaling_needs_three_gaps():
    with pytest.raises(ValidationError, match="at least 3"):
        parse_scenario('{"preset": "energy-driven-qubit", "mode": "scaling", "gaps": [1.0]}')


def test_parse_error_carries_line_and_field():
    with pytest.raises(ParseError) as err:
        parse_scenario('{\n "name": "x",\n "mode": "ensemble",\n "sigma": "big"\n}')
    assert err.value.line == 4 and err.value.field == "sigma"
    with pytest.raises(ParseError) as err:
        parse_scenario('{\n "name": "x"\n "mode": 1}')
    assert err.value.line == 3
    with pytest.raises(ParseError, match="unknown field"):
        parse_scenario('{"name": "x", "mode": "verify", "colour": 1}')


def test_non_hermitian_matrix_rejected():
    doc = json.loads(MINIMAL)
    doc["hamiltonian"] = [[[0, 0], [1, 0]], [[0, 0], [0, 0]]]
    with pytest.raises(ValidationError, match="self-adjoint"):
        parse_scenario(json.dumps(doc))


def test_flat_matrix_and_real_entries_accepted():
    doc = json.loads(MINIMAL)
    doc["hamiltonian"] = [0, 0, 0, 1]
    s = parse_scenario(json.dumps(doc))
    assert s.hamiltonian == [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]


def test_verify_mode_needs_nothing_else():
    assert parse_scenario('{"name": "v", "mode": "verify"}').mode == "verify"


def test_presets_build():
    for name in SCENARIO_PRESETS:
        s = preset_scenario(name)
        h, ops, psi0 = build_operators(s)
        assert h.shape == (s.hilbert_dim, s.hilbert_dim)
        assert abs(np.linalg.norm(psi0) - 1) < 1e-12
    lattice = preset_scenario("lattice-localization")
    assert not lattice.include_hamiltonian
    assert len(build_operators(lattice)[1]) == lattice.hilbert_dim


def test_preset_overrides():
    s = parse_scenario('{"preset": "stern-gerlach", "seed": 9, "mode": "histories"}')
    assert s.seed == 9 and s.mode == "histories" and s.name == "stern-gerlach"


def test_degeneracy_warning():
    doc = json.loads(MINIMAL)
    doc.update(hilbert_dim=3, hamiltonian="identity", initial_state="equal-superposition")
    assert "degenerate" in degeneracy_warning(parse_scenario(json.dumps(doc)))
    assert degeneracy_warning(parse_scenario(MINIMAL)) is None
    assert degeneracy_warning(preset_scenario("stern-gerlach")) is None


finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def scenarios(draw):
    d = draw(st.integers(2, 4))
    real = draw(st.lists(finite, min_size=d * d, max_size=d * d))
    m = np.array(real).reshape(d, d)
    m = m + m.T
    amps = np.array(draw(st.lists(st.floats(0.1, 1), min_size=d, max_size=d)))
    amps = amps / np.linalg.norm(amps)
    mode = draw(st.sampled_from(["simulate", "ensemble", "scaling", "histories"]))
    times = sorted(draw(st.lists(st.floats(0, 5), min_size=1, max_size=3)))
    return Scenario(
        name=draw(st.text(min_size=1, max_size=12)),
        mode=mode,
        hilbert_dim=d,
        hamiltonian=[[[float(x), 0.0] for x in row] for row in m],
        collapse_ops=draw(st.sampled_from([["hamiltonian"], ["number"], ["gaussian-localization"]])),
        include_hamiltonian=draw(st.booleans()),
        sigma=draw(st.floats(0, 4)),
        dt=draw(st.floats(1e-5, 1e-2)),
        t_max=draw(st.floats(0.1, 500)),
        trajectories=draw(st.integers(1, 5000)),
        seed=draw(st.integers(0, 2**63)),
        initial_state=[[float(a), 0.0] for a in amps],
        gaps=[0.5, 1.0, 2.0] if mode == "scaling" else draw(st.none()),
        history_times=times if mode == "histories" else None,
        history_observables=["number"] * len(times) if mode == "histories" else None,
        threads=draw(st.none() | st.integers(1, 8)),
    )


@given(scenarios())
def test_round_trip(s):
    assert parse_scenario(emit_scenario(s)) == s


def test_round_trip_presets():
    for name in SCENARIO_PRESETS:
        s = preset_scenario(name)
        assert parse_scenario(emit_scenario(s)) == s
        assert parse_scenario(emit_scenario(dataclasses.replace(s, seed=3))).seed == 3
