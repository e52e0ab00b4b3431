"""Scenario documents: parsing, validation, presets and emission.

A scenario is a JSON object. Complex numbers are ``[re, im]`` pairs and
matrices are row-major lists of rows. Operators and initial states may be
given by preset name instead. A top-level ``"preset"`` key loads a complete
preset scenario that the remaining keys then override.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError
from .hilbert import HERMITIAN_TOL
from .sde import StochasticProcessSpec, gaussian_localization_ops

SCHEMA_VERSION = 1
MODES = ("simulate", "ensemble", "scaling", "histories", "verify")


def _pauli(which):
    return {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }[which]


def _hopping(d):
    m = np.zeros((d, d), dtype=complex)
    for k in range(d - 1):
        m[k, k + 1] = m[k + 1, k] = -1.0
    return m


# name -> (required dimension or None, builder(dim))
OPERATOR_PRESETS = {
    "pauli-x": (2, lambda d: _pauli("x")),
    "pauli-y": (2, lambda d: _pauli("y")),
    "pauli-z": (2, lambda d: _pauli("z")),
    "spin-z": (2, lambda d: _pauli("z") / 2),
    "energy-qubit": (2, lambda d: np.diag([0.0, 1.0]).astype(complex)),
    "number": (None, lambda d: np.diag(np.arange(d, dtype=float)).astype(complex)),
    "lattice-hopping": (None, _hopping),
    "identity": (None, lambda d: np.eye(d, dtype=complex)),
    "zero": (None, lambda d: np.zeros((d, d), dtype=complex)),
}
# collapse-operator names expanding to something other than one fixed matrix
COLLAPSE_PRESETS = ("hamiltonian", "gaussian-localization")

STATE_PRESETS = {
    "plus-x": (2, lambda d: np.array([1, 1], dtype=complex) / np.sqrt(2)),
    "equal-superposition": (None, lambda d: np.ones(d, dtype=complex) / np.sqrt(d)),
}
_BASIS_STATE = re.compile(r"basis-(\d+)$")


@dataclass
class Scenario:
    name: str
    mode: str
    hilbert_dim: int = 2
    hamiltonian: object = "energy-qubit"
    collapse_ops: list = dataclasses.field(default_factory=lambda: ["hamiltonian"])
    include_hamiltonian: bool = True
    sigma: float = 1.0
    dt: float = 1e-3
    t_max: float = 200.0
    epsilon: float = 1e-6
    trajectories: int = 1000
    seed: int = 0
    initial_state: object = "equal-superposition"
    output: str = "out/scenario"
    horizon: float = 0.0
    samples: int = 20
    stride: int = 100
    gaps: list | None = None
    history_times: list | None = None
    history_observables: list | None = None
    threads: int | None = None  # None: STOCHRED_THREADS or 1
    schema_version: int = SCHEMA_VERSION


SCENARIO_PRESETS = {
    "stern-gerlach": {
        "name": "stern-gerlach",
        "mode": "ensemble",
        "hilbert_dim": 2,
        "hamiltonian": "zero",
        "collapse_ops": ["spin-z"],
        "sigma": 2.0,
        "t_max": 200.0,
        "trajectories": 1000,
        "seed": 1,
        "initial_state": "plus-x",
        "output": "out/stern-gerlach",
        "history_times": [1.0],
        "history_observables": ["spin-z"],
    },
    "energy-driven-qubit": {
        "name": "energy-driven-qubit",
        "mode": "ensemble",
        "hilbert_dim": 2,
        "hamiltonian": "energy-qubit",
        "collapse_ops": ["hamiltonian"],
        "sigma": 1.0,
        "dt": 1e-3,
        "t_max": 200.0,
        "trajectories": 2000,
        "seed": 42,
        "initial_state": [[float(np.sqrt(0.3)), 0.0], [float(np.sqrt(0.7)), 0.0]],
        "output": "out/energy-driven-qubit",
        "horizon": 2.0,
        "gaps": [0.5, 1.0, 2.0],
        "history_times": [0.5, 1.0],
        "history_observables": ["pauli-x", "energy-qubit"],
    },
    "lattice-localization": {
        "name": "lattice-localization",
        "mode": "ensemble",
        "hilbert_dim": 8,
        "hamiltonian": "lattice-hopping",
        "collapse_ops": ["gaussian-localization"],
        "include_hamiltonian": False,
        "sigma": 4.0,
        "dt": 1e-3,
        "t_max": 200.0,
        "trajectories": 500,
        "seed": 3,
        "initial_state": "equal-superposition",
        "output": "out/lattice-localization",
    },
}

_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}


def _line_of(text: str, key: str):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _complex(value, where):
    if isinstance(value, bool):
        raise TypeError(where)
    if isinstance(value, (int, float)):
        return [float(value), 0.0]
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        return [float(value[0]), float(value[1])]
    raise TypeError(where)


def _canonical_matrix(value, field):
    """Nested [re, im] rows; a flat row-major list of d*d entries is also accepted."""
    if not isinstance(value, list) or not value:
        raise TypeError(field)
    if all(isinstance(row, list) and row and isinstance(row[0], list) for row in value):
        rows = value
    else:
        d = int(round(np.sqrt(len(value))))
        if d * d != len(value):
            raise TypeError(field)
        rows = [value[i * d : (i + 1) * d] for i in range(d)]
    return [[_complex(v, field) for v in row] for row in rows]


def _canonical_vector(value, field):
    if not isinstance(value, list) or not value:
        raise TypeError(field)
    return [_complex(v, field) for v in value]


def to_complex_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def from_complex_array(arr) -> list:
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises:
        ParseError: malformed JSON or a field of the wrong type.
        ValidationError: every violated invariant, collected in one error.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object", line=1)

    values = {}
    preset = doc.get("preset")
    if preset is not None:
        if preset not in SCENARIO_PRESETS:
            raise ValidationError([f"preset: unknown scenario preset '{preset}'"])
        values.update(json.loads(json.dumps(SCENARIO_PRESETS[preset])))

    for key, value in doc.items():
        if key == "preset":
            continue
        if key not in _FIELDS:
            raise ParseError(f"unknown field '{key}'", line=_line_of(text, key), field=key)
        values[key] = value

    for key, value in list(values.items()):
        try:
            values[key] = _coerce(key, value)
        except (TypeError, ValueError):
            raise ParseError(
                f"invalid value {value!r}", line=_line_of(text, key), field=key
            ) from None

    missing = [k for k in ("name", "mode") if k not in values]
    if missing:
        raise ValidationError([f"{k}: required field missing" for k in missing])
    scenario = Scenario(**values)
    validate_scenario(scenario)
    return scenario


def _coerce(key, value):
    if key in ("name", "output"):
        if not isinstance(value, str):
            raise TypeError(key)
        return value
    if key == "mode":
        if not isinstance(value, str):
            raise TypeError(key)
        return value
    if key == "threads" and value is None:
        return None
    if key in ("hilbert_dim", "trajectories", "seed", "samples", "stride", "threads", "schema_version"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(key)
        return value
    if key in ("sigma", "dt", "t_max", "epsilon", "horizon"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(key)
        return float(value)
    if key == "include_hamiltonian":
        if not isinstance(value, bool):
            raise TypeError(key)
        return value
    if key == "hamiltonian":
        return value if isinstance(value, str) else _canonical_matrix(value, key)
    if key == "collapse_ops":
        if not isinstance(value, list) or not value:
            raise TypeError(key)
        return [v if isinstance(v, str) else _canonical_matrix(v, key) for v in value]
    if key == "initial_state":
        return value if isinstance(value, str) else _canonical_vector(value, key)
    if key in ("gaps", "history_times"):
        if value is None:
            return None
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            raise TypeError(key)
        return [float(v) for v in value]
    if key == "history_observables":
        if value is None:
            return None
        if not isinstance(value, list):
            raise TypeError(key)
        return [v if isinstance(v, str) else _canonical_matrix(v, key) for v in value]
    raise TypeError(key)


def _operator(value, dim, field, problems):
    if isinstance(value, str):
        if value not in OPERATOR_PRESETS:
            problems.append(f"{field}: unknown operator preset '{value}'")
            return None
        need, build = OPERATOR_PRESETS[value]
        if need is not None and need != dim:
            problems.append(f"{field}: preset '{value}' needs hilbert_dim {need}, got {dim}")
            return None
        return build(dim)
    m = to_complex_array(value)
    if m.shape != (dim, dim):
        problems.append(f"{field}: matrix shape {m.shape} does not match hilbert_dim {dim}")
        return None
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        problems.append(f"{field}: matrix is not self-adjoint")
        return None
    return m


def _state(value, dim, problems):
    if isinstance(value, str):
        m = _BASIS_STATE.match(value)
        if m:
            k = int(m.group(1))
            if k >= dim:
                problems.append(f"initial_state: basis index {k} out of range for dim {dim}")
                return None
            psi = np.zeros(dim, dtype=complex)
            psi[k] = 1.0
            return psi
        if value not in STATE_PRESETS:
            problems.append(f"initial_state: unknown state preset '{value}'")
            return None
        need, build = STATE_PRESETS[value]
        if need is not None and need != dim:
            problems.append(f"initial_state: preset '{value}' needs hilbert_dim {need}, got {dim}")
            return None
        return build(dim)
    psi = to_complex_array(value)
    if psi.shape != (dim,):
        problems.append(f"initial_state: {psi.size} amplitudes do not match hilbert_dim {dim}")
        return None
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-6:
        problems.append(f"initial_state: norm {norm:.8g} is not 1")
        return None
    return psi / norm


def build_operators(s: Scenario, problems=None):
    """Resolve H, the collapse operators and the initial state to arrays."""
    problems = [] if problems is None else problems
    dim = s.hilbert_dim
    h = _operator(s.hamiltonian, dim, "hamiltonian", problems)
    ops = []
    for k, op in enumerate(s.collapse_ops):
        if op == "hamiltonian":
            if h is not None:
                ops.append(h.copy())
        elif op == "gaussian-localization":
            ops.extend(gaussian_localization_ops(dim))
        else:
            m = _operator(op, dim, f"collapse_ops[{k}]", problems)
            if m is not None:
                ops.append(m)
    psi0 = _state(s.initial_state, dim, problems)
    return h, ops, psi0


def validate_scenario(s: Scenario):
    """Raise ValidationError listing every violated invariant of ``s``."""
    problems = []
    if s.schema_version != SCHEMA_VERSION:
        problems.append(f"schema_version: unsupported version {s.schema_version}")
    if s.mode not in MODES:
        problems.append(f"mode: must be one of {', '.join(MODES)}, got '{s.mode}'")
    if s.mode == "verify":
        if problems:
            raise ValidationError(problems)
        return
    if s.hilbert_dim < 1:
        problems.append("hilbert_dim: must be positive")
    if not s.sigma >= 0:
        problems.append("sigma: must be non-negative")
    if not s.dt > 0:
        problems.append("dt: must be positive")
    if not s.t_max > 0:
        problems.append("t_max: must be positive")
    if not 0 < s.epsilon < 1:
        problems.append("epsilon: must lie in (0, 1)")
    if s.trajectories < 1:
        problems.append("trajectories: must be at least 1")
    if s.horizon < 0:
        problems.append("horizon: must be non-negative")
    if s.samples < 1:
        problems.append("samples: must be at least 1")
    if s.stride < 1:
        problems.append("stride: must be at least 1")
    if s.threads is not None and s.threads < 1:
        problems.append("threads: must be at least 1")
    if s.seed < 0 or s.seed >= 2**64:
        problems.append("seed: must be a 64-bit unsigned integer")
    if s.hilbert_dim >= 1:
        build_operators(s, problems)
    if s.mode == "scaling":
        gaps = s.gaps or []
        if len(gaps) < 3:
            problems.append(f"gaps: scaling needs at least 3 energy scales, got {len(gaps)}")
        if any(g <= 0 for g in gaps):
            problems.append("gaps: energy scales must be positive")
        if len(set(gaps)) != len(gaps):
            problems.append("gaps: energy scales must be distinct")
    if s.mode == "histories":
        times = s.history_times or []
        obs = s.history_observables or []
        if not times:
            problems.append("history_times: histories mode needs at least one time")
        if len(times) != len(obs):
            problems.append("history_observables: need one observable per history time")
        if any(b < a for a, b in zip(times, times[1:])) or any(t < 0 for t in times):
            problems.append("history_times: must be non-negative and ascending")
        for k, o in enumerate(obs):
            _operator(o, s.hilbert_dim, f"history_observables[{k}]", problems)
    if problems:
        raise ValidationError(problems)


def degeneracy_warning(s: Scenario):
    """Message when H drives the reduction but has a degenerate spectrum, else None.

    Reduction onto single energy eigenstates, and so the Born-rule comparison,
    relies on a nondegenerate H.
    """
    from .hilbert import max_abs, spectral_decompose

    if s.mode not in ("ensemble", "scaling") or not s.include_hamiltonian:
        return None
    h, ops, _ = build_operators(s)
    if not any(max_abs(a - h) <= 1e-12 for a in ops):
        return None
    if spectral_decompose(h).is_degenerate:
        return (
            "warning: H has degenerate eigenvalues; reduction onto single energy "
            "eigenstates (and the Born-rule comparison) is not guaranteed"
        )
    return None


def process_spec(s: Scenario) -> tuple:
    """(StochasticProcessSpec, psi0) for a validated scenario."""
    h, ops, psi0 = build_operators(s)
    spec = StochasticProcessSpec(h, ops, s.sigma, s.dt, s.include_hamiltonian, seed=s.seed)
    return spec, psi0


def scenario_to_dict(s: Scenario) -> dict:
    doc = dataclasses.asdict(s)
    return {"schema_version": doc.pop("schema_version"), **doc}


def emit_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def preset_scenario(name: str) -> Scenario:
    return parse_scenario(json.dumps({"preset": name}))
