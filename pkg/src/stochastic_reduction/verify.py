"""Built-in invariant suite run by ``stochred verify``.

Every check is self-contained, seeded and sized to finish in seconds, so the
whole suite needs no input files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hilbert as hb
from .ensemble import chi_square_born, run_ensemble, weight_martingale
from .histories import History, exhaustive_family_total, history_probability
from .lindblad import (
    LindbladSpec,
    dissipation,
    evolve_lindblad,
    evolve_lindblad_series,
    lindblad_rhs,
    stationarity_check,
)
from .sde import StochasticProcessSpec, step_density, step_pure_batch

SEED = 20240601


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rng(offset: int = 0) -> np.random.Generator:
    return np.random.default_rng([SEED, offset])


def _qubit_spec(sigma=1.0, dt=1e-3, seed=0, scheme="milstein"):
    h = np.diag([0.0, 1.0])
    return StochasticProcessSpec(h, (h,), sigma, dt, seed=seed, scheme=scheme)


def check_spectral():
    rng = _rng(1)
    worst = 0.0
    for k in range(50):
        d = 2 + k % 4
        m = hb.random_hermitian(rng, d)
        if k % 3 == 0:
            # force a degeneracy
            u = hb.random_unitary(rng, d)
            vals = np.round(rng.normal(size=d))
            m = u @ np.diag(vals) @ u.conj().T
            m = 0.5 * (m + m.conj().T)
        s = hb.spectral_decompose(m)
        total = sum(s.projectors)
        worst = max(worst, hb.max_abs(total - np.eye(d)))
        worst = max(worst, hb.max_abs(sum(v * p for v, p in zip(s.eigenvalues, s.projectors)) - m))
        for i, p in enumerate(s.projectors):
            for j, q in enumerate(s.projectors):
                worst = max(worst, hb.max_abs(p @ q - (p if i == j else 0)))
    return worst <= 1e-10, f"max residual {worst:.2e}"


def check_born():
    rng = _rng(2)
    worst = 0.0
    for k in range(100):
        d = 2 + k % 5
        s = hb.spectral_decompose(hb.random_hermitian(rng, d))
        psi = hb.random_state(rng, d)
        probs = np.array([p for _, p in hb.born_probabilities(psi, s)])
        worst = max(worst, abs(probs.sum() - 1), max(0.0, -probs.min()))
        n = int(np.argmax(probs))
        reduced = hb.reduce(psi, s, n)
        worst = max(worst, abs(hb.born_probabilities(reduced, s)[n][1] - 1))
    return worst <= 1e-10, f"max violation {worst:.2e}"


def check_energy_conservation():
    rng = _rng(3)
    worst = 0.0
    for k in range(50):
        d = 2 + k % 4
        h = hb.spectral_decompose(hb.random_hermitian(rng, d))
        rho = hb.random_density(rng, d)
        u = hb.hamiltonian_step(h, rng.uniform(0, 5))
        worst = max(worst, abs(hb.expectation(hb.evolve_unitary(rho, u), h) - hb.expectation(rho, h)))
    return worst <= 1e-12, f"max energy drift {worst:.2e}"


def check_unitary_no_go():
    rng = _rng(4)
    worst = 0.0
    reached = 0
    up, down = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    for k in range(1000):
        d = 2 + k % 3
        u = hb.random_unitary(rng, d)
        psi, phi = hb.random_state(rng, d), hb.random_state(rng, d)
        worst = max(worst, abs(np.vdot(u @ psi, u @ phi) - np.vdot(psi, phi)))
        if d == 2:
            reached += hb.reaches_all(u, psi, (up, down), 0.69)
    return worst <= 1e-10 and reached == 0, f"overlap drift {worst:.2e}, reachable pairs {reached}"


def _path_error(k):
    zero, one = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    out = zero
    for u in hb.unitary_path(zero, one, k):
        out = u @ out
    return hb.phase_distance(out, one)


def check_unitary_path():
    ratio = _path_error(200) / _path_error(100)
    return abs(ratio - 0.5) <= 0.1, f"error ratio K=200/K=100 {ratio:.4f}"


def norm_defect_slope(spec_factory=_qubit_spec, dts=(1e-3, 1e-4, 1e-5), n=4000, seed=5):
    """Log-log slope of the mean single-step norm defect against dt."""
    rng = _rng(seed)
    z = np.array([hb.random_state(rng, 2) for _ in range(n)])
    means = []
    for dt in dts:
        spec = spec_factory(dt=dt)
        dw = rng.normal(scale=np.sqrt(dt), size=(n, spec.n_noise))
        _, defect = step_pure_batch(z, spec, dw)
        means.append(defect.mean())
    slope = np.polyfit(np.log(dts), np.log(means), 1)[0]
    return float(slope), means


def check_norm_martingale():
    slope, _ = norm_defect_slope()
    return abs(slope - 1.5) <= 0.2, f"defect slope {slope:.3f}"


def check_pure_density():
    spec = StochasticProcessSpec(
        hb.random_hermitian(_rng(6), 3), (np.diag([0.0, 0.5, 1.0]),), 1.0, 1e-4
    )
    rng = _rng(7)
    z = hb.random_state(rng, 3)
    rho = hb.pure_density(z)
    worst = 0.0
    for _ in range(5000):
        dw = rng.normal(scale=np.sqrt(spec.dt), size=spec.n_noise)
        z = step_pure_batch(z[None, :], spec, dw[None, :])[0][0]
        rho = step_density(rho, spec, dw)
        worst = max(worst, hb.max_abs(rho - hb.pure_density(z)))
    return worst <= spec.dt, f"max |rho - zz*| {worst:.2e} over 5000 steps"


def check_lindblad_trace():
    rng = _rng(8)
    worst_trace = worst_cyclic = 0.0
    for k in range(50):
        d = 2 + k % 4
        spec = LindbladSpec(hb.random_hermitian(rng, d), (hb.random_hermitian(rng, d),), rng.uniform(0, 2))
        rho = hb.random_density(rng, d)
        worst_trace = max(worst_trace, abs(np.trace(lindblad_rhs(rho, spec))))
        worst_cyclic = max(worst_cyclic, abs(np.trace(rho @ hb.commutator(spec.H.matrix, rho))))
    ok = worst_trace <= 1e-12 and worst_cyclic <= 1e-12
    return ok, f"trace {worst_trace:.2e}, cyclic {worst_cyclic:.2e}"


def decoherence_error(omega=1.0, sigma=1.0, points=11, dt=1e-3):
    """Max relative error of |rho_01(t)| against exp(-sigma^2 omega^2 t / 8) for rate*t in [0, 5]."""
    h = np.diag([0.0, omega])
    spec = LindbladSpec(h, (h,), sigma)
    rate = sigma**2 * omega**2 / 8
    rho0 = hb.pure_density(np.array([1, 1]) / np.sqrt(2))
    worst = 0.0
    times = np.linspace(0, 5 / rate, points)
    series = evolve_lindblad_series(rho0, spec, times, dt)
    for t, rho in zip(times, series):
        exact = 0.5 * np.exp(-rate * t)
        worst = max(worst, abs(abs(rho[0, 1]) - exact) / exact)
    return worst


def check_decoherence():
    err = decoherence_error()
    return err <= 1e-6, f"max relative error {err:.2e}"


def stationarity_trials(n=100, seed=9):
    """(stationary cases passing, positive-dissipation cases) over n random trials each."""
    rng = _rng(seed)
    good = positive = 0
    for k in range(n):
        d = 2 + k % 4
        h = hb.random_hermitian(rng, d)
        spec = LindbladSpec(h, (h,), rng.uniform(0.1, 3))
        s = hb.spectral_decompose(h)
        weights = rng.dirichlet(np.ones(len(s.eigenvalues)))
        rho = sum(w * p / np.trace(p).real for w, p in zip(weights, s.projectors))
        rep = stationarity_check(rho, spec)
        if rep.is_stationary and rep.rhs_norm <= 1e-12 and rep.dissipation >= -1e-14 and rep.theorem_holds:
            good += 1
        other = hb.random_density(rng, d)
        if hb.max_abs(hb.commutator(h, other)) > 1e-6 and dissipation(other, spec) > 0:
            positive += 1
    return good, positive


def check_stationarity():
    good, positive = stationarity_trials()
    return good == 100 and positive == 100, f"stationary {good}/100, dissipative {positive}/100"


def rk4_ratio():
    rng = _rng(10)
    h = hb.random_hermitian(rng, 3)
    spec = LindbladSpec(h, (hb.random_hermitian(rng, 3),), 1.0)
    rho0 = hb.random_density(rng, 3)
    t, dt = 2.0, 0.1
    ref = evolve_lindblad(rho0, spec, t, dt / 8)
    e1 = hb.max_abs(evolve_lindblad(rho0, spec, t, dt) - ref)
    e2 = hb.max_abs(evolve_lindblad(rho0, spec, t, dt / 2) - ref)
    return e1 / e2


def check_rk4():
    ratio = rk4_ratio()
    return 12 <= ratio <= 20, f"halving ratio {ratio:.2f}"


def histories_trials(n=100, seed=11):
    """(worst completeness error, worst single-event Born mismatch)."""
    rng = _rng(seed)
    worst_total = worst_born = 0.0
    for k in range(n):
        d = 2 + k % 3
        psi = hb.random_state(rng, d)
        rho = hb.pure_density(psi)
        u1, u2 = hb.random_unitary(rng, d), hb.random_unitary(rng, d)
        s1 = hb.spectral_decompose(hb.random_hermitian(rng, d))
        s2 = hb.spectral_decompose(hb.random_hermitian(rng, d))
        total = exhaustive_family_total(rho, [u1, u2], [list(s1.projectors), list(s2.projectors)])
        worst_total = max(worst_total, abs(total - 1))
        born = hb.born_probabilities(u1 @ psi, s1)
        for (_, p), proj in zip(born, s1.projectors):
            worst_born = max(worst_born, abs(history_probability(History(rho, ((proj, u1),))) - p))
    return worst_total, worst_born


def check_histories():
    total, born = histories_trials()
    return total <= 1e-10 and born <= 1e-12, f"completeness {total:.2e}, born mismatch {born:.2e}"


def _born_ensemble(n, threads=1, horizon=0.0):
    spec = _qubit_spec(seed=42)
    psi0 = np.array([np.sqrt(0.3), np.sqrt(0.7)])
    return spec, run_ensemble(spec, psi0, 200.0, n=n, threads=threads, horizon=horizon)


def check_born_emergence():
    _, summary = _born_ensemble(400, horizon=2.0)
    freq = summary.frequencies[1]
    se = np.sqrt(0.21 / summary.n_trajectories)
    chi = chi_square_born(summary)
    w_mean, w_se = weight_martingale(summary)
    drift = np.abs(w_mean - w_mean[0])
    martingale = bool(np.all(drift <= 3 * w_se + 1e-12))
    ok = abs(freq - 0.7) <= 3 * se and chi.passed and martingale
    return ok, f"freq(1) {freq:.3f} +- {se:.3f}, chi2 {chi.statistic:.2f}, martingale {martingale}"


def check_determinism():
    _, a = _born_ensemble(300, threads=1)
    _, b = _born_ensemble(300, threads=2)
    same = np.array_equal(a.outcomes, b.outcomes) and np.array_equal(
        a.hitting_times, b.hitting_times, equal_nan=True
    )
    return bool(same), "threads 1 vs 2 identical" if same else "threads 1 vs 2 differ"


def check_scenario_roundtrip():
    from .scenario import SCENARIO_PRESETS, emit_scenario, parse_scenario, preset_scenario

    bad = [name for name in SCENARIO_PRESETS if parse_scenario(emit_scenario(preset_scenario(name))) != preset_scenario(name)]
    return not bad, "all presets round-trip" if not bad else f"failed: {', '.join(bad)}"


CHECKS: list[tuple[str, Callable]] = [
    ("spectral-decomposition", check_spectral),
    ("born-probabilities", check_born),
    ("energy-conservation", check_energy_conservation),
    ("unitary-no-go", check_unitary_no_go),
    ("unitary-path-order", check_unitary_path),
    ("norm-martingale", check_norm_martingale),
    ("pure-density-equivalence", check_pure_density),
    ("lindblad-trace-cyclic", check_lindblad_trace),
    ("closed-form-decoherence", check_decoherence),
    ("stationarity-theorem", check_stationarity),
    ("rk4-order", check_rk4),
    ("histories-completeness", check_histories),
    ("born-emergence", check_born_emergence),
    ("determinism", check_determinism),
    ("scenario-roundtrip", check_scenario_roundtrip),
]


def run_checks(names=None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        if names is not None and name not in names:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
