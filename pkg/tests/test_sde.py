import numpy as np
import pytest
from conftest import KET0, KET1, PLUS, SZ, seeds
from hypothesis import given
from hypothesis import strategies as st

from stochastic_reduction import hilbert as hb
from stochastic_reduction.errors import DimensionMismatch, NotHermitian, PositivityLost, StepRejected
from stochastic_reduction.sde import (
    NoiseIncrement,
    StochasticProcessSpec,
    drift_and_diffusion,
    gaussian_localization_ops,
    generate_noise,
    integrate_batch,
    norm_defect,
    run_trajectory,
    step_density,
    step_pure,
    step_pure_batch,
    trajectory_stream,
)
from stochastic_reduction.verify import norm_defect_slope

H01 = np.diag([0.0, 1.0])


def qubit(sigma=1.0, dt=1e-3, **kw):
    return StochasticProcessSpec(H01, (H01,), sigma, dt, **kw)


def test_spec_validation():
    with pytest.raises(DimensionMismatch):
        StochasticProcessSpec(H01, (np.eye(3),), 1.0, 1e-3)
    with pytest.raises(NotHermitian):
        StochasticProcessSpec(H01, (np.array([[0, 1], [0, 0]]),), 1.0, 1e-3)
    with pytest.raises(ValueError):
        StochasticProcessSpec(H01, (H01,), -1.0, 1e-3)
    with pytest.raises(ValueError):
        StochasticProcessSpec(H01, (H01,), 1.0, 0.0)
    with pytest.raises(ValueError):
        StochasticProcessSpec(H01, (), 1.0, 1e-3)
    with pytest.raises(ValueError):
        qubit(scheme="runge-kutta")


def test_zero_sigma_is_schrodinger():
    spec = StochasticProcessSpec(SZ, (SZ,), 0.0, 1e-3)
    drift, diff = drift_and_diffusion(PLUS, spec)
    assert np.allclose(drift, -1j * SZ @ PLUS)
    assert np.allclose(diff[0], 0)


def test_identity_operator_has_no_stochastic_terms():
    spec = StochasticProcessSpec(SZ, (np.eye(2),), 2.0, 1e-3)
    drift, diff = drift_and_diffusion(PLUS, spec)
    assert np.allclose(drift, -1j * SZ @ PLUS)
    assert np.allclose(diff[0], 0)


def test_eigenstate_is_stochastic_fixed_point():
    spec = StochasticProcessSpec(np.zeros((2, 2)), (SZ,), 3.0, 1e-3)
    drift, diff = drift_and_diffusion(KET1, spec)
    assert np.allclose(drift, 0)
    assert np.allclose(diff[0], 0)
    out = step_pure(KET1, spec, NoiseIncrement([0.05]))
    assert hb.phase_distance(out, KET1) < 1e-14


def test_step_pure_zero_sigma_matches_unitary():
    dt = 1e-4
    spec = StochasticProcessSpec(SZ, (SZ,), 0.0, dt)
    out = step_pure(PLUS, spec, NoiseIncrement([0.01]))
    exact = hb.hamiltonian_step(SZ, dt) @ PLUS
    assert np.linalg.norm(out - exact) <= 10 * dt**2


def test_eigenstate_only_rotates_under_h():
    h = np.diag([0.0, 1.0, 2.5])
    spec = StochasticProcessSpec(h, (h,), 1.0, 1e-3)
    e = np.array([0, 1, 0], dtype=complex)
    out = step_pure(e, spec, NoiseIncrement([0.03]))
    assert hb.phase_distance(out, e) < 1e-12


def test_single_step_martingale():
    spec = qubit(dt=1e-3)
    n = 100_000
    rng = np.random.default_rng(3)
    z = np.tile(np.array([np.sqrt(0.3), np.sqrt(0.7)], dtype=complex), (n, 1))
    dw = rng.normal(scale=np.sqrt(spec.dt), size=(n, 1))
    new, _ = step_pure_batch(z, spec, dw)
    change = np.abs(new[:, 1]) ** 2 - 0.7
    assert abs(change.mean()) <= 4 * change.std() / np.sqrt(n)


def test_norm_defect_scales_as_three_halves():
    slope, means = norm_defect_slope()
    assert slope == pytest.approx(1.5, abs=0.2)
    assert means[0] > means[1] > means[2]


def test_plain_euler_defect_is_first_order():
    # without the diffusion-derivative correction the defect is O(dt)
    slope, _ = norm_defect_slope(lambda dt: qubit(dt=dt, scheme="euler"))
    assert slope == pytest.approx(1.0, abs=0.1)


def test_norm_defect_single_step():
    assert norm_defect(PLUS, qubit(), NoiseIncrement([0.0])) < 1e-6


def test_step_rejected_for_huge_steps():
    spec = StochasticProcessSpec(H01, (H01,), 20.0, 1.0)
    with pytest.raises(StepRejected):
        step_pure(PLUS, spec, NoiseIncrement([2.0]))


def test_noise_length_checked():
    with pytest.raises(DimensionMismatch):
        step_pure(PLUS, qubit(), NoiseIncrement([0.1, 0.2]))


def test_step_density_commuting_state_fixed():
    rho = np.diag([0.4, 0.6]).astype(complex)
    out = step_density(rho, qubit(sigma=3.0), NoiseIncrement([0.07]))
    assert np.array_equal(out, rho)


def test_step_density_zero_sigma_matches_unitary():
    rng = np.random.default_rng(1)
    h = hb.random_hermitian(rng, 3)
    spec = StochasticProcessSpec(h, (h,), 0.0, 1e-3)
    rho = hb.random_density(rng, 3)
    u = hb.hamiltonian_step(h, spec.dt)
    out = step_density(rho, spec, NoiseIncrement([0.02]))
    assert hb.max_abs(out - u @ rho @ u.conj().T) <= 10 * spec.dt**2


def test_pure_and_density_forms_agree():
    rng = np.random.default_rng(2)
    spec = StochasticProcessSpec(hb.random_hermitian(rng, 3), (np.diag([0.0, 0.5, 1.0]),), 1.0, 1e-4)
    z = hb.random_state(rng, 3)
    rho = hb.pure_density(z)
    worst = 0.0
    for _ in range(3000):
        dw = rng.normal(scale=np.sqrt(spec.dt), size=1)
        z = step_pure(z, spec, dw)
        rho = step_density(rho, spec, dw)
        worst = max(worst, hb.max_abs(rho - hb.pure_density(z)))
    assert worst <= spec.dt


def test_step_density_positivity_guard():
    rho = hb.pure_density(PLUS)
    spec = StochasticProcessSpec(H01, (H01,), 10.0, 0.5)
    with pytest.raises(PositivityLost):
        step_density(rho, spec, NoiseIncrement([1.5]))


def test_noise_statistics():
    dt = 1e-3
    noise = generate_noise(1_000_000, dt, trajectory_stream(9, 0)).values
    assert abs(noise.mean()) <= 4e-3 * np.sqrt(dt)
    assert noise.var() == pytest.approx(dt, rel=0.01)


@given(seeds, st.integers(0, 10_000))
def test_noise_streams_are_reproducible(seed, index):
    a = generate_noise(16, 1e-3, trajectory_stream(seed, index)).values
    b = generate_noise(16, 1e-3, trajectory_stream(seed, index)).values
    c = generate_noise(16, 1e-3, trajectory_stream(seed, index + 1)).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_eigenstate_resolves_immediately():
    rec = run_trajectory(qubit(), KET1, 10.0)
    assert rec.outcome == 1
    assert rec.hitting_time == 0.0


def test_zero_sigma_never_resolves():
    rec = run_trajectory(qubit(sigma=0.0), PLUS, 2.0)
    assert rec.outcome is None
    assert rec.hitting_time is None
    assert rec.times[-1] == pytest.approx(2.0)


def test_trajectory_record_invariants():
    rec = run_trajectory(qubit(seed=5), PLUS, 200.0, stride=50)
    assert rec.resolved
    assert np.all(np.diff(rec.times) > 0)
    assert np.allclose(rec.projector_weights.sum(axis=1), 1, atol=1e-10)
    assert rec.projector_weights[-1, rec.outcome] >= 1 - 1e-6
    assert rec.times[-2] < rec.hitting_time <= rec.times[-1]
    snaps = list(rec.snapshots())
    assert len(snaps) == len(rec.times)
    assert set(snaps[0]) == {"t", "amplitudes", "projector_weights"}


def test_equal_superposition_outcomes_balanced():
    batch = integrate_batch(qubit(seed=11), PLUS, np.arange(400), 200.0)
    ones = np.mean(batch.outcomes == 1)
    assert np.all(batch.outcomes >= 0)
    assert ones == pytest.approx(0.5, abs=3 * np.sqrt(0.25 / 400))


def test_trajectory_independent_of_batch():
    spec = qubit(seed=4)
    psi0 = np.array([np.sqrt(0.3), np.sqrt(0.7)])
    batch = integrate_batch(spec, psi0, [3, 7, 12], 200.0)
    alone = run_trajectory(spec, psi0, 200.0, index=7)
    assert batch.outcomes[1] == alone.outcome
    assert batch.hitting_times[1] == alone.hitting_time


def test_localization_operators():
    ops = gaussian_localization_ops(5, width=2.0)
    assert len(ops) == 5
    assert np.allclose(np.diag(ops[2]).real, np.exp(-((np.arange(5) - 2) ** 2) / 8))


def test_localization_without_hamiltonian_reduces_to_a_site():
    ops = gaussian_localization_ops(4)
    spec = StochasticProcessSpec(np.zeros((4, 4)), ops, 4.0, 1e-3, include_hamiltonian=False, seed=2)
    rec = run_trajectory(spec, np.ones(4) / 2, 200.0)
    assert rec.resolved
    site = np.argmax(np.abs(rec.states[-1]))
    assert abs(rec.states[-1][site]) ** 2 >= 1 - 1e-6


def test_compiled_kernel_matches_reference_step():
    rng = np.random.default_rng(6)
    h = hb.random_hermitian(rng, 3)
    spec = StochasticProcessSpec(h, (np.diag([0.0, 1.0, 2.0]), hb.random_hermitian(rng, 3)), 1.0, 1e-3, seed=3)
    psi0 = hb.random_state(rng, 3)
    batch = integrate_batch(spec, psi0, [5], 5 * spec.dt, stride=1)
    normals = trajectory_stream(3, 5).standard_normal((4096, 2))[:5]
    z = psi0[None, :]
    for k in range(5):
        z, _ = step_pure_batch(z, spec, normals[k : k + 1] * np.sqrt(spec.dt))
        assert np.allclose(batch.sample_states[k + 1, 0], z[0], atol=1e-13)
