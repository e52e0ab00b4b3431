import numpy as np
import pytest
from conftest import PLUS, SZ, dims, seeds
from hypothesis import given, settings

from stochastic_reduction import hilbert as hb
from stochastic_reduction.errors import DimensionMismatch
from stochastic_reduction.lindblad import (
    LindbladSpec,
    dissipation,
    evolve_lindblad,
    evolve_lindblad_series,
    lindblad_rhs,
    stationarity_check,
)
from stochastic_reduction.sde import StochasticProcessSpec
from stochastic_reduction.verify import decoherence_error, rk4_ratio, stationarity_trials


def random_spec(rng, d, sigma=None):
    sigma = rng.uniform(0, 2) if sigma is None else sigma
    return LindbladSpec(hb.random_hermitian(rng, d), (hb.random_hermitian(rng, d),), sigma)


def test_commuting_state_has_zero_rhs():
    h = np.diag([0.0, 1.0, 2.0])
    spec = LindbladSpec(h, (h,), 1.3)
    assert hb.max_abs(lindblad_rhs(np.diag([0.2, 0.3, 0.5]), spec)) == 0.0


def test_rhs_dimension_checked():
    with pytest.raises(DimensionMismatch):
        lindblad_rhs(np.eye(3) / 3, LindbladSpec(SZ, (SZ,), 1.0))


def test_two_level_closed_form():
    omega, sigma = 1.5, 0.8
    h = np.diag([0.0, omega])
    spec = LindbladSpec(h, (h,), sigma)
    rho0 = hb.pure_density(PLUS)
    for t in (0.5, 2.0, 7.0):
        rho = evolve_lindblad(rho0, spec, t, 1e-3)
        exact = rho0[0, 1] * np.exp(1j * omega * t) * np.exp(-(sigma**2) * omega**2 * t / 8)
        assert abs(rho[0, 1] - exact) <= 1e-9


def test_closed_form_decoherence_relative_error():
    assert decoherence_error(points=6) <= 1e-6


@given(seeds, dims)
def test_rhs_traceless_and_cyclic_identity(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    rho = hb.random_density(rng, d)
    assert abs(np.trace(lindblad_rhs(rho, spec))) <= 1e-12
    assert abs(np.trace(rho @ hb.commutator(spec.H.matrix, rho))) <= 1e-12


def test_zero_time_is_identity():
    rng = np.random.default_rng(0)
    rho = hb.random_density(rng, 3)
    assert np.array_equal(evolve_lindblad(rho, random_spec(rng, 3), 0.0, 1e-2), rho)


@settings(max_examples=20)
@given(seeds, dims)
def test_zero_sigma_matches_unitary(seed, d):
    rng = np.random.default_rng(seed)
    h = hb.random_hermitian(rng, d)
    spec = LindbladSpec(h, (h,), 0.0)
    t = 10.0 / max(1.0, np.linalg.norm(h, 2))
    rho = hb.random_density(rng, d)
    u = hb.hamiltonian_step(h, t)
    assert hb.max_abs(evolve_lindblad(rho, spec, t, t / 1000) - u @ rho @ u.conj().T) <= 1e-8


def test_long_time_limit_is_born_mixture():
    h = np.diag([0.0, 1.0])
    spec = LindbladSpec(h, (h,), 1.0)
    psi = np.array([np.sqrt(0.3), np.sqrt(0.7)])
    rho = evolve_lindblad(hb.pure_density(psi), spec, 300.0, 1e-2)
    assert np.allclose(rho, np.diag([0.3, 0.7]), atol=1e-12)


@given(seeds, dims)
def test_trace_preserved_over_time(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    series = evolve_lindblad_series(hb.random_density(rng, d), spec, [0.5, 1.0, 2.0], 1e-2)
    for rho in series:
        assert abs(np.trace(rho) - 1) <= 1e-10


def test_series_rejects_descending_times():
    with pytest.raises(ValueError):
        evolve_lindblad_series(np.eye(2) / 2, LindbladSpec(SZ, (SZ,), 1.0), [1.0, 0.5], 1e-2)


def test_rk4_is_fourth_order():
    assert 12 <= rk4_ratio() <= 20


def test_stationary_function_of_h():
    h = np.diag([0.0, 1.0, 3.0])
    spec = LindbladSpec(h, (h,), 1.0)
    rho = hb.spectral_decompose(h).function(np.exp)
    rho = rho / np.trace(rho)
    rep = stationarity_check(rho, spec)
    assert rep.is_stationary and rep.theorem_holds
    assert rep.commutator_norms == (0.0, 0.0)


def test_plus_state_not_stationary():
    rep = stationarity_check(hb.pure_density(PLUS), LindbladSpec(SZ, (SZ,), 1.0))
    assert not rep.is_stationary
    assert rep.commutator_norms[1] == pytest.approx(1.0)
    assert rep.dissipation > 0


@given(seeds, dims)
def test_dissipation_non_negative(seed, d):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, d)
    rho = hb.random_density(rng, d)
    diss = dissipation(rho, spec)
    assert diss >= -1e-14
    # purity loss rate: d/dt Tr rho^2 = -2 * dissipation
    assert -np.trace(rho @ lindblad_rhs(rho, spec)).real == pytest.approx(diss, abs=1e-12)


def test_stationarity_theorem_randomized():
    good, positive = stationarity_trials()
    assert good == 100
    assert positive == 100


def test_from_process_drops_hamiltonian():
    spec = StochasticProcessSpec(SZ, (np.diag([0.0, 1.0]),), 1.0, 1e-3, include_hamiltonian=False)
    assert np.allclose(LindbladSpec.from_process(spec).H.matrix, 0)
