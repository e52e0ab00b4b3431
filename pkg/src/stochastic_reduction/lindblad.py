"""Deterministic evolution of the stochastic mean E[rho].

    dE[rho]/dt = -i[H, E[rho]] - (sigma^2 / 8) sum_j [A_j, [A_j, E[rho]]]

integrated with fixed-step classical RK4. This is the reference the
Monte Carlo ensembles are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, PositivityLost
from .hilbert import HermitianObservable, as_density, commutator, max_abs, observable


@dataclass(frozen=True, eq=False)
class LindbladSpec:
    H: HermitianObservable
    collapse_ops: tuple
    sigma: float

    def __post_init__(self):
        h = observable(self.H)
        ops = tuple(observable(a) for a in self.collapse_ops)
        for a in ops:
            if a.dim != h.dim:
                raise DimensionMismatch(f"collapse operator dim {a.dim} != H dim {h.dim}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "collapse_ops", ops)

    @classmethod
    def from_process(cls, spec) -> "LindbladSpec":
        """Averaged dynamics of a StochasticProcessSpec."""
        h = spec.H if spec.include_hamiltonian else np.zeros_like(spec.H.matrix)
        return cls(h, spec.collapse_ops, spec.sigma)

    @property
    def dim(self) -> int:
        return self.H.dim


def lindblad_rhs(rho, spec: LindbladSpec) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (spec.dim, spec.dim):
        raise DimensionMismatch(f"density shape {rho.shape} does not match dim {spec.dim}")
    out = -1j * commutator(spec.H.matrix, rho)
    k = spec.sigma**2 / 8
    for a in spec.collapse_ops:
        out = out - k * commutator(a.matrix, commutator(a.matrix, rho))
    return out


def _rk4_step(rho, spec, h):
    k1 = lindblad_rhs(rho, spec)
    k2 = lindblad_rhs(rho + 0.5 * h * k1, spec)
    k3 = lindblad_rhs(rho + 0.5 * h * k2, spec)
    k4 = lindblad_rhs(rho + h * k3, spec)
    new = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (new + new.conj().T)


def evolve_lindblad_series(rho0, spec: LindbladSpec, times, dt: float, positivity_tol=None):
    """E[rho] at each of the ascending ``times``, starting from ``rho0`` at t = 0.

    Each interval between requested times is covered with equal RK4 steps no
    longer than ``dt``. With ``positivity_tol`` set, a minimum eigenvalue below
    ``-positivity_tol`` at any requested time raises PositivityLost.
    """
    rho = as_density(rho0, tol=1e-8).copy()
    times = np.asarray(times, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be non-negative and ascending")
    out = np.empty((len(times), spec.dim, spec.dim), dtype=complex)
    t = 0.0
    for i, target in enumerate(times):
        span = target - t
        n = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        for _ in range(n):
            rho = _rk4_step(rho, spec, span / n)
        t = target
        if positivity_tol is not None:
            lowest = np.linalg.eigvalsh(rho)[0]
            if lowest < -positivity_tol:
                raise PositivityLost(f"minimum eigenvalue {lowest:.3e} at t={t:g}")
        out[i] = rho
    return out


def evolve_lindblad(rho0, spec: LindbladSpec, t: float, dt: float, positivity_tol=None) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    return evolve_lindblad_series(rho0, spec, [t], dt, positivity_tol)[0]


@dataclass(frozen=True)
class StationarityReport:
    is_stationary: bool
    rhs_norm: float
    commutator_norms: tuple  # (||[H, rho]||, max_j ||[A_j, rho]||)
    dissipation: float
    theorem_holds: bool


def dissipation(rho, spec: LindbladSpec) -> float:
    """Purity-loss rate (sigma^2 / 8) sum_j Tr [A_j, rho][A_j, rho]^dagger, always >= 0.

    Equals -Tr(rho * rhs) because Tr rho [H, rho] vanishes under cyclic
    permutation.
    """
    rho = np.asarray(rho, dtype=complex)
    total = 0.0
    for a in spec.collapse_ops:
        c = commutator(a.matrix, rho)
        total += float(np.sum(np.abs(c) ** 2))
    return spec.sigma**2 / 8 * total


def stationarity_check(rho, spec: LindbladSpec, tol: float = 1e-12) -> StationarityReport:
    """Test whether ``rho`` is a stationary point of the averaged dynamics.

    Norms are max-abs entries. ``theorem_holds`` records that a stationary
    ``rho`` commutes with H and every A_j (to within ``1e-6 * dim``) and that
    the dissipation is non-negative.
    """
    rho = as_density(rho, tol=1e-8)
    rhs = max_abs(lindblad_rhs(rho, spec))
    ch = max_abs(commutator(spec.H.matrix, rho))
    ca = max((max_abs(commutator(a.matrix, rho)) for a in spec.collapse_ops), default=0.0)
    diss = dissipation(rho, spec)
    stationary = rhs <= tol
    bound = 1e-6 * spec.dim
    holds = diss >= -1e-14
    if stationary and spec.sigma > 0:
        holds = holds and ch <= bound and ca <= bound
    return StationarityReport(stationary, rhs, (ch, ca), diss, holds)
