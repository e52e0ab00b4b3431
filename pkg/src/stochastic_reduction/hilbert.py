"""Finite-dimensional Hilbert-space algebra.

States are plain numpy arrays: a state vector is a complex array of shape
``(d,)`` and a density matrix a complex array of shape ``(d, d)``.
Observables carry their spectral decomposition in a
:class:`HermitianObservable`. Units have hbar = 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidState,
    NotHermitian,
    NotOrthogonal,
    NotUnitary,
    ZeroProbabilityOutcome,
)

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
NORM_TOL = 1e-10
ZERO_PROBABILITY = 1e-14


def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_state(psi, tol: float = NORM_TOL) -> np.ndarray:
    """Validate a normalized state vector and return it as a complex array."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or psi.size == 0:
        raise DimensionMismatch(f"expected a 1-d state vector, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if not np.isfinite(norm) or abs(norm - 1.0) > tol:
        raise InvalidState(f"state vector norm {norm!r} differs from 1")
    return psi


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise InvalidState("cannot normalize the zero vector")
    return psi / norm


def as_density(rho, tol: float = 1e-12, psd_tol: float | None = None) -> np.ndarray:
    """Validate a density matrix: self-adjoint, unit trace, positive.

    ``psd_tol`` (default ``tol``) bounds how negative an eigenvalue may be.
    """
    psd_tol = tol if psd_tol is None else psd_tol
    rho = as_matrix(rho)
    scale = max(1.0, float(np.max(np.abs(rho))))
    if np.max(np.abs(rho - rho.conj().T)) > tol * scale:
        raise InvalidState("density matrix is not self-adjoint")
    if abs(np.trace(rho) - 1.0) > tol * rho.shape[0]:
        raise InvalidState(f"density matrix trace {np.trace(rho)!r} differs from 1")
    if np.linalg.eigvalsh(rho)[0] < -psd_tol * rho.shape[0]:
        raise InvalidState("density matrix has a negative eigenvalue")
    return rho


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def max_abs(m) -> float:
    return float(np.max(np.abs(m))) if np.size(m) else 0.0


@dataclass(frozen=True, eq=False)
class HermitianObservable:
    """Self-adjoint operator with its spectral decomposition.

    ``eigenvalues[n]`` is the n-th distinct eigenvalue (ascending) with
    eigenspace projector ``projectors[n]``. ``eigenvectors`` holds an
    orthonormal eigenbasis whose columns are tagged by ``groups``, the index of
    the distinct eigenvalue each column belongs to.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    projectors: tuple
    multiplicities: tuple
    eigenvectors: np.ndarray = field(repr=False)
    groups: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.matrix - np.diag(np.diag(self.matrix)))

    @property
    def is_degenerate(self) -> bool:
        return any(m > 1 for m in self.multiplicities)

    def function(self, f) -> np.ndarray:
        """Return f(S) = sum_n f(s_n) P_n."""
        out = np.zeros_like(self.matrix)
        for s, p in zip(self.eigenvalues, self.projectors):
            out = out + f(s) * p
        return out


def spectral_decompose(m, group_tol: float | None = None) -> HermitianObservable:
    """Diagonalize a self-adjoint matrix, merging near-degenerate eigenvalues.

    Eigenvalues closer than ``group_tol`` (default ``1e-9 * max(1, spectral
    radius)``) to their neighbour share one projector.
    """
    m = as_matrix(m)
    if max_abs(m - m.conj().T) > HERMITIAN_TOL:
        raise NotHermitian("matrix is not self-adjoint within 1e-10")
    m = 0.5 * (m + m.conj().T)
    values, vectors = np.linalg.eigh(m)
    if group_tol is None:
        group_tol = 1e-9 * max(1.0, float(np.max(np.abs(values))))
    if group_tol <= 0:
        raise ValueError("group_tol must be positive")

    groups = np.zeros(len(values), dtype=int)
    for k in range(1, len(values)):
        groups[k] = groups[k - 1] + (values[k] - values[k - 1] > group_tol)
    n_groups = groups[-1] + 1

    eigenvalues = np.empty(n_groups)
    projectors = []
    multiplicities = []
    for g in range(n_groups):
        cols = vectors[:, groups == g]
        eigenvalues[g] = values[groups == g].mean()
        projectors.append(cols @ cols.conj().T)
        multiplicities.append(cols.shape[1])
    return HermitianObservable(
        matrix=m,
        eigenvalues=eigenvalues,
        projectors=tuple(projectors),
        multiplicities=tuple(multiplicities),
        eigenvectors=vectors,
        groups=groups,
    )


def observable(m) -> HermitianObservable:
    """Coerce a matrix or an existing observable to a HermitianObservable."""
    if isinstance(m, HermitianObservable):
        return m
    return spectral_decompose(m)


def _check_dims(a_dim: int, b_dim: int):
    if a_dim != b_dim:
        raise DimensionMismatch(f"dimension {a_dim} does not match {b_dim}")


def expectation(rho, s) -> float:
    """Return Tr(rho S) as a real number."""
    rho = as_matrix(rho)
    s = observable(s)
    _check_dims(rho.shape[0], s.dim)
    value = np.trace(rho @ s.matrix)
    scale = max(1.0, max_abs(s.matrix))
    if abs(value.imag) > 1e-12 * scale * rho.shape[0]:
        raise NotHermitian(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def projector_weights(psi, s: HermitianObservable) -> np.ndarray:
    """Return <psi|P_n|psi> for every eigenspace of ``s``."""
    psi = np.asarray(psi, dtype=complex)
    _check_dims(psi.shape[-1], s.dim)
    amps = np.abs(s.eigenvectors.conj().T @ psi) ** 2
    return np.bincount(s.groups, weights=amps, minlength=len(s.eigenvalues))


def born_probabilities(psi, s) -> list[tuple[float, float]]:
    """Born-rule probabilities ``[(s_n, p_n), ...]`` in ascending eigenvalue order."""
    psi = as_state(psi)
    s = observable(s)
    weights = projector_weights(psi, s)
    return [(float(v), float(p)) for v, p in zip(s.eigenvalues, weights)]


def reduce(psi, s, n: int) -> np.ndarray:
    """Project onto the n-th eigenspace of ``s`` and renormalize."""
    psi = as_state(psi)
    s = observable(s)
    _check_dims(psi.size, s.dim)
    projected = s.projectors[n] @ psi
    prob = float(np.vdot(projected, projected).real)
    if prob <= ZERO_PROBABILITY:
        raise ZeroProbabilityOutcome(
            f"outcome {n} (eigenvalue {s.eigenvalues[n]:g}) has probability {prob:.3e}"
        )
    return projected / np.sqrt(prob)


def is_pure(rho, tol: float = 1e-10) -> bool:
    rho = as_matrix(rho)
    return max_abs(rho @ rho - rho) <= tol


def check_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    u = as_matrix(u)
    if max_abs(u.conj().T @ u - np.eye(u.shape[0])) > tol:
        raise NotUnitary("U^dagger U differs from the identity")
    return u


def evolve_unitary(state, u, tol: float = UNITARY_TOL) -> np.ndarray:
    """Apply U to a state vector (U psi) or a density matrix (U rho U^dagger)."""
    u = check_unitary(u, tol)
    state = np.asarray(state, dtype=complex)
    _check_dims(state.shape[0], u.shape[0])
    if state.ndim == 1:
        return u @ state
    return u @ state @ u.conj().T


def hamiltonian_step(h, dt: float) -> np.ndarray:
    """exp(-i H dt) built from the spectral decomposition of H."""
    h = observable(h)
    return h.function(lambda s: np.exp(-1j * s * dt))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a @ b - b @ a


def infinitesimal_unitary(psi, dpsi, tol: float = 1e-10) -> np.ndarray:
    """U = 1 + |dpsi><psi| - |psi><dpsi|, which maps psi to psi + dpsi exactly.

    U is unitary up to terms quadratic in ``dpsi``; ``dpsi`` must be
    orthogonal to ``psi``.
    """
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    _check_dims(psi.size, dpsi.size)
    overlap = np.vdot(psi, dpsi)
    if abs(overlap) > tol:
        raise NotOrthogonal(f"<psi|dpsi> = {overlap:.3e}")
    return np.eye(psi.size, dtype=complex) + np.outer(dpsi, psi.conj()) - np.outer(psi, dpsi.conj())


def unitary_path(psi_start, psi_end, k: int) -> list[np.ndarray]:
    """Chain of k infinitesimal unitaries along the geodesic from psi_start to psi_end.

    The relative phase is absorbed into ``psi_end`` first, so the product maps
    ``psi_start`` to ``psi_end`` up to a global phase, with an O(1/k) error
    coming from the second-order non-unitarity of each factor.
    """
    psi_start = as_state(psi_start)
    psi_end = as_state(psi_end)
    _check_dims(psi_start.size, psi_end.size)
    if k < 1:
        raise ValueError("k must be at least 1")
    overlap = np.vdot(psi_start, psi_end)
    c = abs(overlap)
    if c > 0:
        psi_end = psi_end * np.conj(overlap) / c
    theta = float(np.arccos(min(1.0, c)))
    ortho = psi_end - c * psi_start
    ortho_norm = np.linalg.norm(ortho)
    if theta == 0.0 or ortho_norm < 1e-15:
        return [np.eye(psi_start.size, dtype=complex) for _ in range(k)]
    ortho = ortho / ortho_norm

    h = theta / k
    unitaries = []
    for i in range(k):
        angle = i * h
        point = np.cos(angle) * psi_start + np.sin(angle) * ortho
        tangent = h * (-np.sin(angle) * psi_start + np.cos(angle) * ortho)
        unitaries.append(infinitesimal_unitary(point, tangent))
    return unitaries


def reaches_all(u, psi, targets, eps: float) -> bool:
    """Whether the single map ``u`` sends ``psi`` within ``eps`` of every target.

    For orthonormal targets this is false for any eps < sqrt(2)/2, since the
    targets are sqrt(2) apart and one image cannot be close to both.
    """
    image = np.asarray(u, dtype=complex) @ np.asarray(psi, dtype=complex)
    return all(np.linalg.norm(image - np.asarray(t, dtype=complex)) <= eps for t in targets)


def phase_distance(a, b) -> float:
    """min over phi of ||a - e^{i phi} b||."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    sq = np.vdot(a, a).real + np.vdot(b, b).real - 2 * abs(np.vdot(a, b))
    return float(np.sqrt(max(sq, 0.0)))


# random constructions used by tests, the verify command and the scripts


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (z + z.conj().T)


def random_state(rng: np.random.Generator, d: int) -> np.ndarray:
    return normalize(rng.standard_normal(d) + 1j * rng.standard_normal(d))


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    z = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real
