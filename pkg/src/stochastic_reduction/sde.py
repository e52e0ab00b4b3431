"""Ito integrators for the norm-preserving stochastic Schrodinger equation.

The pure-state process is

    d|z> = [alpha dt + sum_j beta_j dW_j] |z>
    alpha = -i H - (sigma^2 / 8) sum_j (A_j - <A_j>)^2
    beta_j = (sigma / 2) (A_j - <A_j>)

with Hermitian collapse operators A_j and <A_j> = <z|A_j|z> / <z|z>. The
density-matrix form is

    d rho = -i[H, rho] dt - (sigma^2 / 8) sum_j [A_j, [A_j, rho]] dt
            + (sigma / 2) sum_j [rho, [rho, A_j]] dW_j .

Both are stepped with an Euler-Maruyama update plus the Milstein correction
(the ``"milstein"`` scheme, default) or plain Euler-Maruyama (``"euler"``).
The correction cancels the O(dt) part of the per-step norm defect that plain
Euler-Maruyama leaves behind, so renormalization only removes O(dt^1.5) drift.
The commutator with H is not stepped explicitly: each step ends with the exact
propagator exp(-iH dt), which keeps sigma = 0 runs exactly unitary.

Trajectories are integrated in vectorized batches. Each trajectory owns a
Philox substream keyed on (master seed, trajectory index), consumed in fixed
blocks, so a trajectory's path never depends on which batch or thread ran it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ._kernels import advance_rows
from .errors import DimensionMismatch, PositivityLost, StepRejected
from .hilbert import (
    HermitianObservable,
    as_density,
    as_state,
    commutator,
    hamiltonian_step,
    max_abs,
    observable,
)

SCHEMES = ("milstein", "euler")
STEP_REJECT_TOL = 0.1
FINE_BLOCK = 4096
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class StochasticProcessSpec:
    """Everything needed to define one stochastic run.

    Matrices passed for ``H`` or ``collapse_ops`` are decomposed on
    construction. ``include_hamiltonian=False`` keeps only the stochastic
    terms, as in the localization approximation.
    """

    H: HermitianObservable
    collapse_ops: tuple
    sigma: float
    dt: float
    include_hamiltonian: bool = True
    seed: int = 0
    scheme: str = "milstein"

    def __post_init__(self):
        h = observable(self.H)
        ops = tuple(observable(a) for a in self.collapse_ops)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "collapse_ops", ops)
        if not ops:
            raise ValueError("at least one collapse operator is required")
        for a in ops:
            if a.dim != h.dim:
                raise DimensionMismatch(f"collapse operator dim {a.dim} != H dim {h.dim}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def dim(self) -> int:
        return self.H.dim

    @property
    def n_noise(self) -> int:
        return len(self.collapse_ops)

    @property
    def reference(self) -> HermitianObservable:
        """Observable whose eigenspaces define reduction outcomes."""
        return self.collapse_ops[0]

    @property
    def energy_driven(self) -> bool:
        h = self.H.matrix
        return all(max_abs(commutator(h, a.matrix)) <= 1e-10 for a in self.collapse_ops)

    def replace(self, **changes) -> "StochasticProcessSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    """One Wiener increment dW_j per collapse operator."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_1d(np.asarray(self.values, dtype=float)))

    def __len__(self):
        return len(self.values)


def trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for trajectory ``index`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def generate_noise(count: int, dt: float, stream: np.random.Generator) -> NoiseIncrement:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return NoiseIncrement(stream.standard_normal(count) * np.sqrt(dt))


class _Operator:
    """Row-wise application of a fixed matrix to a batch of states.

    Rows are processed independently with a fixed operation order so a
    state's result is bit-identical whatever batch it sits in.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        self.diagonal = not np.any(matrix - np.diag(np.diag(matrix)))
        self.diag = np.diag(matrix).copy()
        self.columns = [matrix[:, j].copy() for j in range(matrix.shape[1])]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return z * self.diag
        out = z[:, 0:1] * self.columns[0]
        for j in range(1, len(self.columns)):
            out = out + z[:, j : j + 1] * self.columns[j]
        return out


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Re <a_n|b_n> for every row n."""
    return (a.conj() * b).real.sum(axis=1)


class _Kernel:
    def __init__(self, spec: StochasticProcessSpec):
        self.spec = spec
        self.h = _Operator(spec.H.matrix)
        self.u = _Operator(hamiltonian_step(spec.H, spec.dt)) if spec.include_hamiltonian else None
        self.ops = [_Operator(a.matrix) for a in spec.collapse_ops]
        ref = spec.reference
        self.n_outcomes = len(ref.eigenvalues)
        if ref.is_diagonal:
            diag = np.diag(ref.matrix).real
            self.basis_groups = np.array(
                [int(np.argmin(np.abs(ref.eigenvalues - v))) for v in diag]
            )
            self.to_eigenbasis = None
        else:
            self.basis_groups = ref.groups
            self.to_eigenbasis = _Operator(ref.eigenvectors.conj().T)

    def weights(self, z: np.ndarray) -> np.ndarray:
        amps = z if self.to_eigenbasis is None else self.to_eigenbasis(z)
        probs = amps.real**2 + amps.imag**2
        out = np.zeros((z.shape[0], self.n_outcomes))
        for k, g in enumerate(self.basis_groups):
            out[:, g] += probs[:, k]
        norm = out.sum(axis=1, keepdims=True)
        return out / norm

    def centred(self, z: np.ndarray):
        """Return (<A_j>, (A_j - <A_j>) z) for every collapse operator."""
        norm2 = _rowdot(z, z)
        means, bz = [], []
        for op in self.ops:
            az = op(z)
            m = _rowdot(z, az) / norm2
            means.append(m)
            bz.append(az - m[:, None] * z)
        return means, bz

    def drift_diffusion(self, z: np.ndarray, with_h: bool = True):
        s = self.spec.sigma
        means, bz = self.centred(z)
        drift = np.zeros_like(z)
        if with_h and self.spec.include_hamiltonian:
            drift = -1j * self.h(z)
        for op, m, b in zip(self.ops, means, bz):
            drift = drift - (s * s / 8) * (op(b) - m[:, None] * b)
        diffusion = [(s / 2) * b for b in bz]
        return drift, diffusion, means, bz

    def increment(self, z: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """Unnormalized one-step update for a batch ``z`` of shape (n, d).

        The stochastic increment is taken first and the exact propagator
        exp(-iH dt) applied after it, so sigma = 0 is exactly unitary.
        """
        dt = self.spec.dt
        s = self.spec.sigma
        drift, diffusion, means, bz = self.drift_diffusion(z, with_h=False)
        new = z + drift * dt
        for j, d in enumerate(diffusion):
            new = new + d * dw[:, j : j + 1]
        if self.spec.scheme == "milstein" and s > 0:
            norm2 = _rowdot(z, z)
            m = len(self.ops)
            for j in range(m):
                for k in range(m):
                    coeff = dw[:, j] * dw[:, k] - (dt if j == k else 0.0)
                    bkbj = self.ops[k](bz[j]) - means[k][:, None] * bz[j]
                    cov = _rowdot(bz[k], bz[j]) / norm2
                    new = new + (s * s / 8) * (bkbj - 2 * cov[:, None] * z) * coeff[:, None]
        if self.u is not None:
            new = self.u(new)
        return new


def _as_noise_array(noise, n_noise: int) -> np.ndarray:
    values = noise.values if isinstance(noise, NoiseIncrement) else np.asarray(noise, dtype=float)
    values = np.atleast_1d(values)
    if values.shape[-1] != n_noise:
        raise DimensionMismatch(f"noise has {values.shape[-1]} entries, expected {n_noise}")
    return values


def drift_and_diffusion(z, spec: StochasticProcessSpec):
    """Drift alpha|z> and the diffusion vectors beta_j|z> at state ``z``."""
    z = as_state(z)
    if z.size != spec.dim:
        raise DimensionMismatch(f"state dim {z.size} != spec dim {spec.dim}")
    drift, diffusion, _, _ = _Kernel(spec).drift_diffusion(z[None, :])
    return drift[0], [d[0] for d in diffusion]


def step_pure_batch(z: np.ndarray, spec: StochasticProcessSpec, dw: np.ndarray, kernel=None):
    """Advance a batch of normalized states by one step.

    Returns the renormalized states and the pre-renormalization norm defect
    ``| ||z'|| - 1 |`` of each row. No rejection is applied here.
    """
    kernel = kernel or _Kernel(spec)
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    dw = np.atleast_2d(np.asarray(dw, dtype=float))
    new = kernel.increment(z, dw)
    norms = np.sqrt(_rowdot(new, new))
    return new / norms[:, None], np.abs(norms - 1.0)


def norm_defect(z, spec: StochasticProcessSpec, noise) -> float:
    """Pre-renormalization norm defect of a single step."""
    z = as_state(z)
    dw = _as_noise_array(noise, spec.n_noise)
    return float(step_pure_batch(z[None, :], spec, dw[None, :])[1][0])


def step_pure(z, spec: StochasticProcessSpec, noise) -> np.ndarray:
    z = as_state(z)
    if z.size != spec.dim:
        raise DimensionMismatch(f"state dim {z.size} != spec dim {spec.dim}")
    dw = _as_noise_array(noise, spec.n_noise)
    new, defect = step_pure_batch(z[None, :], spec, dw[None, :])
    if defect[0] > STEP_REJECT_TOL:
        raise StepRejected(f"norm defect {defect[0]:.3g} exceeds {STEP_REJECT_TOL}; reduce dt")
    return new[0]


def step_density(rho, spec: StochasticProcessSpec, noise, positivity_tol: float = 1e-6) -> np.ndarray:
    """One step of the density-matrix equation, re-projected to unit trace.

    The stochastic and dissipative terms are stepped explicitly; the
    commutator with H is then applied exactly as conjugation by
    exp(-iH dt). An explicit step of -i[H, rho] would raise the purity of
    near-pure states by O(dt^2) per step and drive them out of the positive
    cone.
    """
    rho = as_density(rho, tol=1e-8, psd_tol=positivity_tol)
    if rho.shape[0] != spec.dim:
        raise DimensionMismatch(f"density dim {rho.shape[0]} != spec dim {spec.dim}")
    dw = _as_noise_array(noise, spec.n_noise)
    dt, s = spec.dt, spec.sigma
    ops = [a.matrix for a in spec.collapse_ops]

    drift = np.zeros_like(rho)
    for a in ops:
        drift = drift - (s * s / 8) * commutator(a, commutator(a, rho))
    rho_a = [commutator(rho, a) for a in ops]
    b = [(s / 2) * commutator(rho, ra) for ra in rho_a]

    new = rho + drift * dt
    for j in range(len(ops)):
        new = new + b[j] * dw[j]
    if spec.scheme == "milstein" and s > 0:
        for j in range(len(ops)):
            for k in range(len(ops)):
                coeff = dw[j] * dw[k] - (dt if j == k else 0.0)
                # directional derivative of b_k along b_j
                lb = (s / 2) * (
                    commutator(b[j], rho_a[k]) + commutator(rho, commutator(b[j], ops[k]))
                )
                new = new + 0.5 * lb * coeff
    if spec.include_hamiltonian:
        u = hamiltonian_step(spec.H, dt)
        new = u @ new @ u.conj().T
    new = 0.5 * (new + new.conj().T)
    new = new / np.trace(new).real
    lowest = np.linalg.eigvalsh(new)[0]
    if lowest < -positivity_tol:
        raise PositivityLost(f"minimum eigenvalue {lowest:.3e}; reduce dt")
    return new


@dataclass(eq=False)
class TrajectoryRecord:
    """One stochastic realization.

    ``outcome`` indexes the reference observable's eigenvalues, or is None
    when the trajectory did not reduce before ``t_max`` (Unresolved).
    """

    index: int
    times: np.ndarray
    states: np.ndarray
    projector_weights: np.ndarray
    eigenvalues: np.ndarray
    outcome: int | None
    hitting_time: float | None
    max_norm_defect: float = 0.0

    @property
    def resolved(self) -> bool:
        return self.outcome is not None

    def snapshots(self):
        """Line-delimited snapshot dicts: t, amplitudes as [re, im], weights."""
        for t, z, w in zip(self.times, self.states, self.projector_weights):
            yield {
                "t": float(t),
                "amplitudes": [[float(c.real), float(c.imag)] for c in z],
                "projector_weights": [float(x) for x in w],
            }


class _NoiseBuffer:
    """Per-trajectory Wiener increments, drawn block-wise from each substream.

    Every block consumes exactly ``FINE_BLOCK`` standard normals per noise
    channel; with ``refine`` r each coarse increment sums r consecutive fine
    ones, so runs at dt and dt/r share one Brownian path.
    """

    def __init__(self, seed: int, indices, n_noise: int, dt: float, refine: int):
        if refine < 1 or FINE_BLOCK % refine:
            raise ValueError(f"refine must divide {FINE_BLOCK}")
        self.gens = [trajectory_stream(seed, i) for i in indices]
        self.n_noise = n_noise
        self.refine = refine
        self.scale = np.sqrt(dt / refine)
        self.steps = FINE_BLOCK // refine
        self.values = np.zeros((len(self.gens), self.steps, n_noise))

    def refill(self, active: np.ndarray):
        for r in np.flatnonzero(active):
            fine = self.gens[r].standard_normal((FINE_BLOCK, self.n_noise))
            fine = fine.reshape(self.steps, self.refine, self.n_noise)
            self.values[r] = fine.sum(axis=1) * self.scale


@dataclass(eq=False)
class BatchResult:
    indices: np.ndarray
    outcomes: np.ndarray  # -1 for unresolved
    hitting_times: np.ndarray  # nan for unresolved
    end_times: np.ndarray
    failures: dict  # position -> message
    sample_steps: np.ndarray
    sample_states: np.ndarray  # (S, n, d)
    sample_weights: np.ndarray  # (S, n, K)
    sample_active: np.ndarray  # (S, n)
    final_states: np.ndarray
    final_weights: np.ndarray
    max_norm_defect: np.ndarray


def integrate_batch(
    spec: StochasticProcessSpec,
    psi0,
    indices,
    t_max: float,
    epsilon: float = DEFAULT_EPSILON,
    *,
    horizon: float = 0.0,
    record_limit: float | None = None,
    stride: int = 100,
    refine: int = 1,
) -> BatchResult:
    """Integrate the trajectories ``indices`` of an ensemble side by side.

    A trajectory stops once it has reduced (max eigenspace weight >= 1 - eps)
    and has run at least to ``horizon``, or at ``t_max``. States are sampled
    every ``stride`` steps up to ``record_limit`` (default ``t_max``). Rows
    whose step is rejected are recorded in ``failures`` and stopped.
    """
    psi0 = as_state(psi0)
    if psi0.size != spec.dim:
        raise DimensionMismatch(f"initial state dim {psi0.size} != spec dim {spec.dim}")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    record_limit = t_max if record_limit is None else record_limit
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indices)
    dt = spec.dt
    n_steps = max(1, int(np.ceil(t_max / dt - 1e-9)))
    horizon_step = int(np.ceil(horizon / dt - 1e-9))
    record_steps = int(np.floor(record_limit / dt + 1e-9))

    kernel = _Kernel(spec)
    ref = spec.reference
    if kernel.to_eigenbasis is None:
        basis, basis_is_identity = np.eye(spec.dim, dtype=complex), True
    else:
        basis, basis_is_identity = np.ascontiguousarray(ref.eigenvectors.conj().T), False
    groups = np.asarray(kernel.basis_groups, dtype=np.int64)
    ops = np.ascontiguousarray(np.stack([a.matrix for a in spec.collapse_ops]))
    u = np.ascontiguousarray(hamiltonian_step(spec.H, dt))
    ops_diag = np.array([a.is_diagonal for a in spec.collapse_ops])
    threshold = 1.0 - epsilon

    z = np.tile(psi0, (n, 1))
    w_prev = kernel.weights(z)
    outcomes = np.full(n, -1, dtype=np.int64)
    hits = np.full(n, np.nan)
    end_steps = np.zeros(n, dtype=np.int64)
    defects = np.zeros(n)
    rejected = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    resolved0 = w_prev.max(axis=1) >= threshold
    outcomes[resolved0] = w_prev[resolved0].argmax(axis=1)
    hits[resolved0] = 0.0
    if horizon_step == 0:
        active[resolved0] = False

    samples, sample_active, sample_steps = [z.copy()], [np.ones(n, dtype=bool)], [0]
    noise = _NoiseBuffer(spec.seed, indices, spec.n_noise, dt, refine)
    pos = noise.steps
    step = 0
    while step < n_steps and active.any():
        if pos == noise.steps:
            noise.refill(active)
            pos = 0
        next_sample = (step // stride + 1) * stride
        length = min(noise.steps - pos, n_steps - step)
        if next_sample <= record_steps:
            length = min(length, next_sample - step)
        dw = np.ascontiguousarray(noise.values[:, pos : pos + length, :])
        advance_rows(
            z, w_prev, outcomes, hits, active, end_steps, defects, rejected, dw,
            length, step, horizon_step, n_steps,
            u, spec.H.is_diagonal, ops, ops_diag, basis, basis_is_identity,
            groups, float(spec.sigma), float(dt), bool(spec.include_hamiltonian),
            spec.scheme == "milstein", threshold, STEP_REJECT_TOL,
        )  # fmt: skip
        step += length
        pos += length
        if step % stride == 0 and step <= record_steps:
            samples.append(z.copy())
            sample_active.append((end_steps >= step) & ~rejected)
            sample_steps.append(step)

    # pad the sample grid when every row stopped early
    for later in range(sample_steps[-1] + stride, min(record_steps, n_steps) + 1, stride):
        samples.append(z.copy())
        sample_active.append((end_steps >= later) & ~rejected)
        sample_steps.append(later)

    failures = {
        int(r): f"StepRejected at t={end_steps[r] * dt:.6g}: norm defect exceeded {STEP_REJECT_TOL}"
        for r in np.flatnonzero(rejected)
    }
    sample_states = np.stack(samples)
    sample_weights = np.stack([kernel.weights(s) for s in samples])
    return BatchResult(
        indices=indices,
        outcomes=outcomes,
        hitting_times=hits,
        end_times=end_steps * dt,
        failures=failures,
        sample_steps=np.asarray(sample_steps),
        sample_states=sample_states,
        sample_weights=sample_weights,
        sample_active=np.stack(sample_active),
        final_states=z,
        final_weights=kernel.weights(z),
        max_norm_defect=defects,
    )


def record_from_batch(batch: BatchResult, position: int, spec: StochasticProcessSpec) -> TrajectoryRecord:
    """Extract the record of one trajectory from a batch result."""
    dt = spec.dt
    active = batch.sample_active[:, position].copy()
    active[0] = True
    steps = batch.sample_steps[active]
    times = steps * dt
    states = batch.sample_states[active, position]
    weights = batch.sample_weights[active, position]
    end = batch.end_times[position]
    if end > times[-1] + 0.5 * dt:
        times = np.append(times, end)
        states = np.vstack([states, batch.final_states[position]])
        weights = np.vstack([weights, batch.final_weights[position]])
    outcome = int(batch.outcomes[position])
    hit = float(batch.hitting_times[position])
    return TrajectoryRecord(
        index=int(batch.indices[position]),
        times=times,
        states=states,
        projector_weights=weights,
        eigenvalues=spec.reference.eigenvalues.copy(),
        outcome=None if outcome < 0 else outcome,
        hitting_time=None if outcome < 0 else hit,
        max_norm_defect=float(batch.max_norm_defect[position]),
    )


def run_trajectory(
    spec: StochasticProcessSpec,
    psi0,
    t_max: float,
    epsilon: float = DEFAULT_EPSILON,
    *,
    index: int = 0,
    stride: int = 100,
    horizon: float = 0.0,
) -> TrajectoryRecord:
    """Integrate one trajectory until it reduces or ``t_max`` is reached.

    The noise comes from substream ``index`` of ``spec.seed``, so this
    reproduces trajectory ``index`` of an ensemble with the same spec.

    Raises:
        StepRejected: if a step's norm defect exceeds 0.1.
    """
    batch = integrate_batch(
        spec, psi0, [index], t_max, epsilon, horizon=horizon, stride=stride
    )
    if batch.failures:
        raise StepRejected(batch.failures[0])
    return record_from_batch(batch, 0, spec)


def gaussian_localization_ops(n_sites: int, width: float = 2.0) -> list[np.ndarray]:
    """Diagonal operators exp(-(x_k - x_j)^2 / (2 width^2)), one per site j."""
    if n_sites < 1:
        raise ValueError("n_sites must be positive")
    x = np.arange(n_sites, dtype=float)
    return [np.diag(np.exp(-((x - xj) ** 2) / (2 * width**2))).astype(complex) for xj in x]


def energy_dispersion(psi, h) -> float:
    """sqrt(<H^2> - <H>^2) of a pure state."""
    psi = np.asarray(psi, dtype=complex)
    h = observable(h).matrix
    hpsi = h @ psi
    mean = np.vdot(psi, hpsi).real
    return float(np.sqrt(max(np.vdot(hpsi, hpsi).real - mean**2, 0.0)))


__all__ = [
    "NoiseIncrement",
    "StochasticProcessSpec",
    "TrajectoryRecord",
    "drift_and_diffusion",
    "energy_dispersion",
    "gaussian_localization_ops",
    "generate_noise",
    "integrate_batch",
    "norm_defect",
    "run_trajectory",
    "step_density",
    "step_pure",
    "step_pure_batch",
    "trajectory_stream",
]
