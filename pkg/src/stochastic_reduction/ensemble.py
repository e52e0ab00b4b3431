"""Monte Carlo ensembles of stochastic trajectories and their statistics."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientResolved, UnresolvedPresent, ValidationError
from .hilbert import max_abs, projector_weights, pure_density
from .lindblad import LindbladSpec, evolve_lindblad_series
from .sde import (
    DEFAULT_EPSILON,
    StochasticProcessSpec,
    energy_dispersion,
    integrate_batch,
    record_from_batch,
)

BATCH_SIZE = 256
BOOTSTRAP_RESAMPLES = 200
THREADS_ENV = "STOCHRED_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(eq=False)
class EnsembleSummary:
    """Outcome statistics and sampled mean density of N trajectories.

    ``outcomes[i]`` is the eigenvalue index trajectory i reduced to, -1 if it
    was unresolved and -2 if it failed (failures count as unresolved).
    ``sample_states`` keeps each trajectory's state at ``sample_times`` for
    bootstrap error bars.
    """

    n_trajectories: int
    seed: int
    dt: float
    psi0: np.ndarray
    eigenvalues: np.ndarray
    outcome_counts: dict
    unresolved: int
    failed: dict
    outcomes: np.ndarray
    hitting_times: np.ndarray
    born_prediction: list
    sample_times: np.ndarray
    mean_density: np.ndarray
    sample_states: np.ndarray = field(repr=False)
    sample_weights: np.ndarray = field(repr=False)

    @property
    def frequencies(self) -> np.ndarray:
        counts = np.array([self.outcome_counts.get(k, 0) for k in range(len(self.eigenvalues))])
        return counts / max(self.n_trajectories, 1)

    @property
    def resolved_hitting_times(self) -> np.ndarray:
        return self.hitting_times[self.outcomes >= 0]

    @property
    def ok(self) -> np.ndarray:
        """Mask of trajectories that did not fail."""
        return self.outcomes != -2


def _batches(n: int, size: int):
    return [np.arange(start, min(start + size, n)) for start in range(0, n, size)]


def run_ensemble(
    spec: StochasticProcessSpec,
    psi0,
    t_max: float,
    epsilon: float = DEFAULT_EPSILON,
    n: int = 1000,
    *,
    threads: int | None = None,
    horizon: float = 0.0,
    n_samples: int = 20,
    refine: int = 1,
    batch_size: int = BATCH_SIZE,
    records: bool = False,
):
    """Run ``n`` independent trajectories and summarize them.

    The mean density is sampled at ``n_samples + 1`` equally spaced times on
    [0, horizon]; every trajectory is integrated at least to ``horizon``.
    Trajectory i always uses noise substream i of ``spec.seed`` and batches
    are fixed blocks of indices, so the summary does not depend on
    ``threads``. With ``records=True`` the per-trajectory TrajectoryRecords
    are returned alongside the summary.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    threads = default_threads() if threads is None else max(1, int(threads))
    psi0 = np.asarray(psi0, dtype=complex)
    if horizon > 0:
        stride = max(1, int(round(horizon / (max(n_samples, 1) * spec.dt))))
    else:
        stride = max(1, int(np.ceil(t_max / spec.dt)))

    def work(idx):
        return integrate_batch(
            spec, psi0, idx, t_max, epsilon,
            horizon=horizon, record_limit=horizon, stride=stride, refine=refine,
        )  # fmt: skip

    batches = _batches(n, batch_size)
    if threads == 1 or len(batches) == 1:
        results = [work(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, batches))

    outcomes = np.concatenate([r.outcomes for r in results])
    hits = np.concatenate([r.hitting_times for r in results])
    failed = {}
    for r in results:
        for pos, msg in r.failures.items():
            failed[int(r.indices[pos])] = msg
    for i in failed:
        outcomes[i] = -2
    states = np.concatenate([r.sample_states for r in results], axis=1).transpose(1, 0, 2)
    weights = np.concatenate([r.sample_weights for r in results], axis=1).transpose(1, 0, 2)
    sample_times = results[0].sample_steps * spec.dt

    ok = outcomes != -2
    mean_density = _mean_density(states[ok])
    eigenvalues = spec.reference.eigenvalues.copy()
    counts = {k: int(np.sum(outcomes == k)) for k in range(len(eigenvalues))}
    born = projector_weights(psi0, spec.reference)
    summary = EnsembleSummary(
        n_trajectories=n,
        seed=int(spec.seed),
        dt=float(spec.dt),
        psi0=psi0,
        eigenvalues=eigenvalues,
        outcome_counts=counts,
        unresolved=int(np.sum(outcomes < 0)),
        failed=failed,
        outcomes=outcomes,
        hitting_times=hits,
        born_prediction=[(k, float(p)) for k, p in enumerate(born)],
        sample_times=sample_times,
        mean_density=mean_density,
        sample_states=states,
        sample_weights=weights,
    )
    if records:
        recs = [record_from_batch(r, pos, spec) for r in results for pos in range(len(r.indices))]
        return summary, recs
    return summary


def empty_summary(spec: StochasticProcessSpec, psi0) -> EnsembleSummary:
    """Summary of an ensemble with no trajectories."""
    psi0 = np.asarray(psi0, dtype=complex)
    d = spec.dim
    k = len(spec.reference.eigenvalues)
    return EnsembleSummary(
        n_trajectories=0,
        seed=int(spec.seed),
        dt=float(spec.dt),
        psi0=psi0,
        eigenvalues=spec.reference.eigenvalues.copy(),
        outcome_counts={i: 0 for i in range(k)},
        unresolved=0,
        failed={},
        outcomes=np.zeros(0, dtype=np.int64),
        hitting_times=np.zeros(0),
        born_prediction=[(i, float(p)) for i, p in enumerate(projector_weights(psi0, spec.reference))],
        sample_times=np.zeros(0),
        mean_density=np.zeros((0, d, d), dtype=complex),
        sample_states=np.zeros((0, 0, d), dtype=complex),
        sample_weights=np.zeros((0, 0, k)),
    )


def _mean_density(states: np.ndarray) -> np.ndarray:
    """Average |z><z| over trajectories (axis 0) at every sample time."""
    if states.shape[0] == 0:
        d = states.shape[-1]
        return np.full((states.shape[1], d, d), np.nan, dtype=complex)
    return np.einsum("nsi,nsj->sij", states, states.conj()) / states.shape[0]


def _bootstrap_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64, spawn_key=(2**32,)))


def bootstrap_mean_density_se(summary: EnsembleSummary, resamples: int = BOOTSTRAP_RESAMPLES):
    """Elementwise bootstrap standard error of the mean density, shape (S, d, d)."""
    states = summary.sample_states[summary.ok]
    n, s, d = states.shape
    outer = np.einsum("nsi,nsj->nsij", states, states.conj()).reshape(n, -1)
    rng = _bootstrap_rng(summary.seed)
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=resamples).astype(float)
    means = (counts @ outer) / n
    se = np.sqrt(means.real.var(axis=0) + means.imag.var(axis=0))
    return se.reshape(s, d, d)


@dataclass(frozen=True)
class LindbladComparison:
    max_deviation: float
    stat_error: float
    deviations: np.ndarray  # per sample time
    oracle: np.ndarray


def compare_mean_to_lindblad(
    summary: EnsembleSummary, spec: StochasticProcessSpec, oracle_dt: float | None = None
) -> LindbladComparison:
    """Max-abs deviation of the ensemble mean density from the RK4 reference."""
    lspec = LindbladSpec.from_process(spec)
    oracle_dt = min(spec.dt, 1e-3) if oracle_dt is None else oracle_dt
    oracle = evolve_lindblad_series(pure_density(summary.psi0), lspec, summary.sample_times, oracle_dt)
    dev = np.array([max_abs(m - o) for m, o in zip(summary.mean_density, oracle)])
    se = bootstrap_mean_density_se(summary)
    return LindbladComparison(float(dev.max()), float(se.max()), dev, oracle)


def weight_martingale(summary: EnsembleSummary, resamples: int = BOOTSTRAP_RESAMPLES):
    """Ensemble mean of each eigenspace weight over time with bootstrap errors.

    Returns (mean, se), each of shape (S, K).
    """
    w = summary.sample_weights[summary.ok]
    n = w.shape[0]
    rng = _bootstrap_rng(summary.seed)
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=resamples).astype(float)
    boot = (counts @ w.reshape(n, -1)) / n
    return w.mean(axis=0), boot.std(axis=0).reshape(w.shape[1:])


def observable_trace(summary: EnsembleSummary, op, resamples: int = BOOTSTRAP_RESAMPLES, power: int = 1):
    """Ensemble mean of <z|op|z> (power 1) or <(op - <op>)^2> (power 2) over time.

    Returns (mean, se) arrays over sample times.
    """
    op = np.asarray(op, dtype=complex)
    z = summary.sample_states[summary.ok]
    oz = np.einsum("ij,nsj->nsi", op, z)
    mean_op = np.einsum("nsi,nsi->ns", z.conj(), oz).real
    if power == 2:
        sq = np.einsum("nsi,nsi->ns", oz.conj(), oz).real
        values = sq - mean_op**2
    else:
        values = mean_op
    n = values.shape[0]
    rng = _bootstrap_rng(summary.seed)
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=resamples).astype(float)
    boot = (counts @ values) / n
    return values.mean(axis=0), boot.std(axis=0)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    critical: float
    passed: bool


def chi_square_born(summary: EnsembleSummary, level: float = 0.999) -> ChiSquareResult:
    """Pearson chi-square of outcome counts against the Born prediction."""
    if summary.unresolved:
        raise UnresolvedPresent(f"{summary.unresolved} trajectories unresolved")
    return chi_square_counts(
        [summary.outcome_counts.get(k, 0) for k, _ in summary.born_prediction],
        [p for _, p in summary.born_prediction],
        level,
    )


def chi_square_counts(counts, probabilities, level: float = 0.999) -> ChiSquareResult:
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    n = counts.sum()
    expected = n * probs
    live = expected > 0
    if np.any(counts[~live] > 0):
        return ChiSquareResult(float("inf"), int(live.sum()) - 1, float("nan"), False)
    stat = float(np.sum((counts[live] - expected[live]) ** 2 / expected[live]))
    dof = int(live.sum()) - 1
    if dof < 1:
        return ChiSquareResult(stat, dof, 0.0, stat == 0.0)
    critical = float(stats.chi2.ppf(level, dof))
    return ChiSquareResult(stat, dof, critical, stat < critical)


@dataclass(frozen=True)
class ScalingFit:
    """Median reduction time against initial energy dispersion."""

    points: list  # (delta_e, t_r_median)
    slope: float
    slope_stderr: float
    intercept: float
    sigma: float
    resolved: list  # per point: (resolved, unresolved)


def scaled_spec(spec: StochasticProcessSpec, factor: float) -> StochasticProcessSpec:
    """Multiply H and every collapse operator by ``factor``."""
    return spec.replace(
        H=spec.H.matrix * factor,
        collapse_ops=tuple(a.matrix * factor for a in spec.collapse_ops),
    )


def gap_sweep(spec: StochasticProcessSpec, psi0, factors):
    """Cases (spec, psi0) with the energy scale multiplied by each factor."""
    return [(scaled_spec(spec, f), psi0) for f in factors]


def validate_scaling_cases(cases):
    problems = []
    if len(cases) < 3:
        problems.append(f"scaling needs at least 3 energy dispersions, got {len(cases)}")
    sigmas = {float(s.sigma) for s, _ in cases}
    if len(sigmas) > 1:
        problems.append("sigma must be held fixed across a scaling study")
    spreads = []
    for k, (s, psi) in enumerate(cases):
        de = energy_dispersion(psi, s.H)
        spreads.append(de)
        populated = int(np.sum(projector_weights(psi, s.H) > 1e-12))
        if de <= 1e-12 or populated < 2:
            problems.append(f"case {k}: initial state has zero energy dispersion")
    if len(set(np.round(spreads, 12))) < len(spreads):
        problems.append("energy dispersions must be distinct")
    if problems:
        raise ValidationError(problems)
    return spreads


def estimate_reduction_scaling(
    cases, t_max: float, epsilon: float = DEFAULT_EPSILON, n: int = 1000, *, threads=None,
    max_unresolved: float = 0.2,
) -> ScalingFit:
    """Fit log median t_R against log Delta E over a family of (spec, psi0) cases.

    Raises:
        ValidationError: fewer than 3 distinct, non-zero dispersions or mixed sigma.
        InsufficientResolved: more than ``max_unresolved`` of a cell unresolved.
    """
    spreads = validate_scaling_cases(cases)
    points, resolved = [], []
    for (spec, psi0), de in zip(cases, spreads):
        summary = run_ensemble(spec, psi0, t_max, epsilon, n, threads=threads)
        if summary.unresolved > max_unresolved * n:
            raise InsufficientResolved(
                f"Delta E = {de:g}: {summary.unresolved}/{n} trajectories unresolved by t_max={t_max:g}"
            )
        points.append((float(de), float(np.median(summary.resolved_hitting_times))))
        resolved.append((n - summary.unresolved, summary.unresolved))
    x = np.log([p[0] for p in points])
    y = np.log([p[1] for p in points])
    fit = stats.linregress(x, y)
    return ScalingFit(
        points=points,
        slope=float(fit.slope),
        slope_stderr=float(fit.stderr),
        intercept=float(fit.intercept),
        sigma=float(cases[0][0].sigma),
        resolved=resolved,
    )
