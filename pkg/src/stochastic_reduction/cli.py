"""Command-line front end.

    stochred <scenario-file> [--seed N] [--trajectories N] [--out PREFIX] [--threads N]
    stochred verify
    stochred preset list
    stochred preset show NAME

Flags override the scenario file. ``STOCHRED_THREADS`` sets the thread count
when neither the file nor ``--threads`` does.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import (
    EnsembleSummary,
    ScalingFit,
    chi_square_born,
    compare_mean_to_lindblad,
    default_threads,
    estimate_reduction_scaling,
    gap_sweep,
    run_ensemble,
)
from .errors import ExecutionError, ParseError, ReductionError, ValidationError
from .hilbert import hamiltonian_step, pure_density, spectral_decompose
from .histories import history_table
from .scenario import (
    OPERATOR_PRESETS,
    SCENARIO_PRESETS,
    STATE_PRESETS,
    Scenario,
    _operator,
    degeneracy_warning,
    emit_scenario,
    from_complex_array,
    load_scenario,
    preset_scenario,
    process_spec,
)
from .sde import TrajectoryRecord, run_trajectory
from .verify import run_checks

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

PRESET_NOTES = {
    "stern-gerlach": "spin-1/2 in |+x> reduced by its z-spin; Born weights 1/2, 1/2",
    "energy-driven-qubit": "H = A = diag(0, 1), psi0 = (sqrt .3, sqrt .7); Born weights .3, .7",
    "lattice-localization": "8-site chain, Gaussian localization operators, Schrodinger term off",
}


def _path(prefix: str, suffix: str) -> Path:
    path = Path(f"{prefix}_{suffix}")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _write_json(path: Path, doc) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path


def _num(x):
    """JSON-safe float: NaN and infinities become None."""
    x = float(x)
    return x if np.isfinite(x) else None


def _weight_header(k: int):
    return ["trajectory_index", "t"] + [f"weight_{i}" for i in range(k)]


def _record_rows(rec: TrajectoryRecord):
    for t, w in zip(rec.times, rec.projector_weights):
        yield [rec.index, float(t)] + [float(x) for x in w]


def emit_plotdata(result, prefix: str) -> list[Path]:
    """Write plain CSV plot data for a record, list of records, summary or scaling fit.

    Records and summaries give eigenspace weight against time per trajectory;
    summaries add outcome and frequency-versus-Born bar tables; a scaling fit
    gives its (log Delta E, log t_R) points and one row of fit parameters.
    """
    if isinstance(result, TrajectoryRecord):
        result = [result]
    if isinstance(result, list):
        k = len(result[0].eigenvalues) if result else 0
        rows = [row for rec in result for row in _record_rows(rec)]
        return [_write_csv(_path(prefix, "weights.csv"), _weight_header(k), rows)]
    if isinstance(result, EnsembleSummary):
        return _emit_summary(result, prefix)
    if isinstance(result, ScalingFit):
        points = [
            [de, tr, float(np.log(de)), float(np.log(tr)), ok, bad]
            for (de, tr), (ok, bad) in zip(result.points, result.resolved)
        ]
        return [
            _write_csv(
                _path(prefix, "scaling_points.csv"),
                ["delta_e", "t_r_median", "log_delta_e", "log_t_r", "resolved", "unresolved"],
                points,
            ),
            _write_csv(
                _path(prefix, "scaling_fit.csv"),
                ["slope", "slope_stderr", "intercept", "sigma"],
                [[result.slope, result.slope_stderr, result.intercept, result.sigma]],
            ),
        ]
    raise TypeError(f"no plot data for {type(result).__name__}")


def _emit_summary(s: EnsembleSummary, prefix: str) -> list[Path]:
    k = len(s.eigenvalues)
    weights = []
    outcomes = []
    bars = []
    if s.n_trajectories:
        for i in range(s.n_trajectories):
            for t, w in zip(s.sample_times, s.sample_weights[i]):
                weights.append([i, float(t)] + [float(x) for x in w])
            hit = s.hitting_times[i]
            outcomes.append([i, int(s.outcomes[i]), float(hit) if np.isfinite(hit) else ""])
        freq = s.frequencies
        for (j, p), ev in zip(s.born_prediction, s.eigenvalues):
            bars.append([j, float(ev), s.outcome_counts.get(j, 0), float(freq[j]), p])
    return [
        _write_csv(_path(prefix, "weights.csv"), _weight_header(k), weights),
        _write_csv(_path(prefix, "outcomes.csv"), ["trajectory_index", "outcome", "hitting_time"], outcomes),
        _write_csv(
            _path(prefix, "born_bars.csv"),
            ["outcome_index", "eigenvalue", "count", "frequency", "born_probability"],
            bars,
        ),
    ]


def _threads(s: Scenario, override):
    if override is not None:
        return override
    return s.threads if s.threads is not None else default_threads()


def _summary_doc(s: Scenario, summary: EnsembleSummary, spec) -> dict:
    resolved = summary.resolved_hitting_times
    doc = {
        "scenario": s.name,
        "n_trajectories": summary.n_trajectories,
        "seed": summary.seed,
        "dt": summary.dt,
        "sigma": spec.sigma,
        "epsilon": s.epsilon,
        "eigenvalues": [float(e) for e in summary.eigenvalues],
        "outcome_counts": [summary.outcome_counts.get(k, 0) for k in range(len(summary.eigenvalues))],
        "frequencies": [float(f) for f in summary.frequencies],
        "born_prediction": [p for _, p in summary.born_prediction],
        "unresolved": summary.unresolved,
        "failed": {str(k): v for k, v in sorted(summary.failed.items())},
        "hitting_time": {
            "median": _num(np.median(resolved)) if resolved.size else None,
            "mean": _num(resolved.mean()) if resolved.size else None,
            "max": _num(resolved.max()) if resolved.size else None,
        },
        "chi_square": None,
    }
    if summary.unresolved == 0:
        chi = chi_square_born(summary)
        doc["chi_square"] = {
            "statistic": _num(chi.statistic),
            "dof": chi.dof,
            "critical": _num(chi.critical),
            "passed": chi.passed,
        }
    if s.horizon > 0 and summary.n_trajectories > len(summary.failed):
        cmp = compare_mean_to_lindblad(summary, spec)
        doc["lindblad"] = {
            "max_deviation": cmp.max_deviation,
            "stat_error": cmp.stat_error,
            "sample_times": [float(t) for t in summary.sample_times],
            "deviations": [float(x) for x in cmp.deviations],
            "mean_density": from_complex_array(summary.mean_density),
        }
    return doc


def _run_simulate(s, out):
    spec, psi0 = process_spec(s)
    rec = run_trajectory(spec, psi0, s.t_max, s.epsilon, index=0, stride=s.stride, horizon=s.horizon)
    path = _path(s.output, "trajectory.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for snap in rec.snapshots():
            fh.write(json.dumps(snap) + "\n")
    doc = {
        "scenario": s.name,
        "seed": s.seed,
        "trajectory_index": rec.index,
        "resolved": rec.resolved,
        "outcome": rec.outcome,
        "eigenvalue": float(rec.eigenvalues[rec.outcome]) if rec.resolved else None,
        "hitting_time": rec.hitting_time,
        "max_norm_defect": rec.max_norm_defect,
    }
    paths = [path, _write_json(_path(s.output, "trajectory.json"), doc)]
    paths += emit_plotdata(rec, s.output)
    state = f"outcome {rec.outcome} at t = {rec.hitting_time:.6g}" if rec.resolved else "unresolved"
    print(f"{s.name}: trajectory 0 {state}", file=out)
    return EXIT_OK, paths


def _run_ensemble(s, out, threads):
    spec, psi0 = process_spec(s)
    summary = run_ensemble(
        spec, psi0, s.t_max, s.epsilon, s.trajectories,
        threads=threads, horizon=s.horizon, n_samples=s.samples,
    )  # fmt: skip
    doc = _summary_doc(s, summary, spec)
    paths = [_write_json(_path(s.output, "summary.json"), doc)]
    paths += emit_plotdata(summary, s.output)
    for k, ev in enumerate(summary.eigenvalues):
        print(
            f"{s.name}: outcome {k} (eigenvalue {ev:.6g}): frequency "
            f"{summary.frequencies[k]:.4f}, Born {summary.born_prediction[k][1]:.4f}",
            file=out,
        )
    print(f"{s.name}: unresolved {summary.unresolved}, failed {len(summary.failed)}", file=out)
    if summary.failed:
        print(f"{s.name}: {len(summary.failed)} trajectories rejected a step; reduce dt", file=sys.stderr)
        return EXIT_FAILED, paths
    return EXIT_OK, paths


def _run_scaling(s, out, threads):
    spec, psi0 = process_spec(s)
    fit = estimate_reduction_scaling(
        gap_sweep(spec, psi0, s.gaps), s.t_max, s.epsilon, s.trajectories, threads=threads
    )
    paths = emit_plotdata(fit, s.output)
    print(f"{s.name}: slope {fit.slope:.4f} +- {fit.slope_stderr:.4f}", file=out)
    return EXIT_OK, paths


def _run_histories(s, out):
    spec, psi0 = process_spec(s)
    problems = []
    observables = [spectral_decompose(_operator(o, s.hilbert_dim, "history_observables", problems)) for o in s.history_observables]
    props, last = [], 0.0
    for t in s.history_times:
        h = spec.H if spec.include_hamiltonian else np.zeros((spec.dim, spec.dim))
        props.append(hamiltonian_step(h, t - last))
        last = t
    table = history_table(pure_density(psi0), props, [list(o.projectors) for o in observables])
    header = []
    for k in range(len(observables)):
        header += [f"slot_{k}_index", f"slot_{k}_eigenvalue"]
    header.append("probability")
    rows = []
    for choice, p in table:
        row = []
        for k, i in enumerate(choice):
            row += [i, float(observables[k].eigenvalues[i])]
        rows.append(row + [p])
    path = _write_csv(_path(s.output, "histories.csv"), header, rows)
    total = sum(p for _, p in table)
    print(f"{s.name}: {len(table)} histories, total probability {total:.12f}", file=out)
    return EXIT_OK, [path]


def run_verify(out=None) -> int:
    out = out or sys.stdout
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}", file=out)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties pass", file=out)
    return EXIT_OK if failed == 0 else EXIT_FAILED


def execute(s: Scenario, *, threads: int | None = None, out=None) -> int:
    """Run a validated scenario, write its output files and return the exit status.

    Errors raised by the numerical modules are re-raised as ExecutionError
    naming the scenario and mode.
    """
    out = out or sys.stdout
    if s.mode == "verify":
        return run_verify(out)
    warning = degeneracy_warning(s)
    if warning:
        print(f"{s.name}: {warning}", file=sys.stderr)
    n_threads = _threads(s, threads)
    try:
        if s.mode == "simulate":
            status, paths = _run_simulate(s, out)
        elif s.mode == "ensemble":
            status, paths = _run_ensemble(s, out, n_threads)
        elif s.mode == "scaling":
            status, paths = _run_scaling(s, out, n_threads)
        else:
            status, paths = _run_histories(s, out)
    except (ReductionError, ValueError, OSError) as exc:
        raise ExecutionError(f"scenario '{s.name}' ({s.mode}): {type(exc).__name__}: {exc}") from exc
    for p in paths:
        print(f"wrote {p}", file=out)
    return status


def apply_overrides(s: Scenario, seed=None, trajectories=None, out=None, threads=None) -> Scenario:
    changes = {
        k: v
        for k, v in (("seed", seed), ("trajectories", trajectories), ("output", out), ("threads", threads))
        if v is not None
    }
    return dataclasses.replace(s, **changes) if changes else s


def _preset_list(out):
    print("scenario presets:", file=out)
    for name in SCENARIO_PRESETS:
        print(f"  {name:24s} {PRESET_NOTES.get(name, '')}", file=out)
    print("operator presets:", file=out)
    for name, (dim, _) in OPERATOR_PRESETS.items():
        print(f"  {name:24s} {'dim ' + str(dim) if dim else 'any dim'}", file=out)
    print("  hamiltonian              (collapse_ops only) the scenario's H", file=out)
    print("  gaussian-localization    (collapse_ops only) one operator per site, width 2", file=out)
    print("state presets:", file=out)
    for name, (dim, _) in STATE_PRESETS.items():
        print(f"  {name:24s} {'dim ' + str(dim) if dim else 'any dim'}", file=out)
    print("  basis-<k>                basis vector k", file=out)


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return value


def _run_parser():
    p = argparse.ArgumentParser(
        prog="stochred",
        description="Stochastic state-reduction simulator. Also: 'stochred verify', 'stochred preset list'.",
    )
    p.add_argument("scenario", help="scenario JSON file, or the name of a scenario preset")
    p.add_argument("--seed", type=_non_negative)
    p.add_argument("--trajectories", type=_positive)
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--threads", type=_positive)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout
    if argv[:1] == ["verify"]:
        argparse.ArgumentParser(prog="stochred verify").parse_args(argv[1:])
        return run_verify(out)
    if argv[:1] == ["preset"]:
        p = argparse.ArgumentParser(prog="stochred preset")
        sub = p.add_subparsers(dest="action", required=True)
        sub.add_parser("list")
        show = sub.add_parser("show")
        show.add_argument("name", choices=sorted(SCENARIO_PRESETS))
        args = p.parse_args(argv[1:])
        if args.action == "list":
            _preset_list(out)
        else:
            out.write(emit_scenario(preset_scenario(args.name)))
        return EXIT_OK

    args = _run_parser().parse_args(argv)
    try:
        if not os.path.exists(args.scenario) and args.scenario in SCENARIO_PRESETS:
            s = preset_scenario(args.scenario)
        else:
            s = load_scenario(args.scenario)
        s = apply_overrides(s, args.seed, args.trajectories, args.out, args.threads)
        return execute(s, out=out)
    except (ParseError, ValidationError) as exc:
        print(f"{args.scenario}: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExecutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
