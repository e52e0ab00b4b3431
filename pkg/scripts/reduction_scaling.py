"""Median reduction time against initial energy dispersion for a qubit gap sweep.

    python scripts/reduction_scaling.py --gaps 0.5 1 2 4 --out results/scaling
"""

import argparse
from dataclasses import dataclass, field

import numpy as np

from stochastic_reduction.cli import emit_plotdata
from stochastic_reduction.ensemble import estimate_reduction_scaling, gap_sweep
from stochastic_reduction.sde import StochasticProcessSpec


@dataclass
class ScalingConfig:
    gaps: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    sigma: float = 1.0
    dt: float = 1e-3
    t_max: float = 2000.0
    trajectories: int = 1000
    seed: int = 606
    threads: int | None = None
    out: str = "results/scaling"


def run(cfg: ScalingConfig):
    h = np.diag([0.0, 1.0])
    base = StochasticProcessSpec(h, (h,), cfg.sigma, cfg.dt, seed=cfg.seed)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    fit = estimate_reduction_scaling(
        gap_sweep(base, plus, cfg.gaps), cfg.t_max, n=cfg.trajectories, threads=cfg.threads
    )
    for (de, tr), (ok, bad) in zip(fit.points, fit.resolved):
        print(f"Delta E = {de:.4g}: median t_R = {tr:.4g} ({ok} resolved, {bad} unresolved)")
    print(f"slope {fit.slope:.4f} +- {fit.slope_stderr:.4f} (expected -2)")
    return fit


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gaps", type=float, nargs="+", default=ScalingConfig().gaps)
    parser.add_argument("--sigma", type=float, default=ScalingConfig.sigma)
    parser.add_argument("--trajectories", type=int, default=ScalingConfig.trajectories)
    parser.add_argument("--seed", type=int, default=ScalingConfig.seed)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out", default=ScalingConfig.out)
    args = parser.parse_args()
    cfg = ScalingConfig(
        gaps=args.gaps, sigma=args.sigma, trajectories=args.trajectories,
        seed=args.seed, threads=args.threads, out=args.out,
    )  # fmt: skip
    for path in emit_plotdata(run(cfg), cfg.out):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
