#!/usr/bin/env python3
"""Sweep the balancing parameter k and emit the rank-quality curves.

Writes a CSV (k, distance, mean_rho) over the calibration grid for one
world seed; feed it to any plotter to see where each distance kind peaks.
"""
import argparse

from p2l import oracle
from p2l.calibrate import EvaluationConfig, tune_k, write_grid_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--sources", type=int, default=6)
    parser.add_argument("--targets", type=int, default=8)
    parser.add_argument("--out", default="k_sweep.csv")
    args = parser.parse_args()

    cfg = oracle.OracleConfig()
    world = oracle.default_world(args.seed, cfg, n_sources=args.sources,
                                 n_targets=args.targets)
    records = oracle.ground_truth(world, cfg)
    tasks, sources = oracle.calibration_tasks(world, records)
    report = tune_k(tasks, sources, EvaluationConfig())
    write_grid_csv(report, args.out)
    print(f"wrote {len(report.grid)} grid points to {args.out}")
    print(f"best: k={report.best_k} distance={report.best_distance.value} "
          f"mean_rho={report.best_point().mean_rho:.4f}")
    for kind in (report.best_distance,):
        curve = report.curve(kind)
        lo = min(curve, key=lambda p: p[1])
        hi = max(curve, key=lambda p: p[1])
        print(f"{kind.value}: min rho {lo[1]:.4f} at k={lo[0]}, "
              f"max rho {hi[1]:.4f} at k={hi[0]}")


if __name__ == "__main__":
    main()
