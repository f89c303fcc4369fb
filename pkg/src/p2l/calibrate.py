"""Rank statistics, balancing-parameter grid search, evaluation metrics.

Calibration picks (k, distance) by maximizing the mean Spearman rank
correlation between candidate scores and measured transfer improvements over
a set of training tasks. The objective is a rank statistic, hence piecewise
constant in k, so a grid search is exact up to grid resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import (
    CalibrationReport,
    DatasetProfile,
    DivergenceKind,
    EstimatorConfig,
    GridPoint,
    ImprovementRecord,
)
from .errors import (
    DegenerateConstantInput,
    DuplicateSourceName,
    LengthMismatch,
    MissingRecord,
    TooFewSources,
    UnknownSource,
    ZeroDenominator,
)
from .estimator import profile_distance, zscale

# k in [-3, 0] by steps of 0.05; distance works against size, so k <= 0.
DEFAULT_K_GRID: tuple[float, ...] = tuple(round(-3.0 + 0.05 * i, 2) for i in range(61))

TrainingTask = tuple[DatasetProfile, Sequence[ImprovementRecord]]


@dataclass(frozen=True)
class EvaluationConfig:
    """Grid and rank-quality settings for calibration and evaluation."""

    top_T: int = 1
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    distance_kinds: tuple[DivergenceKind, ...] = tuple(DivergenceKind)
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.top_T < 1:
            raise ValueError("top_T must be >= 1")
        if not self.k_grid:
            raise ValueError("k grid must be nonempty")
        kinds = tuple(DivergenceKind(k) for k in self.distance_kinds)
        if len(set(kinds)) != len(kinds) or not kinds:
            raise ValueError("distance_kinds must be a nonempty set of distinct kinds")
        object.__setattr__(self, "distance_kinds", kinds)
        object.__setattr__(self, "k_grid", tuple(float(k) for k in self.k_grid))


def spearman_rho(a, b) -> float:
    """Pearson correlation of average (fractional) ranks; ties share ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise LengthMismatch(f"paired lists must align, got {a.shape} vs {b.shape}")
    if a.size < 2:
        raise LengthMismatch("need at least two observations")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateConstantInput("rank correlation of a constant list is undefined")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    rho = float(np.corrcoef(ra, rb)[0, 1])
    return min(1.0, max(-1.0, rho))


def spearman_or_zero(a, b) -> float:
    """spearman_rho, but a constant side counts as zero rank information."""
    try:
        return spearman_rho(a, b)
    except DegenerateConstantInput:
        return 0.0


def tune_k(training_tasks: Sequence[TrainingTask],
           sources: Sequence[DatasetProfile],
           cfg: EvaluationConfig | None = None) -> CalibrationReport:
    """Grid search (k, distance) maximizing mean Spearman rho over tasks.

    Each task pairs a target profile with ground-truth improvement records;
    that task's candidate set is exactly the sources its records name.
    Grid ties break toward smaller |k|, then kind declaration order.
    """
    cfg = cfg if cfg is not None else EvaluationConfig()
    if not training_tasks:
        raise ValueError("need at least one training task")
    pool: dict[str, DatasetProfile] = {}
    for p in sources:
        if p.name in pool:
            raise DuplicateSourceName(f"duplicate source name {p.name!r}")
        pool[p.name] = p

    prepared = []
    task_names = set()
    for target, records in training_tasks:
        if target.name in task_names:
            raise ValueError(f"duplicate training task {target.name!r}")
        task_names.add(target.name)
        names = [r.source_name for r in records]
        if len(set(names)) != len(names):
            raise DuplicateSourceName(
                f"task {target.name!r} names a source twice")
        for n in names:
            if n not in pool:
                raise UnknownSource(f"task {target.name!r} references unknown source {n!r}")
        if len(names) < 3:
            raise TooFewSources(
                f"task {target.name!r} has {len(names)} sources, need >= 3")
        candidates = [pool[n] for n in names]
        z_logs = zscale(np.log([float(c.size) for c in candidates]))
        z_dists = {}
        for kind in cfg.distance_kinds:
            dcfg = EstimatorConfig(distance=kind, k=0.0, epsilon=cfg.epsilon)
            z_dists[kind] = zscale([profile_distance(target, c, dcfg)
                                    for c in candidates])
        improvements = np.array([r.improvement for r in records])
        prepared.append((target.name, z_logs, z_dists, improvements))

    grid = []
    for k in cfg.k_grid:
        for kind in cfg.distance_kinds:
            rhos = [spearman_or_zero(z_logs + k * z_dists[kind], improvements)
                    for _, z_logs, z_dists, improvements in prepared]
            grid.append(GridPoint(k=k, distance=kind, mean_rho=float(np.mean(rhos))))

    max_rho = max(g.mean_rho for g in grid)
    best = min((g for g in grid if g.mean_rho == max_rho),
               key=lambda g: (abs(g.k), g.distance.tie_rank))
    per_task = {
        name: spearman_or_zero(z_logs + best.k * z_dists[best.distance], improvements)
        for name, z_logs, z_dists, improvements in prepared
    }
    return CalibrationReport(best_k=best.k, best_distance=best.distance,
                             grid=tuple(grid), per_task_rho=per_task,
                             top_T=cfg.top_T)


def picks_to_best(ranking: Sequence[str], best_true: str) -> int:
    """1-based position of the truly best source in a method's ranking."""
    ranking = list(ranking)
    if best_true not in ranking:
        raise UnknownSource(f"{best_true!r} not present in the ranking")
    return ranking.index(best_true) + 1


def gain_table(records: Sequence[ImprovementRecord],
               selections: Mapping[str, str | None],
               ours: str = "P2L") -> dict[str, float]:
    """Relative gain of our pick over each method: (perf(ours) - perf(m)) / perf(m).

    All records must belong to one target. A method selecting None means no
    transfer and is scored at the target's from-scratch performance.
    """
    if not records:
        raise MissingRecord("no ground-truth records for this target")
    target = records[0].target_name
    by_source: dict[str, ImprovementRecord] = {}
    for r in records:
        if r.target_name != target:
            raise ValueError("gain_table records must share one target")
        by_source[r.source_name] = r
    scratch = records[0].perf_scratch

    def perf(selection: str | None) -> float:
        if selection is None:
            return scratch
        if selection not in by_source:
            raise MissingRecord(
                f"selected source {selection!r} has no record for target {target!r}")
        return by_source[selection].perf_transfer

    if ours not in selections:
        raise MissingRecord(f"no selection recorded for {ours!r}")
    ours_perf = perf(selections[ours])
    gains = {}
    for method, selection in selections.items():
        if method == ours:
            continue
        denom = perf(selection)
        if denom == 0.0:
            raise ZeroDenominator(f"method {method!r} has zero performance")
        gains[method] = (ours_perf - denom) / denom
    return gains


def write_grid_csv(report: CalibrationReport | Sequence[GridPoint], path) -> None:
    """Emit the calibration grid as CSV: k,distance,mean_rho."""
    grid = report.grid if isinstance(report, CalibrationReport) else report
    lines = ["k,distance,mean_rho"]
    for g in grid:
        lines.append(f"{g.k!r},{g.distance.value},{g.mean_rho!r}")
    Path(path).write_text("\n".join(lines) + "\n")
