"""Domain types shared across the source-selection pipeline.

All types are immutable after construction (arrays are stored read-only) and
safe to share between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import EmptyMatrix, NonFiniteValue, NonPositiveEpsilon

# |score - (z_log_size + k * z_distance)| must stay below this.
SCORE_IDENTITY_TOL = 1e-12
# Normalized summaries must sum to 1 within this.
L1_TOL = 1e-9


class DivergenceKind(str, Enum):
    """Candidate dissimilarity functions between dataset summaries.

    Declaration order doubles as the deterministic tie-break order used by
    calibration.
    """

    KL = "KL"
    JSD = "JSD"
    CHI2 = "CHI2"
    EUC = "EUC"
    CITYBLOCK = "CITYBLOCK"

    @property
    def tie_rank(self) -> int:
        return _KIND_ORDER[self]


_KIND_ORDER = {kind: i for i, kind in enumerate(DivergenceKind)}

# Kinds that interpret summaries as probability vectors and need smoothing.
PROBABILITY_KINDS = frozenset(
    (DivergenceKind.KL, DivergenceKind.JSD, DivergenceKind.CHI2)
)


def _readonly_1d(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Summarizer:
    """How a matrix of per-item vectors is collapsed to one vector."""

    kind: str = "mean"
    fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in ("mean", "trimmed_mean"):
            raise ValueError(f"unknown summarizer kind {self.kind!r}")
        if self.kind == "mean" and self.fraction != 0.0:
            raise ValueError("plain mean takes no trim fraction")
        if not (0.0 <= self.fraction < 0.5):
            raise ValueError("trim fraction must lie in [0, 0.5)")

    @classmethod
    def mean(cls) -> "Summarizer":
        return cls("mean", 0.0)

    @classmethod
    def trimmed(cls, fraction: float = 0.1) -> "Summarizer":
        return cls("trimmed_mean", float(fraction))

    def label(self) -> str:
        if self.kind == "mean":
            return "mean"
        return f"trimmed_mean:{self.fraction!r}"

    @classmethod
    def parse(cls, text: str) -> "Summarizer":
        """Accepts 'mean', 'trimmed:<f>' (CLI form) or 'trimmed_mean:<f>'."""
        if text == "mean":
            return cls.mean()
        for prefix in ("trimmed_mean:", "trimmed:"):
            if text.startswith(prefix):
                return cls.trimmed(float(text[len(prefix):]))
        raise ValueError(f"unknown summarizer {text!r}")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Per-item feature vectors for one dataset, as produced by one extractor."""

    values: np.ndarray
    extractor_id: str

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise EmptyMatrix(f"embedding matrix must be 2-d, got shape {arr.shape}")
        n, d = arr.shape
        if n < 1 or d < 1:
            raise EmptyMatrix(f"embedding matrix must be at least 1x1, got {n}x{d}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("embedding matrix contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if not self.extractor_id:
            raise ValueError("extractor_id must be nonempty")

    @property
    def items(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class SummaryVector:
    """One vector summarizing a whole dataset.

    ``values`` is the L1-normalized summary when ``normalized`` is true;
    otherwise it equals ``raw_mean`` (only L1/L2 distances apply then).
    """

    values: np.ndarray
    raw_mean: np.ndarray
    summarizer: Summarizer
    normalized: bool = True

    def __post_init__(self):
        values = _readonly_1d(self.values)
        raw = _readonly_1d(self.raw_mean)
        if values.shape != raw.shape:
            raise ValueError("values and raw_mean must have the same dimension")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(raw))):
            raise NonFiniteValue("summary vector contains NaN or Inf")
        if self.normalized:
            if values.min(initial=np.inf) < 0.0:
                raise ValueError("normalized summary has a negative component")
            if abs(float(values.sum()) - 1.0) > L1_TOL:
                raise ValueError("normalized summary does not sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "raw_mean", raw)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class DatasetProfile:
    """Persisted unit of the source registry: summary vector plus size."""

    name: str
    size: int
    summary: SummaryVector
    extractor_id: str
    role: str = "source"

    def __post_init__(self):
        if not self.name:
            raise ValueError("profile name must be nonempty")
        size = int(self.size)
        if size != self.size or size < 1:
            raise ValueError("size must be a positive integer item count")
        object.__setattr__(self, "size", size)
        if self.role not in ("source", "target"):
            raise ValueError(f"role must be 'source' or 'target', got {self.role!r}")
        if not self.extractor_id:
            raise ValueError("extractor_id must be nonempty")


@dataclass(frozen=True)
class EstimatorConfig:
    """Fully determines the selection score: distance kind, k, smoothing."""

    distance: DivergenceKind = DivergenceKind.KL
    k: float = -1.0
    epsilon: float = 1e-6
    summarizer: Summarizer = Summarizer("mean", 0.0)
    # Swap the argument order of the (asymmetric) KL divergence.
    reverse_kl: bool = False

    def __post_init__(self):
        object.__setattr__(self, "distance", DivergenceKind(self.distance))
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise NonPositiveEpsilon(f"epsilon must be > 0, got {self.epsilon!r}")
        if not math.isfinite(self.k):
            raise ValueError("k must be finite")


@dataclass(frozen=True)
class ScoredSource:
    """One candidate's score decomposition; re-derivable from its own fields."""

    source_name: str
    distance_value: float
    log_size: float
    z_log_size: float
    z_distance: float
    k: float
    score: float

    def __post_init__(self):
        parts = (
            self.distance_value,
            self.log_size,
            self.z_log_size,
            self.z_distance,
            self.k,
            self.score,
        )
        if not all(math.isfinite(x) for x in parts):
            raise NonFiniteValue("scored source contains NaN or Inf")
        if self.distance_value < 0.0:
            raise ValueError("distance must be >= 0")
        if abs(self.score - (self.z_log_size + self.k * self.z_distance)) > SCORE_IDENTITY_TOL:
            raise ValueError("score does not match z_log_size + k * z_distance")


@dataclass(frozen=True)
class ImprovementRecord:
    """Measured transfer outcome for one (target, source) pair."""

    target_name: str
    source_name: str
    perf_transfer: float
    perf_scratch: float
    improvement: float

    def __post_init__(self):
        for label, value in (("perf_transfer", self.perf_transfer),
                             ("perf_scratch", self.perf_scratch)):
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValueError(f"{label} must lie in [0, 1], got {value!r}")
        if self.improvement != self.perf_transfer - self.perf_scratch:
            raise ValueError("improvement must equal perf_transfer - perf_scratch")

    @classmethod
    def from_perfs(cls, target_name: str, source_name: str,
                   perf_transfer: float, perf_scratch: float) -> "ImprovementRecord":
        return cls(target_name, source_name, float(perf_transfer),
                   float(perf_scratch), float(perf_transfer) - float(perf_scratch))


@dataclass(frozen=True)
class GridPoint:
    """One calibration grid cell: mean rank correlation at (k, distance)."""

    k: float
    distance: DivergenceKind
    mean_rho: float


@dataclass(frozen=True)
class CalibrationReport:
    """Outcome of the k / distance grid search."""

    best_k: float
    best_distance: DivergenceKind
    grid: tuple[GridPoint, ...]
    per_task_rho: Mapping[str, float]
    top_T: int = 1

    def __post_init__(self):
        if not self.grid:
            raise ValueError("calibration grid must be nonempty")
        if self.top_T < 1:
            raise ValueError("top_T must be >= 1")
        best = self.best_point()
        max_rho = max(g.mean_rho for g in self.grid)
        if best.mean_rho != max_rho:
            raise ValueError("best grid entry does not attain the maximum mean rho")
        for task, rho in self.per_task_rho.items():
            if not (-1.0 - 1e-12 <= rho <= 1.0 + 1e-12):
                raise ValueError(f"rho for task {task!r} outside [-1, 1]")

    def best_point(self) -> GridPoint:
        for g in self.grid:
            if g.k == self.best_k and g.distance is self.best_distance:
                return g
        raise ValueError("best (k, distance) not present in grid")

    def curve(self, distance: DivergenceKind) -> tuple[tuple[float, float], ...]:
        """(k, mean_rho) pairs for one distance kind, ascending in k."""
        kind = DivergenceKind(distance)
        pts = [(g.k, g.mean_rho) for g in self.grid if g.distance is kind]
        return tuple(sorted(pts))
