"""Score and rank candidate sources for a target dataset.

The selection score of source s for target t is

    score(t, s) = z(ln |s|) + k * z(D(t, s))

with both z-scalings taken over the current candidate set. A larger source
helps (logarithmically); divergence from the target works against it, so k is
conventionally negative. Also implements the five reference selection
baselines B1..B5 and size-weighted profile merging.
"""
from __future__ import annotations

import math
import random
from typing import Sequence

import numpy as np

from .core import (
    PROBABILITY_KINDS,
    DatasetProfile,
    DivergenceKind,
    EstimatorConfig,
    ScoredSource,
    Summarizer,
    SummaryVector,
)
from .divergence import distance
from .errors import (
    DimensionMismatch,
    DuplicateSourceName,
    EmptyCandidates,
    MissingReference,
    MissingSeed,
    MixedExtractors,
    MixedSummarizers,
    NegativeMass,
)

BASELINES = ("B1", "B2", "B3", "B4", "B5")


def zscale(values) -> np.ndarray:
    """(x - mean) / population std; all zeros when the input is constant."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("zscale needs a nonempty 1-d list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("zscale input must be finite")
    if arr.size == 1:
        return np.zeros(1)
    sigma = float(arr.std())
    if sigma == 0.0:
        return np.zeros_like(arr)
    return (arr - arr.mean()) / sigma


def score_table(names: Sequence[str], sizes: Sequence[float],
                distances: Sequence[float], k: float) -> list[ScoredSource]:
    """Score precomputed (size, distance) rows and sort best-first.

    Ties break by descending size, then name. Sizes may be any positive reals
    so callers can exercise scale-invariance directly.
    """
    names = list(names)
    n = len(names)
    if n == 0:
        raise EmptyCandidates("no candidate sources to score")
    if len(set(names)) != n:
        raise DuplicateSourceName("candidate names must be distinct")
    if len(sizes) != n or len(distances) != n:
        raise ValueError("names, sizes and distances must align")
    sizes = np.asarray(sizes, dtype=np.float64)
    dists = np.asarray(distances, dtype=np.float64)
    if not (np.all(np.isfinite(sizes)) and np.all(sizes > 0.0)):
        raise ValueError("sizes must be positive and finite")
    if not (np.all(np.isfinite(dists)) and np.all(dists >= 0.0)):
        raise ValueError("distances must be >= 0 and finite")

    logs = np.log(sizes)
    z_logs = zscale(logs)
    z_dists = zscale(dists)
    scored = []
    for i, name in enumerate(names):
        zl = float(z_logs[i])
        zd = float(z_dists[i])
        scored.append(ScoredSource(
            source_name=name,
            distance_value=float(dists[i]),
            log_size=float(logs[i]),
            z_log_size=zl,
            z_distance=zd,
            k=float(k),
            score=zl + float(k) * zd,
        ))
    order = sorted(range(n), key=lambda i: (-scored[i].score, -sizes[i], names[i]))
    return [scored[i] for i in order]


def profile_distance(target: DatasetProfile, source: DatasetProfile,
                     cfg: EstimatorConfig) -> float:
    """D(target, source) under the config (smoothing applied for KL/JSD/CHI2)."""
    p: SummaryVector = target.summary
    q: SummaryVector = source.summary
    if cfg.reverse_kl and cfg.distance is DivergenceKind.KL:
        p, q = q, p
    eps = cfg.epsilon if cfg.distance in PROBABILITY_KINDS else None
    return distance(cfg.distance, p, q, epsilon=eps)


def _check_candidates(target: DatasetProfile, sources: Sequence[DatasetProfile],
                      allow_mixed_extractors: bool) -> None:
    if not sources:
        raise EmptyCandidates("need at least one candidate source")
    seen = set()
    for s in sources:
        if s.name in seen:
            raise DuplicateSourceName(f"duplicate source name {s.name!r}")
        seen.add(s.name)
        if s.summary.dim != target.summary.dim:
            raise DimensionMismatch(
                f"source {s.name!r} has dim {s.summary.dim}, target has "
                f"{target.summary.dim}")
        if not allow_mixed_extractors and s.extractor_id != target.extractor_id:
            raise MixedExtractors(
                f"source {s.name!r} was embedded by {s.extractor_id!r}, target "
                f"by {target.extractor_id!r}; distances are only meaningful "
                "within one extractor's feature space")


def score_sources(target: DatasetProfile, sources: Sequence[DatasetProfile],
                  cfg: EstimatorConfig,
                  allow_mixed_extractors: bool = False) -> list[ScoredSource]:
    """Score every candidate for this target; result is sorted best-first.

    z-statistics are computed across exactly this candidate set, separately
    for the log-size and distance lists.
    """
    _check_candidates(target, sources, allow_mixed_extractors)
    names = [s.name for s in sources]
    sizes = [float(s.size) for s in sources]
    dists = [profile_distance(target, s, cfg) for s in sources]
    return score_table(names, sizes, dists, cfg.k)


def select(scored: Sequence[ScoredSource]) -> str:
    """Best candidate of a score_sources result (already deterministically sorted)."""
    if not scored:
        raise EmptyCandidates("cannot select from an empty ranking")
    return scored[0].source_name


def baseline_ranking(kind: str, target: DatasetProfile,
                     sources: Sequence[DatasetProfile],
                     cfg: EstimatorConfig | None = None,
                     reference_name: str | None = None,
                     rng_seed: int | None = None,
                     allow_mixed_extractors: bool = False) -> list[str] | None:
    """Full candidate ordering for one baseline; None for B4 (no transfer).

    B1: by size, largest first. B2: the fixed reference first. B3: seeded
    uniform shuffle. B5: by divergence, least first (needs cfg).
    """
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    if kind == "B4":
        return None
    if not sources:
        raise EmptyCandidates("need at least one candidate source")
    names = [s.name for s in sources]
    if len(set(names)) != len(names):
        raise DuplicateSourceName("candidate names must be distinct")

    if kind == "B1":
        return [s.name for s in sorted(sources, key=lambda s: (-s.size, s.name))]
    if kind == "B2":
        if reference_name is None or reference_name not in names:
            raise MissingReference(
                f"reference source {reference_name!r} not among candidates")
        rest = [s for s in sources if s.name != reference_name]
        return [reference_name] + [
            s.name for s in sorted(rest, key=lambda s: (-s.size, s.name))]
    if kind == "B3":
        if rng_seed is None:
            raise MissingSeed("random baseline needs an explicit seed")
        ordered = sorted(names)
        random.Random(rng_seed).shuffle(ordered)
        return ordered
    # B5: least divergent first; same secondary tie-breaks as score_sources.
    if cfg is None:
        raise ValueError("B5 needs an estimator config for the distance")
    _check_candidates(target, sources, allow_mixed_extractors)
    dists = {s.name: profile_distance(target, s, cfg) for s in sources}
    return [s.name for s in
            sorted(sources, key=lambda s: (dists[s.name], -s.size, s.name))]


def baseline_select(kind: str, target: DatasetProfile,
                    sources: Sequence[DatasetProfile],
                    cfg: EstimatorConfig | None = None,
                    reference_name: str | None = None,
                    rng_seed: int | None = None,
                    allow_mixed_extractors: bool = False) -> str | None:
    """First pick of the baseline's ranking; None for B4."""
    ranking = baseline_ranking(kind, target, sources, cfg, reference_name,
                               rng_seed, allow_mixed_extractors)
    return None if ranking is None else ranking[0]


def merge_profiles(profiles: Sequence[DatasetProfile], name: str) -> DatasetProfile:
    """Profile of the pooled dataset: summed size, size-weighted raw means.

    Equals (within float rounding) the profile built from concatenating the
    member matrices, provided every member used the plain mean summarizer and
    its stored size is its row count.
    """
    if len(profiles) < 2:
        raise ValueError("merging needs at least two profiles")
    dim = profiles[0].summary.dim
    extractor = profiles[0].extractor_id
    for p in profiles:
        if p.summary.dim != dim:
            raise DimensionMismatch(f"profile {p.name!r} has dim {p.summary.dim}, expected {dim}")
        if p.summary.summarizer != Summarizer.mean():
            raise MixedSummarizers(
                f"profile {p.name!r} used {p.summary.summarizer.label()}; "
                "trimmed means do not compose under merging")
        if p.extractor_id != extractor:
            raise MixedExtractors(
                f"profile {p.name!r} was embedded by {p.extractor_id!r}, "
                f"expected {extractor!r}")

    total = sum(p.size for p in profiles)
    weighted = np.zeros(dim)
    for p in profiles:
        weighted += p.size * p.summary.raw_mean
    raw = weighted / total
    mass = float(raw.sum())
    if mass <= 0.0:
        raise NegativeMass("merged mean has zero total mass")
    summary = SummaryVector(values=raw / mass, raw_mean=raw,
                            summarizer=Summarizer.mean(), normalized=True)
    return DatasetProfile(name=name, size=total, summary=summary,
                          extractor_id=extractor, role="source")
