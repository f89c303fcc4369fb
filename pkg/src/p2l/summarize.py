"""Collapse an embedding matrix to a dataset summary vector.

The summary is the (trimmed) per-dimension mean of the item vectors,
L1-normalized so probability-type distances apply, with optional epsilon
smoothing to remove zero components.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DatasetProfile, EmbeddingMatrix, Summarizer, SummaryVector
from .errors import EmptyMatrix, NegativeComponent, NegativeMass, NonPositiveEpsilon


def summarize(matrix: EmbeddingMatrix, summarizer: Summarizer | None = None,
              allow_negative: bool = False) -> SummaryVector:
    """Per-dimension (trimmed) mean of the rows, L1-normalized.

    The trimmed mean drops the lowest and highest floor(fraction * n) values
    per dimension independently before averaging.

    With ``allow_negative`` a mean containing negative components is returned
    unnormalized (values = raw mean); only L1/L2 distances apply to it.
    """
    s = summarizer if summarizer is not None else Summarizer.mean()
    n = matrix.items
    if n < 1:
        raise EmptyMatrix("cannot summarize an empty matrix")
    if s.kind == "trimmed_mean":
        trim = math.floor(s.fraction * n)
        if trim:
            ordered = np.sort(matrix.values, axis=0)
            raw = ordered[trim:n - trim].mean(axis=0)
        else:
            raw = matrix.values.mean(axis=0)
    else:
        raw = matrix.values.mean(axis=0)

    if float(raw.min()) < 0.0:
        if not allow_negative:
            raise NegativeComponent(
                "mean has a negative component; probability distances are "
                "undefined (pass allow_negative to keep the raw mean)")
        return SummaryVector(values=raw, raw_mean=raw, summarizer=s, normalized=False)

    total = float(raw.sum())
    if total <= 0.0:
        raise NegativeMass("mean has zero total mass and cannot be L1-normalized")
    return SummaryVector(values=raw / total, raw_mean=raw, summarizer=s, normalized=True)


def smooth(v: SummaryVector, epsilon: float) -> SummaryVector:
    """Uniform smoothing: every component becomes (v_i + eps) / (1 + d * eps).

    Output is strictly positive and stays L1-normalized.
    """
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise NonPositiveEpsilon(f"epsilon must be a finite value > 0, got {epsilon!r}")
    if not v.normalized:
        raise ValueError("smooth requires an L1-normalized summary")
    smoothed = (v.values + epsilon) / (1.0 + v.dim * epsilon)
    return SummaryVector(values=smoothed, raw_mean=v.raw_mean,
                         summarizer=v.summarizer, normalized=True)


def profile_from_matrix(name: str, matrix: EmbeddingMatrix,
                        summarizer: Summarizer | None = None, role: str = "source",
                        size: int | None = None,
                        allow_negative: bool = False) -> DatasetProfile:
    """Build a registry profile from raw embeddings; size defaults to row count."""
    summary = summarize(matrix, summarizer, allow_negative=allow_negative)
    return DatasetProfile(
        name=name,
        size=matrix.items if size is None else size,
        summary=summary,
        extractor_id=matrix.extractor_id,
        role=role,
    )
