"""Dissimilarity measures between dataset summary vectors.

Five candidates, natural log throughout:

    KL(p, q)  = sum p_i ln(p_i / q_i)          (first argument: the target)
    JSD(p, q) = sqrt(KL(p, m)/2 + KL(q, m)/2)  with m = (p + q)/2
    CHI2      = sum (p_i - q_i)^2 / (p_i + q_i) / 2
    EUC       = sqrt(sum (p_i - q_i)^2)
    CITYBLOCK = sum |p_i - q_i|

KL/JSD/CHI2 treat summaries as probability vectors and need strictly positive
input; pass ``epsilon`` to smooth both arguments first, or smooth upstream.
EUC/CITYBLOCK never smooth.
"""
from __future__ import annotations

import math

import numpy as np

from .core import PROBABILITY_KINDS, DivergenceKind, SummaryVector
from .errors import DimensionMismatch, NonPositiveComponent
from .summarize import smooth


def distance(kind: DivergenceKind | str, p: SummaryVector, q: SummaryVector,
             epsilon: float | None = None) -> float:
    """D(p, q) >= 0 for the requested kind; p is the target summary by convention."""
    kind = DivergenceKind(kind)
    if p.dim != q.dim:
        raise DimensionMismatch(f"summary dims differ: {p.dim} vs {q.dim}")

    if kind in PROBABILITY_KINDS:
        if not (p.normalized and q.normalized):
            raise NonPositiveComponent(
                f"{kind.value} is undefined on unnormalized summaries")
        if epsilon is not None:
            p = smooth(p, epsilon)
            q = smooth(q, epsilon)
        pv, qv = p.values, q.values
        if float(pv.min()) <= 0.0 or float(qv.min()) <= 0.0:
            raise NonPositiveComponent(
                f"{kind.value} needs strictly positive input; smooth first "
                "or pass epsilon")
        if kind is DivergenceKind.KL:
            return max(0.0, float(pv @ np.log(pv / qv)))
        if kind is DivergenceKind.JSD:
            m = 0.5 * (pv + qv)
            inner = 0.5 * float(pv @ np.log(pv / m)) + 0.5 * float(qv @ np.log(qv / m))
            return math.sqrt(max(0.0, inner))
        diff = pv - qv
        return max(0.0, 0.5 * float(np.sum(diff * diff / (pv + qv))))

    diff = p.values - q.values
    if kind is DivergenceKind.EUC:
        return float(np.sqrt(np.sum(diff * diff)))
    return float(np.sum(np.abs(diff)))
