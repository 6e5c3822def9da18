"""Relevance functions, NDCG, and prediction error."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np


def _cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("vectors must share a vocabulary layout")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("relevance is undefined for an all-zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def relevance_rg(importance_p, importance_q) -> float:
    """Cosine between two continuous importance vectors."""
    return _cosine(importance_p, importance_q)


def relevance_rb(tags_p, tags_q) -> float:
    """Cosine between two binary importance vectors."""
    return _cosine(np.asarray(tags_p) > 0, np.asarray(tags_q) > 0)


def dcg(gains, k: int) -> float:
    g = np.asarray(gains, dtype=np.float64)[:k]
    return float(np.sum((2.0 ** g - 1.0) / np.log2(np.arange(2, g.size + 2))))


def ndcg_at_k(gains_in_rank_order, ideal_gains, k: int) -> float:
    """NDCG@k with exponential gain and log2 discount; 0 when no item has gain."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ideal = np.sort(np.asarray(ideal_gains, dtype=np.float64))[::-1]
    z = dcg(ideal, k)
    if z <= 0:
        return 0.0
    return dcg(gains_in_rank_order, k) / z


def prediction_error(predicted: Mapping[str, Mapping[str, float]],
                     truth: Mapping[str, Mapping[str, float]]) -> float:
    """Mean over images of the per-image mean absolute importance difference."""
    if set(predicted) != set(truth):
        missing = sorted(set(predicted) ^ set(truth))[:5]
        raise ValueError(f"predicted and true importance cover different images, e.g. {missing}")
    if not truth:
        raise ValueError("no images to score")
    errors = []
    for iid in sorted(truth):
        t = truth[iid]
        p = predicted[iid]
        if set(p) != set(t):
            raise ValueError(f"image {iid!r}: predicted and true tags differ")
        tags = sorted(t)
        errors.append(np.mean([abs(p[x] - t[x]) for x in tags]) if tags else 0.0)
    return float(np.mean(errors))


def mean_curve(curves: Sequence[Mapping[int, float]]) -> dict:
    ks = sorted(curves[0])
    return {k: float(np.mean([c[k] for c in curves])) for k in ks}
