"""Comparison models for importance prediction: equal-importance baseline,
ridge regression on node features, and binary-to-continuous conversion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import MrfInstance


@dataclass(frozen=True)
class RidgeRegressor:
    coef: np.ndarray
    bias: float
    lam: float


def train_ridge(X, y, lam: float) -> RidgeRegressor:
    """Closed-form ridge regression with an unpenalized bias term."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if X.shape[0] == 0:
        raise ValueError("need at least one training row")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    penalty = lam * np.eye(Xb.shape[1])
    penalty[-1, -1] = 0.0
    sol = np.linalg.solve(Xb.T @ Xb + penalty, Xb.T @ y)
    return RidgeRegressor(sol[:-1], float(sol[-1]), lam)


def predict_ridge(model: RidgeRegressor, row) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.shape != model.coef.shape:
        raise ValueError(f"row has shape {row.shape}, model expects {model.coef.shape}")
    return float(np.clip(row @ model.coef + model.bias, 0.0, 1.0))


# --------------------------------------------------------------------------
# importance models over MRF instances


def node_rows(inst: MrfInstance, n_objects: int, semantic: bool):
    """Object-node feature rows: visual only, or semantic + visual."""
    X = inst.node_features
    return X if semantic else X[:, n_objects:]


@dataclass(frozen=True)
class RidgeImportanceModel:
    """Per-node ridge regressors: one for object tags, one for the scene tag."""

    objects: RidgeRegressor
    scene: Optional[RidgeRegressor]
    n_objects: int
    n_scenes: int
    semantic: bool

    def predict(self, inst: MrfInstance) -> dict:
        rows = node_rows(inst, self.n_objects, self.semantic)
        out = {t: predict_ridge(self.objects, r) for t, r in zip(inst.object_tags, rows)}
        if inst.has_scene:
            x = inst.scene_features if self.semantic else inst.scene_features[self.n_scenes:]
            out[inst.scene_tag] = predict_ridge(self.scene, x) if self.scene is not None else 0.0
        return out


def train_ridge_importance(instances: Sequence[MrfInstance], truths: Sequence[dict], lam: float,
                           n_objects: int, n_scenes: int, semantic: bool) -> RidgeImportanceModel:
    Xo, yo, Xs, ys = [], [], [], []
    for inst, truth in zip(instances, truths):
        for t, r in zip(inst.object_tags, node_rows(inst, n_objects, semantic)):
            Xo.append(r)
            yo.append(truth.get(t, 0.0))
        if inst.has_scene:
            Xs.append(inst.scene_features if semantic else inst.scene_features[n_scenes:])
            ys.append(truth.get(inst.scene_tag, 0.0))
    obj = train_ridge(np.array(Xo), np.array(yo), lam)
    scene = train_ridge(np.array(Xs), np.array(ys), lam) if Xs else None
    return RidgeImportanceModel(obj, scene, n_objects, n_scenes, semantic)


def equal_importance(tags: Sequence[str]) -> dict:
    if not tags:
        return {}
    return {t: 1.0 / len(tags) for t in tags}


def binary_to_continuous(decisions: dict) -> dict:
    """Spread one unit of importance evenly over the tags marked important."""
    important = [t for t, v in decisions.items() if v > 0]
    return {t: (1.0 / len(important) if t in important else 0.0) for t in decisions}


def binary_accuracy(preds, truths, weights=None) -> float:
    """Fraction of correct decisions, optionally weighted (e.g. by instance count)."""
    p = np.asarray(preds).astype(bool)
    t = np.asarray(truths).astype(bool)
    if p.shape != t.shape:
        raise ValueError("prediction and truth lengths differ")
    if p.size == 0:
        raise ValueError("no decisions to score")
    wts = np.ones(p.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(wts[p == t].sum() / wts.sum())
