"""Textual feature settings and the I2I / T2I / I2T retrieval tasks."""

from __future__ import annotations

from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .cca import CcaModel, ncca_similarities, project
from .corpus import ImageRecord, Vocabulary
from .errors import DataError

DEFAULT_NEIGHBORS = 50


class TextFeatureMode(str, Enum):
    TAGS = "TAGS"
    PBTI = "PBTI"   # predicted binary importance
    PCTI = "PCTI"   # predicted continuous importance
    TBTI = "TBTI"   # true (measured) binary importance
    TCTI = "TCTI"   # true (measured) continuous importance

    @property
    def binary(self) -> bool:
        return self in (TextFeatureMode.PBTI, TextFeatureMode.TBTI)

    @property
    def predicted(self) -> bool:
        return self in (TextFeatureMode.PBTI, TextFeatureMode.PCTI)


def importance_row(values: Mapping[str, float], vocab: Vocabulary) -> np.ndarray:
    row = np.zeros(len(vocab.tags))
    for t, v in values.items():
        row[vocab.tag_index(t)] = v
    return row


def tag_row(rec: ImageRecord, vocab: Vocabulary) -> np.ndarray:
    row = np.zeros(len(vocab.tags))
    for t in rec.all_tags:
        row[vocab.tag_index(t)] = 1.0
    return row


def build_text_features(records: Sequence[ImageRecord], importance: Optional[Mapping],
                        mode, vocab: Vocabulary, training: bool = True) -> np.ndarray:
    """One textual row per record, laid out as ``vocab.tags``.

    ``importance`` maps image id to {tag: value}; for the binary settings a
    tag counts as important when its value is positive.
    """
    mode = TextFeatureMode(mode)
    rows = []
    for rec in records:
        if training and not rec.all_tags:
            raise DataError(f"image {rec.id!r} has no tags and cannot be used for training")
        if mode is TextFeatureMode.TAGS:
            rows.append(tag_row(rec, vocab))
            continue
        if importance is None or rec.id not in importance:
            raise DataError(f"image {rec.id!r}: no importance values for setting {mode.value}")
        row = importance_row(importance[rec.id], vocab)
        rows.append((row > 0).astype(np.float64) if mode.binary else row)
    return np.asarray(rows).reshape(len(records), len(vocab.tags))


# --------------------------------------------------------------------------
# ranking


def rank_by_score(ids: Sequence[str], scores) -> list[tuple[str, float]]:
    """Descending score, ties broken by id."""
    scores = np.asarray(scores, dtype=np.float64)
    order = sorted(range(len(ids)), key=lambda k: (-scores[k], ids[k]))
    return [(ids[k], float(scores[k])) for k in order]


def _check_db(db_ids, db_rows):
    if len(db_ids) == 0:
        raise ValueError("database is empty")
    if len(db_ids) != len(db_rows):
        raise ValueError("database ids and rows differ in length")


def retrieve_i2i(model: CcaModel, query_visual, db_ids: Sequence[str], db_visuals) -> list:
    _check_db(db_ids, db_visuals)
    q = project(model, query_visual, "visual")
    return rank_by_score(db_ids, ncca_similarities(q, project(model, db_visuals, "visual")))


def retrieve_t2i(model: CcaModel, weighted_tags, db_ids: Sequence[str], db_visuals) -> list:
    """Rank images for a textual row (tag weights = importance)."""
    _check_db(db_ids, db_visuals)
    q = project(model, weighted_tags, "textual")
    return rank_by_score(db_ids, ncca_similarities(q, project(model, db_visuals, "visual")))


def annotate_i2t(model: CcaModel, query_visual, db_visuals, db_text, tags: Sequence[str],
                 n: int = DEFAULT_NEIGHBORS) -> list:
    """Average the textual rows of the ``n`` most similar database images and
    rank tags by that average."""
    _check_db(db_text, db_visuals)
    q = project(model, query_visual, "visual")
    sims = ncca_similarities(q, project(model, db_visuals, "visual"))
    return _rank_tags(sims, db_text, tags, n)


def _rank_tags(sims, db_text, tags, n):
    n = min(max(n, 1), len(sims))
    # stable descending order keeps database order among equal scores
    nearest = np.argsort(-np.asarray(sims), kind="stable")[:n]
    mean = np.asarray(db_text, dtype=np.float64)[nearest].mean(axis=0)
    order = sorted(range(len(tags)), key=lambda k: (-mean[k], k))
    return [(tags[k], float(mean[k])) for k in order]


def baseline_visual_only(query_visual, db_ids: Sequence[str], db_visuals) -> list:
    """Rank by ascending Euclidean distance in the raw visual space.

    Scores are negated distances so rankings stay non-increasing in score.
    """
    _check_db(db_ids, db_visuals)
    d = np.linalg.norm(np.asarray(db_visuals, dtype=np.float64) - np.asarray(query_visual), axis=1)
    return rank_by_score(db_ids, -d)


def baseline_tagging(query_visual, db_visuals, db_tag_rows, tags: Sequence[str],
                     n: int = DEFAULT_NEIGHBORS) -> list:
    _check_db(db_tag_rows, db_visuals)
    d = np.linalg.norm(np.asarray(db_visuals, dtype=np.float64) - np.asarray(query_visual), axis=1)
    return _rank_tags(-d, db_tag_rows, tags, n)
