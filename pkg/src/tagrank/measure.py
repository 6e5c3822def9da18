"""Ground-truth tag importance measured from sentence descriptions.

Object tags receive discounted probability importance: every sentence
spreads one unit of credit evenly over the object tags it mentions, and the
credits are averaged over the image's sentences. When the image has a scene
tag, the scene's grammatical role in each sentence sets a scene factor
``c`` (0 when unmentioned, ``alpha`` inside a prepositional modifier,
``beta`` otherwise); the scene then takes ``c / (1 + c)`` of that sentence's
unit and the objects share the rest.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .corpus import ImageRecord, SentenceRecord, SynonymLexicon, Taxonomy
from .errors import PreconditionError
from .trees import ParseTree

log = logging.getLogger(__name__)

PREPOSITION_LABELS = frozenset({"IN", "TO"})
N_LEVELS = 11


@dataclass(frozen=True)
class MatchConfig:
    lexicon: SynonymLexicon = field(default_factory=SynonymLexicon)
    taxonomy: Optional[Taxonomy] = None
    wup_threshold: float = 0.9
    alpha: float = 1.0
    beta: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.wup_threshold <= 1.0):
            raise ValueError(f"wup_threshold must lie in (0, 1], got {self.wup_threshold}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("scene weights must be non-negative")
        if self.alpha > self.beta:
            raise ValueError(f"alpha ({self.alpha}) must not exceed beta ({self.beta})")


@dataclass(frozen=True)
class ImportanceVector:
    values: Mapping[str, float]
    quantized: bool = False

    def __post_init__(self):
        total = 0.0
        for tag, v in self.values.items():
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"importance of {tag!r} is {v}, outside [0, 1]")
            total += v
        # rounding to tenths can push the mass of a quantized vector past 1
        if not self.quantized and total > 1.0 + 1e-9:
            raise ValueError(f"importance mass {total} exceeds 1")
        if self.quantized:
            for tag, v in self.values.items():
                if abs(v * 10 - round(v * 10)) > 1e-9:
                    raise ValueError(f"quantized importance of {tag!r} is off-grid: {v}")

    def __getitem__(self, tag):
        return self.values[tag]

    def get(self, tag, default=0.0):
        return self.values.get(tag, default)


# --------------------------------------------------------------------------
# concept matching


def wu_palmer_similarity(taxonomy: Taxonomy, c1: str, c2: str) -> float:
    d1 = taxonomy.depth(c1)
    d2 = taxonomy.depth(c2)
    anc1 = set(taxonomy.ancestors(c1))
    lcs = next(a for a in taxonomy.ancestors(c2) if a in anc1)
    return 2.0 * taxonomy.depth(lcs) / (d1 + d2)


def match_token_to_tag(token: str, tags: Sequence[str], config: MatchConfig) -> Optional[str]:
    """Map a sentence token to one of ``tags`` (in priority order) or None.

    Exact matches win over lexicon synonyms, which win over taxonomy
    matches; among equals the earliest tag in ``tags`` is returned.
    """
    token = token.lower()
    if token in tags:
        return token
    synonyms = config.lexicon.targets(token)
    if synonyms:
        for tag in tags:
            if tag in synonyms:
                return tag
    tax = config.taxonomy
    if tax is not None and token in tax:
        best, best_sim = None, -1.0
        for tag in tags:
            if tag not in tax:
                continue
            sim = wu_palmer_similarity(tax, token, tag)
            if sim > best_sim:
                best, best_sim = tag, sim
        if best is not None and best_sim >= config.wup_threshold:
            return best
    return None


def sentence_tag_sets(sentence: SentenceRecord, object_tags: Sequence[str], config: MatchConfig) -> set:
    found = set()
    for tok in sentence.tokens:
        tag = match_token_to_tag(tok, object_tags, config)
        if tag is not None:
            found.add(tag)
    return found


# --------------------------------------------------------------------------
# importance


def object_importance(image: ImageRecord, config: MatchConfig) -> ImportanceVector:
    """Discounted probability importance of the image's object tags."""
    k_n = len(image.sentences)
    if k_n == 0:
        raise PreconditionError(f"image {image.id!r} has no sentences")
    acc = {t: Fraction(0) for t in image.object_tags}
    for s in image.sentences:
        mentioned = sentence_tag_sets(s, image.object_tags, config)
        for t in mentioned:
            acc[t] += Fraction(1, len(mentioned))
    return ImportanceVector({t: float(v / k_n) for t, v in acc.items()})


def _is_prepositional(node: ParseTree) -> bool:
    return (node.label.split("-")[0] == "PP"
            and not node.is_leaf
            and node.children[0].label in PREPOSITION_LABELS)


def scene_factor(tree: ParseTree, scene_tag: str, config: MatchConfig) -> float:
    path = tree.find_path(lambda tok: match_token_to_tag(tok, (scene_tag,), config) is not None)
    if path is None:
        return 0.0
    if any(_is_prepositional(node) for node in path):
        return config.alpha
    return config.beta


def _sentence_shares(sentence: SentenceRecord, object_tags: Sequence[str], scene_tag: Optional[str],
                     config: MatchConfig) -> dict:
    # exact rationals so that image averages are correctly rounded once
    c_s = Fraction(0) if scene_tag is None else Fraction(scene_factor(sentence.tree, scene_tag, config))
    mentioned = sentence_tag_sets(sentence, object_tags, config)
    out = {}
    for t in object_tags:
        out[t] = 1 / (len(mentioned) * (1 + c_s)) if t in mentioned else Fraction(0)
    if scene_tag is not None:
        out[scene_tag] = c_s / (1 + c_s)
    return out


def joint_sentence_importance(sentence: SentenceRecord, object_tags: Sequence[str],
                              scene_tag: Optional[str], config: MatchConfig) -> dict:
    shares = _sentence_shares(sentence, object_tags, scene_tag, config)
    return {t: float(v) for t, v in shares.items()}


def measure_image_importance(image: ImageRecord, config: MatchConfig) -> ImportanceVector:
    k_n = len(image.sentences)
    if k_n == 0:
        raise PreconditionError(f"image {image.id!r} has no sentences")
    acc = {t: Fraction(0) for t in image.all_tags}
    for s in image.sentences:
        for t, v in _sentence_shares(s, image.object_tags, image.scene_tag, config).items():
            acc[t] += v
    return ImportanceVector({t: float(v / k_n) for t, v in acc.items()})


def quantize_value(v: float) -> float:
    # half-up at x.x5; the epsilon absorbs binary representation error
    level = int(math.floor(v * 10 + 0.5 + 1e-9))
    return min(max(level, 0), 10) / 10


def quantize_importance(v: ImportanceVector) -> ImportanceVector:
    """Round to the 11 levels 0.0, 0.1, ..., 1.0."""
    return ImportanceVector({t: quantize_value(x) for t, x in v.values.items()}, quantized=True)


def measure_dataset(records: Sequence[ImageRecord], config: MatchConfig, quantize: bool = False) -> dict:
    """Measure every image that has sentences; others are skipped and logged."""
    out = {}
    skipped = []
    for rec in records:
        if not rec.sentences:
            skipped.append(rec.id)
            continue
        v = measure_image_importance(rec, config)
        out[rec.id] = quantize_importance(v) if quantize else v
    if skipped:
        log.warning("skipped %d image(s) without sentences: %s", len(skipped), ", ".join(skipped[:10]))
    return out


def save_importance(path, importance: Mapping) -> None:
    doc = {iid: dict(v.values) if isinstance(v, ImportanceVector) else dict(v)
           for iid, v in importance.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_importance(path) -> dict:
    """-> {image_id: {tag: value}} (plain dicts)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a JSON object keyed by image id")
    return {iid: {t: float(x) for t, x in vals.items()} for iid, vals in doc.items()}
