"""Data model and ingestion: datasets, feature matrices, taxonomies, lexicons."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .trees import ParseTree, parse_bracketed_tree, serialize_tree

FEATURE_MAGIC = b"TGRK"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIQQ")

FEATURE_ROLES = ("visual_retrieval", "scene_visual", "saliency_gray")


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box, origin top-left."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def check(self, width: int, height: int) -> None:
        if not (0 <= self.x_min < self.x_max <= width):
            raise ValidationError(f"bbox x-range [{self.x_min},{self.x_max}) outside width {width}")
        if not (0 <= self.y_min < self.y_max <= height):
            raise ValidationError(f"bbox y-range [{self.y_min},{self.y_max}) outside height {height}")

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class SentenceRecord:
    tokens: tuple[str, ...]
    tree: ParseTree

    @classmethod
    def from_tree(cls, tree: ParseTree) -> SentenceRecord:
        return cls(tuple(tree.tokens()), tree)


@dataclass(frozen=True)
class Instance:
    category: str
    bbox: BoundingBox


@dataclass(frozen=True)
class ImageRecord:
    id: str
    width: int
    height: int
    object_tags: tuple[str, ...]
    scene_tag: Optional[str] = None
    instances: tuple[Instance, ...] = ()
    sentences: tuple[SentenceRecord, ...] = ()
    feature_row: int = 0

    @property
    def all_tags(self) -> tuple[str, ...]:
        if self.scene_tag is None:
            return self.object_tags
        return self.object_tags + (self.scene_tag,)

    def instances_of(self, tag: str) -> list[Instance]:
        return [inst for inst in self.instances if inst.category == tag]


@dataclass(frozen=True)
class Vocabulary:
    object_categories: tuple[str, ...]
    scene_categories: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set()
        for name in self.object_categories + self.scene_categories:
            if name in seen:
                raise ValidationError(f"duplicate vocabulary entry {name!r}")
            seen.add(name)
        object.__setattr__(self, "_obj_index", {c: i for i, c in enumerate(self.object_categories)})
        object.__setattr__(self, "_scene_index", {c: i for i, c in enumerate(self.scene_categories)})

    def object_index(self, name: str) -> int:
        try:
            return self._obj_index[name]
        except KeyError:
            raise KeyError(f"unknown object category {name!r}") from None

    def scene_index(self, name: str) -> int:
        try:
            return self._scene_index[name]
        except KeyError:
            raise KeyError(f"unknown scene category {name!r}") from None

    def is_object(self, name: str) -> bool:
        return name in self._obj_index

    def is_scene(self, name: str) -> bool:
        return name in self._scene_index

    @property
    def tags(self) -> tuple[str, ...]:
        """Textual feature layout: objects then scenes."""
        return self.object_categories + self.scene_categories

    def tag_index(self, name: str) -> int:
        if name in self._obj_index:
            return self._obj_index[name]
        if name in self._scene_index:
            return len(self.object_categories) + self._scene_index[name]
        raise KeyError(f"unknown tag {name!r}")

    def order(self, tags: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(set(tags), key=self.tag_index))

    def digest(self) -> bytes:
        payload = json.dumps([list(self.object_categories), list(self.scene_categories)])
        return hashlib.sha256(payload.encode("utf-8")).digest()


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    role: str = "visual_retrieval"

    def __post_init__(self):
        if self.role not in FEATURE_ROLES:
            raise ValueError(f"unknown feature role {self.role!r}")
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass(frozen=True)
class Taxonomy:
    """Rooted concept tree; the root has depth 1."""

    parent: dict

    def __post_init__(self):
        roots = {p for p in self.parent.values() if p not in self.parent}
        if len(roots) != 1:
            raise ValidationError(f"taxonomy must have exactly one root, found {sorted(roots)}")
        root = roots.pop()
        depth = {root: 1}
        for node in self.parent:
            chain = []
            cur = node
            while cur not in depth:
                if cur in chain:
                    raise ValidationError(f"taxonomy cycle through {cur!r}")
                chain.append(cur)
                cur = self.parent[cur]
            d = depth[cur]
            for n in reversed(chain):
                d += 1
                depth[n] = d
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "_depth", depth)

    def __contains__(self, concept) -> bool:
        return concept in self._depth

    def depth(self, concept: str) -> int:
        try:
            return self._depth[concept]
        except KeyError:
            raise KeyError(f"concept {concept!r} not in taxonomy") from None

    def ancestors(self, concept: str) -> list[str]:
        """Concept first, root last."""
        self.depth(concept)
        out = [concept]
        while out[-1] in self.parent:
            out.append(self.parent[out[-1]])
        return out


@dataclass(frozen=True)
class SynonymLexicon:
    mapping: dict = field(default_factory=dict)

    def targets(self, word: str) -> frozenset:
        return self.mapping.get(word, frozenset())

    def check(self, vocabulary: Vocabulary) -> None:
        for word, cats in self.mapping.items():
            for c in cats:
                if not (vocabulary.is_object(c) or vocabulary.is_scene(c)):
                    raise ValidationError(f"lexicon maps {word!r} to unknown category {c!r}")


# --------------------------------------------------------------------------
# dataset JSON


def _require(cond, image_id, fieldname, msg):
    if not cond:
        raise ValidationError(f"image {image_id!r}, field {fieldname!r}: {msg}")


def validate_record(rec: ImageRecord, vocab: Vocabulary) -> None:
    iid = rec.id
    _require(isinstance(rec.width, int) and rec.width > 0, iid, "width", "must be a positive integer")
    _require(isinstance(rec.height, int) and rec.height > 0, iid, "height", "must be a positive integer")
    _require(len(set(rec.object_tags)) == len(rec.object_tags), iid, "tags", "duplicate tag")
    for t in rec.object_tags:
        _require(vocab.is_object(t), iid, "tags", f"{t!r} is not an object category")
    if rec.scene_tag is not None:
        _require(vocab.is_scene(rec.scene_tag), iid, "scene", f"{rec.scene_tag!r} is not a scene category")
    for inst in rec.instances:
        _require(inst.category in rec.object_tags, iid, "instances",
                 f"instance category {inst.category!r} not among image tags")
        try:
            inst.bbox.check(rec.width, rec.height)
        except ValidationError as exc:
            raise ValidationError(f"image {iid!r}, field 'instances': {exc}") from None
    for k, s in enumerate(rec.sentences):
        _require(list(s.tree.tokens()) == list(s.tokens), iid, "sentences",
                 f"sentence {k}: tree leaves do not match tokens")
    _require(isinstance(rec.feature_row, int) and rec.feature_row >= 0, iid, "feature_row",
             "must be a non-negative integer")


def _record_from_json(obj: dict, vocab: Vocabulary) -> ImageRecord:
    iid = obj.get("id")
    if not isinstance(iid, str):
        raise ValidationError(f"image entry without string id: {obj!r:.80}")
    for key in ("width", "height", "tags", "feature_row"):
        _require(key in obj, iid, key, "missing")
    instances = []
    for inst in obj.get("instances", []):
        bb = inst.get("bbox")
        _require(isinstance(bb, list) and len(bb) == 4 and all(isinstance(v, int) for v in bb),
                 iid, "instances", "bbox must be four integers")
        instances.append(Instance(inst.get("category"), BoundingBox(*bb)))
    sentences = []
    for k, s in enumerate(obj.get("sentences", [])):
        try:
            tree = parse_bracketed_tree(s["tree"])
        except (KeyError, TypeError):
            raise ValidationError(f"image {iid!r}, field 'sentences': sentence {k} has no tree") from None
        except ValueError as exc:
            raise ValidationError(f"image {iid!r}, field 'sentences': sentence {k}: {exc}") from None
        tokens = s.get("tokens")
        if tokens is None:
            tokens = tree.tokens()
        sentences.append(SentenceRecord(tuple(tokens), tree))
    rec = ImageRecord(
        id=iid,
        width=obj["width"],
        height=obj["height"],
        object_tags=tuple(obj["tags"]),
        scene_tag=obj.get("scene"),
        instances=tuple(instances),
        sentences=tuple(sentences),
        feature_row=obj["feature_row"],
    )
    validate_record(rec, vocab)
    return rec


def parse_dataset(doc: dict, n_feature_rows: Optional[int] = None):
    try:
        voc = doc["vocabulary"]
        vocab = Vocabulary(tuple(voc["objects"]), tuple(voc.get("scenes", [])))
        images = doc["images"]
    except (KeyError, TypeError):
        raise ValidationError("dataset must contain 'vocabulary' {objects, scenes} and 'images'") from None
    records = [_record_from_json(obj, vocab) for obj in images]
    ids = set()
    for rec in records:
        if rec.id in ids:
            raise ValidationError(f"image {rec.id!r}, field 'id': duplicate id")
        ids.add(rec.id)
    if n_feature_rows is not None:
        check_feature_rows(records, n_feature_rows)
    return vocab, records


def load_dataset(path, n_feature_rows: Optional[int] = None):
    """Load and validate a dataset file -> (Vocabulary, [ImageRecord])."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return parse_dataset(doc, n_feature_rows)


def check_feature_rows(records: Sequence[ImageRecord], n_rows: int) -> None:
    for rec in records:
        if rec.feature_row >= n_rows:
            raise IndexError(f"image {rec.id!r}: feature_row {rec.feature_row} >= {n_rows} matrix rows")


def dataset_to_json(vocab: Vocabulary, records: Sequence[ImageRecord]) -> dict:
    return {
        "vocabulary": {"objects": list(vocab.object_categories), "scenes": list(vocab.scene_categories)},
        "images": [
            {
                "id": r.id,
                "width": r.width,
                "height": r.height,
                "tags": list(r.object_tags),
                "scene": r.scene_tag,
                "instances": [{"category": i.category, "bbox": i.bbox.as_list()} for i in r.instances],
                "sentences": [{"tokens": list(s.tokens), "tree": serialize_tree(s.tree)} for s in r.sentences],
                "feature_row": r.feature_row,
            }
            for r in records
        ],
    }


def save_dataset(path, vocab: Vocabulary, records: Sequence[ImageRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_json(vocab, records), fh, indent=1)
        fh.write("\n")


# --------------------------------------------------------------------------
# feature matrices


def read_feature_bytes(data: bytes, role: str = "visual_retrieval", magic: bytes = FEATURE_MAGIC) -> FeatureMatrix:
    if len(data) < _FEATURE_HEADER.size:
        raise FormatError("truncated header", len(data))
    got_magic, version, n, d = _FEATURE_HEADER.unpack_from(data, 0)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}", 0)
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    payload = data[_FEATURE_HEADER.size:]
    expected = n * d * 8
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload) // 8} of {n * d} values",
                          _FEATURE_HEADER.size + len(payload))
    if len(payload) > expected:
        raise FormatError("trailing bytes after payload", _FEATURE_HEADER.size + expected)
    values = np.frombuffer(payload, dtype="<f8").reshape(n, d)
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    if bad.size:
        raise FormatError(f"non-finite value at element {bad[0]}", int(bad[0]))
    return FeatureMatrix(values.astype(np.float64), role)


def load_feature_matrix(path, role: str = "visual_retrieval") -> FeatureMatrix:
    return read_feature_bytes(Path(path).read_bytes(), role)


def feature_matrix_bytes(values) -> bytes:
    arr = np.ascontiguousarray(values, dtype="<f8")
    if arr.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature matrix contains non-finite values")
    return _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, arr.shape[0], arr.shape[1]) + arr.tobytes()


def save_feature_matrix(path, values) -> None:
    if isinstance(values, FeatureMatrix):
        values = values.values
    Path(path).write_bytes(feature_matrix_bytes(values))


# --------------------------------------------------------------------------
# taxonomy / lexicon text files


def _tsv_pairs(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValidationError(f"{path}:{lineno}: expected two tab-separated fields")
            yield lineno, parts[0].strip(), parts[1].strip()


def load_taxonomy(path) -> Taxonomy:
    parent = {}
    for lineno, child, par in _tsv_pairs(path):
        if child in parent and parent[child] != par:
            raise ValidationError(f"{path}:{lineno}: {child!r} has two parents")
        parent[child] = par
    return Taxonomy(parent)


def load_lexicon(path, vocabulary: Optional[Vocabulary] = None) -> SynonymLexicon:
    mapping: dict = {}
    for _, word, cat in _tsv_pairs(path):
        mapping.setdefault(word.lower(), set()).add(cat)
    lex = SynonymLexicon({w: frozenset(c) for w, c in mapping.items()})
    if vocabulary is not None:
        lex.check(vocabulary)
    return lex


def save_lexicon(path, lexicon: SynonymLexicon) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(lexicon.mapping):
            for cat in sorted(lexicon.mapping[word]):
                fh.write(f"{word}\t{cat}\n")


# --------------------------------------------------------------------------
# splitting


def split_dataset(records: Sequence, query_frac: float, train_frac: float, seed: int):
    """Random partition into (queries, db_train, db_rest).

    ``train_frac`` is the fraction of the remaining database used for
    training; both fractions must lie in (0, 1).
    """
    for name, frac in (("query_frac", query_frac), ("train_frac", train_frac)):
        if not (0.0 < frac < 1.0):
            raise ValueError(f"{name} must lie in (0, 1), got {frac}")
    n = len(records)
    perm = np.random.default_rng(seed).permutation(n)
    # round half up; builtin round() is half-even
    n_query = int(math.floor(query_frac * n + 0.5))
    n_train = int(math.floor(train_frac * (n - n_query) + 0.5))
    q = [records[i] for i in perm[:n_query]]
    tr = [records[i] for i in perm[n_query:n_query + n_train]]
    rest = [records[i] for i in perm[n_query + n_train:]]
    return q, tr, rest
