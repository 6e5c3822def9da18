"""Semantic, visual and context features, assembled into per-image MRFs.

Object node features are ``[one-hot category | 15 visual values]`` where the
visual block is::

    0      area (summed over instances, fraction of the image)
    1      log(area + 1e-8)
    2..13  max/min/mean distance to: image center, vertical mid-line,
           horizontal mid-line, rule-of-thirds box (divided by the diagonal)
    14     fraction of saliency mass inside the union of the tag's boxes
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import BoundingBox, ImageRecord, Instance, Vocabulary
from .errors import DataError, FormatError, PreconditionError
from .saliency import SaliencyMap

VISUAL_DIM = 15
AREA = 0
LOG_AREA = 1
LOCATION = slice(2, 14)
MEAN_DIST_CENTER = 4
REL_SALIENCY = 14

ARCHIVE_MAGIC = b"TGRI"
ARCHIVE_VERSION = 1
_ARCHIVE_HEADER = struct.Struct("<4sIQQ")


# --------------------------------------------------------------------------
# geometry


def _stats(d: np.ndarray) -> list[float]:
    return [float(d.max()), float(d.min()), float(d.mean())]


def bbox_location_features(box: BoundingBox, width: int, height: int) -> np.ndarray:
    """Distances from the box's pixel centers to four reference shapes."""
    xs = np.arange(box.x_min, box.x_max) + 0.5
    ys = np.arange(box.y_min, box.y_max) + 0.5
    cx, cy = width / 2.0, height / 2.0
    diag = float(np.hypot(width, height))

    dx, dy = xs - cx, ys - cy
    center = np.sqrt(dx[None, :] ** 2 + dy[:, None] ** 2)
    # mid-line distances depend on one axis only; every column/row of the
    # lattice repeats, so the 1-D statistics equal the lattice ones
    vertical = np.abs(dx)
    horizontal = np.abs(dy)
    bx = np.maximum(0.0, np.maximum(width / 3.0 - xs, xs - 2.0 * width / 3.0))
    by = np.maximum(0.0, np.maximum(height / 3.0 - ys, ys - 2.0 * height / 3.0))
    thirds = np.sqrt(bx[None, :] ** 2 + by[:, None] ** 2)

    out = _stats(center) + _stats(vertical) + _stats(horizontal) + _stats(thirds)
    return np.asarray(out) / diag


def object_visual_features(instances: Sequence[Instance], saliency: Optional[SaliencyMap],
                           width: int, height: int) -> np.ndarray:
    if not instances:
        raise PreconditionError("object visual features need at least one instance")
    area = min(1.0, sum(inst.bbox.area for inst in instances) / float(width * height))
    location = np.min([bbox_location_features(inst.bbox, width, height) for inst in instances], axis=0)

    sal = np.ones((height, width)) if saliency is None else np.asarray(
        saliency.values if isinstance(saliency, SaliencyMap) else saliency, dtype=np.float64)
    if sal.shape != (height, width):
        raise ValueError(f"saliency shape {sal.shape} does not match image {(height, width)}")
    mask = np.zeros((height, width), dtype=bool)
    for inst in instances:
        b = inst.bbox
        mask[b.y_min:b.y_max, b.x_min:b.x_max] = True
    rel = float(sal[mask].sum() / (sal.sum() + 1e-12))

    return np.concatenate([[area, np.log(area + 1e-8)], location, [min(rel, 1.0)]])


# --------------------------------------------------------------------------
# semantic and context encodings


def semantic_onehot(category: str, categories: Sequence[str]) -> np.ndarray:
    try:
        idx = list(categories).index(category)
    except ValueError:
        raise KeyError(f"unknown category {category!r}") from None
    v = np.zeros(len(categories))
    v[idx] = 1.0
    return v


def n_object_pairs(n_objects: int) -> int:
    return n_objects * (n_objects - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Position of unordered pair {i, j} in ``itertools.combinations(range(n), 2)``."""
    if i == j:
        raise ValueError("a pair needs two distinct categories")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def object_context_feature(tag_i: str, tag_j: str, visual_i, visual_j, vocabulary: Vocabulary) -> np.ndarray:
    """Relative size and center distance, written into the slot of the tag pair.

    Differences are taken with the lower-vocabulary-index tag first, so the
    result does not depend on argument order.
    """
    if tag_i == tag_j:
        raise ValueError("object context needs two different tags")
    a, b = vocabulary.object_index(tag_i), vocabulary.object_index(tag_j)
    if a > b:
        visual_i, visual_j = visual_j, visual_i
    n = len(vocabulary.object_categories)
    n_pairs = n_object_pairs(n)
    g = np.zeros(2 * n_pairs)
    p = pair_index(a, b, n)
    g[p] = visual_i[AREA] - visual_j[AREA]
    g[n_pairs + p] = visual_i[MEAN_DIST_CENTER] - visual_j[MEAN_DIST_CENTER]
    return g


def object_scene_context_feature(tag_i: str, scene: str, visual_i, vocabulary: Vocabulary) -> np.ndarray:
    i = vocabulary.object_index(tag_i)
    s = vocabulary.scene_index(scene)
    n_s = len(vocabulary.scene_categories)
    g = np.zeros(len(vocabulary.object_categories) * n_s)
    g[i * n_s + s] = visual_i[AREA]
    return g


# --------------------------------------------------------------------------
# MRF instances


@dataclass(frozen=True)
class MrfInstance:
    """One image's MRF. Nodes are the object tags in vocabulary order,
    followed by the scene node when present."""

    image_id: str
    object_tags: tuple[str, ...]
    scene_tag: Optional[str]
    node_features: np.ndarray                 # (n_obj, |C_o| + 15)
    scene_features: Optional[np.ndarray]      # (|C_s| + D_s,) or None
    edges: tuple[tuple[int, int], ...]        # object pairs i < j
    edge_features: np.ndarray                 # (n_edges, 2 * P_o)
    scene_edge_features: np.ndarray           # (n_obj, P_os), empty without scene
    labels: Optional[np.ndarray] = None       # level index per node

    @property
    def n_objects(self) -> int:
        return len(self.object_tags)

    @property
    def has_scene(self) -> bool:
        return self.scene_tag is not None

    @property
    def n_nodes(self) -> int:
        return self.n_objects + (1 if self.has_scene else 0)

    @property
    def tags(self) -> tuple[str, ...]:
        return self.object_tags + ((self.scene_tag,) if self.has_scene else ())

    def with_labels(self, labels) -> MrfInstance:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} labels, got {labels.shape}")
        return MrfInstance(self.image_id, self.object_tags, self.scene_tag, self.node_features,
                           self.scene_features, self.edges, self.edge_features,
                           self.scene_edge_features, labels)


def importance_to_levels(importance, tags: Sequence[str], binary: bool = False) -> np.ndarray:
    """Map importance values to level indices: tenths, or important/not."""
    vals = np.array([importance.get(t, 0.0) for t in tags], dtype=np.float64)
    if binary:
        return (vals > 0).astype(np.int64)
    return np.floor(vals * 10 + 0.5 + 1e-9).astype(np.int64).clip(0, 10)


def build_mrf_instance(image: ImageRecord, saliency: Optional[SaliencyMap], scene_feature_row,
                       vocabulary: Vocabulary, importance=None, binary: bool = False) -> MrfInstance:
    object_tags = tuple(sorted(image.object_tags, key=vocabulary.object_index))
    if not object_tags and image.scene_tag is None:
        raise PreconditionError(f"image {image.id!r} has no tags; instance skipped")

    n_o = len(vocabulary.object_categories)
    visuals = []
    nodes = []
    for t in object_tags:
        insts = image.instances_of(t)
        if not insts:
            raise DataError(f"image {image.id!r}: tag {t!r} has no instance boxes")
        vis = object_visual_features(insts, saliency, image.width, image.height)
        visuals.append(vis)
        nodes.append(np.concatenate([semantic_onehot(t, vocabulary.object_categories), vis]))
    node_features = np.asarray(nodes).reshape(len(object_tags), n_o + VISUAL_DIM)

    edges = tuple(combinations(range(len(object_tags)), 2))
    n_pairs = n_object_pairs(n_o)
    edge_features = np.asarray(
        [object_context_feature(object_tags[i], object_tags[j], visuals[i], visuals[j], vocabulary)
         for i, j in edges]).reshape(len(edges), 2 * n_pairs)

    scene_features = None
    n_os = n_o * len(vocabulary.scene_categories)
    scene_edge_features = np.zeros((0, n_os))
    if image.scene_tag is not None:
        if scene_feature_row is None:
            raise DataError(f"image {image.id!r}: scene tag present but no scene visual feature")
        scene_features = np.concatenate([
            semantic_onehot(image.scene_tag, vocabulary.scene_categories),
            np.asarray(scene_feature_row, dtype=np.float64)])
        scene_edge_features = np.asarray(
            [object_scene_context_feature(t, image.scene_tag, v, vocabulary)
             for t, v in zip(object_tags, visuals)]).reshape(len(object_tags), n_os)

    inst = MrfInstance(image.id, object_tags, image.scene_tag, node_features, scene_features,
                       edges, edge_features, scene_edge_features)
    if importance is not None:
        inst = inst.with_labels(importance_to_levels(importance, inst.tags, binary))
    for arr in (node_features, edge_features, scene_edge_features):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"image {image.id!r}: non-finite feature values")
    if scene_features is not None and not np.all(np.isfinite(scene_features)):
        raise DataError(f"image {image.id!r}: non-finite scene feature values")
    return inst


# --------------------------------------------------------------------------
# instance archive: TGRI header, JSON metadata, float64 payload


def save_instances(path, instances: Sequence[MrfInstance], vocabulary: Vocabulary) -> None:
    meta = {
        "objects": list(vocabulary.object_categories),
        "scenes": list(vocabulary.scene_categories),
        "instances": [],
    }
    payload = io.BytesIO()
    for inst in instances:
        arrays = [inst.node_features, inst.edge_features, inst.scene_edge_features]
        if inst.scene_features is not None:
            arrays.append(inst.scene_features)
        meta["instances"].append({
            "id": inst.image_id,
            "objects": list(inst.object_tags),
            "scene": inst.scene_tag,
            "edges": [list(e) for e in inst.edges],
            "labels": None if inst.labels is None else [int(v) for v in inst.labels],
            "shapes": [list(a.shape) for a in arrays],
        })
        for a in arrays:
            payload.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    header = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_ARCHIVE_HEADER.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, len(instances), len(header)))
        fh.write(header)
        fh.write(payload.getvalue())


def load_instances(path):
    """-> (Vocabulary, [MrfInstance])"""
    data = Path(path).read_bytes()
    if len(data) < _ARCHIVE_HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, version, n, hlen = _ARCHIVE_HEADER.unpack_from(data, 0)
    if magic != ARCHIVE_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != ARCHIVE_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    start = _ARCHIVE_HEADER.size
    meta = json.loads(data[start:start + hlen].decode("utf-8"))
    vocab = Vocabulary(tuple(meta["objects"]), tuple(meta["scenes"]))
    off = start + hlen
    out = []
    for m in meta["instances"]:
        arrays = []
        for shape in m["shapes"]:
            count = int(np.prod(shape))
            end = off + 8 * count
            if end > len(data):
                raise FormatError("truncated payload", len(data))
            arrays.append(np.frombuffer(data[off:end], dtype="<f8").reshape(shape).astype(np.float64))
            off = end
        scene_features = arrays[3] if m["scene"] is not None else None
        labels = None if m["labels"] is None else np.asarray(m["labels"], dtype=np.int64)
        out.append(MrfInstance(m["id"], tuple(m["objects"]), m["scene"], arrays[0], scene_features,
                               tuple(tuple(e) for e in m["edges"]), arrays[1], arrays[2], labels))
    if len(out) != n:
        raise FormatError(f"header announces {n} instances, metadata has {len(out)}")
    if off != len(data):
        raise FormatError("trailing bytes after payload", off)
    return vocab, out
