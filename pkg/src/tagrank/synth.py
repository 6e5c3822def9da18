"""Seeded synthetic datasets with known ground-truth importance.

Each image gets tags, boxes whose size and centrality grow with importance,
templated sentences with parse trees, and visual features built from an
importance-weighted tag embedding. Ground truth is computed here with exact
fractions straight from the sampled mention pattern, so it can be checked
against the measurement code.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import (BoundingBox, ImageRecord, Instance, SentenceRecord, SynonymLexicon, Vocabulary,
                     save_dataset, save_feature_matrix, save_lexicon)
from .measure import save_importance
from .saliency import write_pgm
from .trees import parse_bracketed_tree

OBJECT_POOL = ("person", "dog", "cat", "bicycle", "car", "bus", "horse", "sheep", "cow", "bird",
               "boat", "chair", "sofa", "bottle", "train", "truck", "kite", "umbrella", "laptop", "clock")
SCENE_POOL = ("beach", "street", "kitchen", "bedroom", "park", "field", "harbor", "office", "forest", "desert")
_IRREGULAR = {"person": "people", "sheep": "flock", "bus": "buses"}

ROLE_NONE, ROLE_MODIFIER, ROLE_SUBJECT = 0, 1, 2


@dataclass(frozen=True)
class SynthConfig:
    images: int = 400
    objects: int = 8
    scenes: int = 3
    dim: int = 32
    scene_dim: int = 8
    noise: float = 0.05
    sentences: int = 5
    max_tags: int = 5
    scene_prob: float = 0.7
    synonym_prob: float = 0.3
    width: int = 96
    height: int = 64
    alpha: float = 1.0
    beta: float = 2.0
    render: bool = False

    def __post_init__(self):
        if self.objects < 1 and self.scenes < 1:
            raise ValueError("need at least one category")
        if self.objects < 1:
            raise ValueError("need at least one object category")
        if self.images < 1 or self.sentences < 1 or self.max_tags < 1:
            raise ValueError("images, sentences and max_tags must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


@dataclass
class SyntheticData:
    config: SynthConfig
    vocabulary: Vocabulary
    records: list
    visual: np.ndarray              # (N, dim) retrieval features
    scene_visual: np.ndarray        # (N, scene_dim)
    importance: dict                # id -> {tag: float}
    lexicon: SynonymLexicon
    embedding: np.ndarray           # (|tags|, dim) latent tag embedding
    images: Optional[list] = None   # uint8 grids when rendered

    def write(self, outdir) -> dict:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "dataset": out / "dataset.json",
            "visual": out / "visual.bin",
            "scene_features": out / "scene.bin",
            "importance": out / "importance.json",
            "lexicon": out / "lexicon.tsv",
        }
        save_dataset(paths["dataset"], self.vocabulary, self.records)
        save_feature_matrix(paths["visual"], self.visual)
        save_feature_matrix(paths["scene_features"], self.scene_visual)
        save_importance(paths["importance"], self.importance)
        save_lexicon(paths["lexicon"], self.lexicon)
        if self.images is not None:
            img_dir = out / "images"
            img_dir.mkdir(exist_ok=True)
            for rec, img in zip(self.records, self.images):
                write_pgm(img_dir / f"{rec.id}.pgm", img)
            paths["images"] = img_dir
        return {k: str(v) for k, v in paths.items()}


def _names(pool, n, prefix):
    return tuple(pool[i] if i < len(pool) else f"{prefix}{i}" for i in range(n))


def _plural(word):
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if word.endswith(("s", "sh", "ch", "x")):
        return word + "es"
    return word + "s"


def _np(word, plural):
    pos = "NNS" if plural else "NN"
    det = "(DT some)" if plural else "(DT a)"
    return f"(NP {det} ({pos} {word}))"


def _coordinate(nps):
    if len(nps) == 1:
        return nps[0]
    parts = []
    for k, p in enumerate(nps):
        if k == len(nps) - 1:
            parts.append("(CC and)")
        elif k > 0:
            parts.append("(, ,)")
        parts.append(p)
    return "(NP " + " ".join(parts) + ")"


def _sentence_tree(object_words, scene_word, role):
    objs = _coordinate(object_words) if object_words else None
    scene_np = f"(NP (DT the) (NN {scene_word}))" if scene_word else None
    if role == ROLE_SUBJECT:
        if objs:
            return f"(S (NP (DT a) (JJ busy) (NN {scene_word})) (VP (VBZ has) {objs}))"
        return f"(NP (DT a) (JJ quiet) (NN {scene_word}))"
    if role == ROLE_MODIFIER:
        if objs:
            return f"(S {objs} (VP (VBP sit) (PP (IN in) {scene_np})))"
        return f"(NP (NP (DT a) (NN view)) (PP (IN of) {scene_np}))"
    if objs:
        return f"(S {objs} (VP (VBP appear) (ADVP (RB here))))"
    return "(NP (DT a) (JJ blurry) (NN picture))"


def _box(rng, imp, width, height):
    side = np.clip((0.2 + 0.6 * np.sqrt(imp)) * rng.uniform(0.8, 1.2), 0.1, 0.9)
    bw, bh = max(2, int(round(side * width))), max(2, int(round(side * height)))
    spread = (1.0 - imp) * 0.35
    cx = width * (0.5 + rng.uniform(-spread, spread))
    cy = height * (0.5 + rng.uniform(-spread, spread))
    x0 = int(np.clip(round(cx - bw / 2), 0, width - bw))
    y0 = int(np.clip(round(cy - bh / 2), 0, height - bh))
    return BoundingBox(x0, y0, x0 + bw, y0 + bh)


def generate_synthetic(config: SynthConfig = SynthConfig(), seed: int = 0) -> SyntheticData:
    rng = np.random.default_rng(seed)
    objects = _names(OBJECT_POOL, config.objects, "object")
    scenes = _names(SCENE_POOL, config.scenes, "scene")
    vocab = Vocabulary(objects, scenes)
    lexicon = SynonymLexicon({_plural(w): frozenset({w}) for w in objects + scenes})
    alpha, beta = Fraction(config.alpha), Fraction(config.beta)
    n_tags = len(vocab.tags)
    embedding = rng.normal(size=(n_tags, config.dim))
    scene_embedding = rng.normal(size=(max(1, config.scenes), config.scene_dim))

    records, importance, images = [], {}, []
    visual = np.zeros((config.images, config.dim))
    scene_visual = np.zeros((config.images, config.scene_dim))
    for n in range(config.images):
        has_scene = config.scenes > 0 and rng.random() < config.scene_prob
        total = int(rng.integers(1, config.max_tags + 1))
        k_obj = min(config.objects, total - 1 if has_scene else total)
        if k_obj == 0 and not has_scene:
            k_obj = 1
        obj_idx = np.sort(rng.choice(config.objects, size=k_obj, replace=False))
        tags = [objects[i] for i in obj_idx]
        scene = scenes[int(rng.integers(config.scenes))] if has_scene else None

        # per-image salience drives how often each tag is mentioned
        sal = rng.dirichlet(np.ones(k_obj)) if k_obj else np.zeros(0)
        p_mention = np.clip(sal * max(k_obj, 1) * 0.7, 0.05, 0.95)
        scene_pref = rng.dirichlet(np.ones(3)) if has_scene else None

        mentions, roles = [], []
        for _ in range(config.sentences):
            mentions.append([t for t, p in zip(tags, p_mention) if rng.random() < p])
            roles.append(int(rng.choice(3, p=scene_pref)) if has_scene else ROLE_NONE)
        if not any(mentions) and not any(roles):
            mentions[0] = [tags[int(rng.integers(k_obj))]] if k_obj else []
            if not k_obj:
                roles[0] = ROLE_SUBJECT

        acc = {t: Fraction(0) for t in tags}
        if scene is not None:
            acc[scene] = Fraction(0)
        sentences = []
        for m, role in zip(mentions, roles):
            c = {ROLE_NONE: Fraction(0), ROLE_MODIFIER: alpha, ROLE_SUBJECT: beta}[role]
            for t in m:
                acc[t] += 1 / (len(m) * (1 + c))
            if scene is not None:
                acc[scene] += c / (1 + c)
            order = list(m)
            rng.shuffle(order)
            words = []
            for t in order:
                plural = rng.random() < config.synonym_prob
                words.append(_np(_plural(t) if plural else t, plural))
            scene_word = None
            if role != ROLE_NONE:
                scene_word = _plural(scene) if rng.random() < config.synonym_prob else scene
            tree = parse_bracketed_tree(_sentence_tree(words, scene_word, role))
            sentences.append(SentenceRecord.from_tree(tree))
        imp = {t: float(v / config.sentences) for t, v in acc.items()}
        iid = f"img{n:05d}"
        importance[iid] = imp

        instances = []
        for t in tags:
            for _ in range(2 if rng.random() < 0.2 else 1):
                instances.append(Instance(t, _box(rng, imp[t], config.width, config.height)))

        row = np.zeros(n_tags)
        for t, v in imp.items():
            row[vocab.tag_index(t)] = v
        visual[n] = row @ embedding + config.noise * rng.normal(size=config.dim)
        if scene is not None:
            s = vocab.scene_index(scene)
            scene_visual[n] = scene_embedding[s] * (0.5 + imp[scene])
        scene_visual[n] += config.noise * rng.normal(size=config.scene_dim)

        if config.render:
            img = 40.0 + 10.0 * rng.random((config.height, config.width))
            for inst in sorted(instances, key=lambda i: imp[i.category]):
                b = inst.bbox
                img[b.y_min:b.y_max, b.x_min:b.x_max] = 120.0 + 120.0 * imp[inst.category]
            images.append(np.clip(img, 0, 255).astype(np.uint8))

        records.append(ImageRecord(iid, config.width, config.height, tuple(tags), scene,
                                   tuple(instances), tuple(sentences), n))

    return SyntheticData(config, vocab, records, visual, scene_visual, importance, lexicon, embedding,
                         images if config.render else None)


def synth_config_from_dict(d: dict) -> SynthConfig:
    known = set(asdict(SynthConfig()))
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
    return SynthConfig(**d)
