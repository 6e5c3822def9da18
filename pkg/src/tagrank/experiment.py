"""End-to-end retrieval experiments over the five textual settings."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._parallel import parallel_map
from .cca import fit_cca
from .corpus import (ImageRecord, Vocabulary, check_feature_rows, load_dataset, load_feature_matrix,
                     load_lexicon, load_taxonomy, split_dataset)
from .errors import DataError, ValidationError
from .features import build_mrf_instance
from .measure import MatchConfig, load_importance, measure_dataset
from .metrics import ndcg_at_k, prediction_error
from .retrieval import (TextFeatureMode, annotate_i2t, baseline_tagging, baseline_visual_only,
                        build_text_features, importance_row, retrieve_i2i, retrieve_t2i, tag_row)
from .saliency import SaliencyMap, read_pgm, spectral_residual_saliency
from .ssvm import BINARY, CONTINUOUS, ModelShape, TrainConfig, predict_importance, train_ssvm
from .synth import generate_synthetic, synth_config_from_dict

log = logging.getLogger(__name__)

TASKS = ("I2I", "T2I", "I2T")
BASELINE = "VISUAL"


@dataclass
class ExperimentConfig:
    dataset: Optional[str] = None
    visual: Optional[str] = None
    scene_features: Optional[str] = None
    lexicon: Optional[str] = None
    taxonomy: Optional[str] = None
    importance: Optional[str] = None
    images: Optional[str] = None
    synthetic: Optional[dict] = None
    seed: int = 42
    query_frac: float = 0.1
    train_frac: float = 0.5
    settings: list = field(default_factory=lambda: [m.value for m in TextFeatureMode])
    tasks: list = field(default_factory=lambda: list(TASKS))
    ks: list = field(default_factory=lambda: [1, 5, 10, 20, 50])
    baselines: bool = True
    cca_dim: Optional[int] = None
    cca_reg: Optional[float] = None
    power: float = 4.0
    neighbors: int = 50
    ssvm: dict = field(default_factory=dict)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.synthetic is None and (self.dataset is None or self.visual is None):
            raise ValidationError("experiment needs either 'synthetic' or both 'dataset' and 'visual'")
        for p in (self.dataset, self.visual, self.scene_features, self.lexicon, self.taxonomy,
                  self.importance, self.images):
            if p is not None and not Path(p).exists():
                raise ValidationError(f"referenced path does not exist: {p}")
        if any(int(k) < 1 for k in self.ks):
            raise ValidationError("k values must be >= 1")
        self.ks = sorted({int(k) for k in self.ks})
        for s in self.settings:
            TextFeatureMode(s)
        for t in self.tasks:
            if t not in TASKS:
                raise ValidationError(f"unknown task {t!r}")

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        base = Path(path).parent
        for key in ("dataset", "visual", "scene_features", "lexicon", "taxonomy", "importance",
                    "images", "output_dir"):
            if doc.get(key) is not None and not Path(doc[key]).is_absolute():
                doc[key] = str(base / doc[key])
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class LoadedData:
    vocab: Vocabulary
    records: list
    visual: np.ndarray
    scene_visual: Optional[np.ndarray]
    truth: dict                         # id -> {tag: value}
    saliency: Callable[[ImageRecord], Optional[SaliencyMap]]


def _no_saliency(_rec):
    return None


def load_data(cfg: ExperimentConfig) -> LoadedData:
    if cfg.synthetic is not None:
        data = generate_synthetic(synth_config_from_dict(cfg.synthetic), seed=cfg.seed)
        truth = measure_dataset(data.records, MatchConfig(lexicon=data.lexicon,
                                                          alpha=data.config.alpha, beta=data.config.beta))
        images = {r.id: img for r, img in zip(data.records, data.images)} if data.images else None
        sal = (lambda rec: spectral_residual_saliency(images[rec.id])) if images else _no_saliency
        return LoadedData(data.vocabulary, data.records, data.visual, data.scene_visual,
                          {k: dict(v.values) for k, v in truth.items()}, sal)

    visual = load_feature_matrix(cfg.visual).values
    vocab, records = load_dataset(cfg.dataset, n_feature_rows=visual.shape[0])
    scene = None
    if cfg.scene_features:
        scene = load_feature_matrix(cfg.scene_features, role="scene_visual").values
        check_feature_rows(records, scene.shape[0])
    if cfg.importance:
        truth = load_importance(cfg.importance)
    else:
        lexicon = load_lexicon(cfg.lexicon, vocab) if cfg.lexicon else None
        taxonomy = load_taxonomy(cfg.taxonomy) if cfg.taxonomy else None
        mc = MatchConfig(**({"lexicon": lexicon} if lexicon else {}), taxonomy=taxonomy)
        truth = {k: dict(v.values) for k, v in measure_dataset(records, mc).items()}
    records = [r for r in records if r.id in truth]
    sal = _no_saliency
    if cfg.images:
        img_dir = Path(cfg.images)

        def sal(rec):
            p = img_dir / f"{rec.id}.pgm"
            return spectral_residual_saliency(read_pgm(p)) if p.exists() else None
    return LoadedData(vocab, records, visual, scene, truth, sal)


# --------------------------------------------------------------------------
# importance prediction for the PBTI / PCTI settings


def build_instances(data: LoadedData, records: Sequence[ImageRecord], binary: bool) -> list:
    out = []
    for rec in records:
        scene_row = None
        if rec.scene_tag is not None and data.scene_visual is not None:
            scene_row = data.scene_visual[rec.feature_row]
        out.append(build_mrf_instance(rec, data.saliency(rec), scene_row, data.vocab,
                                      importance=data.truth.get(rec.id), binary=binary))
    return out


def predict_setting(data: LoadedData, train: Sequence[ImageRecord], targets: Sequence[ImageRecord],
                    mode: str, ssvm_opts: dict):
    binary = mode == BINARY
    scene_dim = 0 if data.scene_visual is None else data.scene_visual.shape[1]
    shape = ModelShape.for_vocabulary(data.vocab, scene_dim, mode)
    tcfg = TrainConfig(mode=mode, **ssvm_opts)
    weights, report = train_ssvm(build_instances(data, train, binary), None, tcfg, shape)
    insts = build_instances(data, targets, binary)
    preds = parallel_map(lambda inst: predict_importance(inst, weights, tcfg.inference), insts)
    return {rec.id: p for rec, p in zip(targets, preds)}, report


# --------------------------------------------------------------------------
# evaluation


def _safe_cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def _curve(ranked_gains, all_gains, ks):
    return {k: ndcg_at_k(ranked_gains, all_gains, k) for k in ks}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Returns {"report": setting -> task -> {k: ndcg}, "info": {...}} and
    writes report.json, curves.csv and run_info.json when output_dir is set."""
    data = load_data(cfg)
    vocab = data.vocab
    queries, db_train, db_rest = split_dataset(data.records, cfg.query_frac, cfg.train_frac, cfg.seed)
    database = db_train + db_rest
    if not queries or not db_train:
        raise DataError("split produced an empty query or training set")

    truth_rows = {r.id: importance_row(data.truth[r.id], vocab) for r in data.records}
    db_ids = [r.id for r in database]
    db_vis = data.visual[[r.feature_row for r in database]]
    train_vis = data.visual[[r.feature_row for r in db_train]]
    db_truth = np.array([truth_rows[i] for i in db_ids])

    info = {"split": {"queries": len(queries), "db_train": len(db_train), "db_rest": len(db_rest)},
            "zero_gain_queries": {}, "prediction": {}, "correlations": {}}

    predicted = {}
    need = {TextFeatureMode(s) for s in cfg.settings}
    all_recs = queries + database
    if TextFeatureMode.PCTI in need:
        predicted["PCTI"], rep = predict_setting(data, db_train, all_recs, CONTINUOUS, cfg.ssvm)
        q_truth = {r.id: data.truth[r.id] for r in queries}
        info["prediction"]["PCTI"] = {
            "query_mad": prediction_error({k: predicted["PCTI"][k] for k in q_truth}, q_truth),
            "iterations": rep.iterations, "converged": rep.converged}
    if TextFeatureMode.PBTI in need:
        predicted["PBTI"], rep = predict_setting(data, db_train, all_recs, BINARY, cfg.ssvm)
        correct = total = 0
        for r in queries:
            for t in r.all_tags:
                correct += int((predicted["PBTI"][r.id][t] > 0) == (data.truth[r.id].get(t, 0.0) > 0))
                total += 1
        info["prediction"]["PBTI"] = {"query_accuracy": correct / max(total, 1),
                                      "iterations": rep.iterations, "converged": rep.converged}

    report = {}
    for setting in cfg.settings:
        mode = TextFeatureMode(setting)
        source = predicted.get(setting, data.truth)
        train_text = build_text_features(db_train, source, mode, vocab)
        model = fit_cca(train_vis, train_text, c=cfg.cca_dim, reg=cfg.cca_reg, power=cfg.power,
                        text_mode=mode.value)
        info["correlations"][setting] = [round(float(x), 12) for x in model.correlations[:10]]
        db_text = build_text_features(database, source, mode, vocab, training=False)
        report[setting] = _evaluate(cfg, model, queries, data, truth_rows, db_ids, db_vis, db_truth,
                                    db_text, info, setting)

    if cfg.baselines:
        report[BASELINE] = _evaluate_baselines(cfg, queries, data, truth_rows, db_ids, db_vis, db_truth,
                                               database)

    result = {"report": report, "info": info}
    if cfg.output_dir:
        write_outputs(result, cfg.output_dir)
    return result


def _evaluate(cfg, model, queries, data, truth_rows, db_ids, db_vis, db_truth, db_text, info, setting):
    vocab = data.vocab
    id_pos = {i: k for k, i in enumerate(db_ids)}
    out = {}
    for task in cfg.tasks:
        def one(q):
            qrow = truth_rows[q.id]
            qvis = data.visual[q.feature_row]
            if task == "I2T":
                ranked = annotate_i2t(model, qvis, db_vis, db_text, vocab.tags, cfg.neighbors)
                gains_all = qrow
                ranked_gains = [qrow[vocab.tag_index(t)] for t, _ in ranked]
            else:
                if task == "I2I":
                    ranked = retrieve_i2i(model, qvis, db_ids, db_vis)
                else:
                    ranked = retrieve_t2i(model, qrow, db_ids, db_vis)
                gains_all = np.array([_safe_cosine(qrow, r) for r in db_truth])
                ranked_gains = [gains_all[id_pos[i]] for i, _ in ranked]
            return _curve(ranked_gains, gains_all, cfg.ks), not np.any(np.asarray(gains_all) > 0)

        results = parallel_map(one, queries)
        zero = [q.id for q, (_, z) in zip(queries, results) if z]
        if zero:
            info["zero_gain_queries"][f"{setting}/{task}"] = zero
        out[task] = {k: float(np.mean([c[k] for c, _ in results])) for k in cfg.ks}
    return out


def _evaluate_baselines(cfg, queries, data, truth_rows, db_ids, db_vis, db_truth, database):
    vocab = data.vocab
    id_pos = {i: k for k, i in enumerate(db_ids)}
    db_tags = np.array([tag_row(r, vocab) for r in database])
    out = {}
    for task in cfg.tasks:
        if task == "T2I":
            continue

        def one(q):
            qrow = truth_rows[q.id]
            qvis = data.visual[q.feature_row]
            if task == "I2I":
                ranked = baseline_visual_only(qvis, db_ids, db_vis)
                gains_all = np.array([_safe_cosine(qrow, r) for r in db_truth])
                ranked_gains = [gains_all[id_pos[i]] for i, _ in ranked]
            else:
                ranked = baseline_tagging(qvis, db_vis, db_tags, vocab.tags, cfg.neighbors)
                gains_all = qrow
                ranked_gains = [qrow[vocab.tag_index(t)] for t, _ in ranked]
            return _curve(ranked_gains, gains_all, cfg.ks)

        curves = parallel_map(one, queries)
        out[task] = {k: float(np.mean([c[k] for c in curves])) for k in cfg.ks}
    return out


def report_json(report: dict) -> str:
    # keys ordered by name, k numerically; no timestamps so reruns are byte-identical
    doc = {s: {t: {str(k): report[s][t][k] for k in sorted(report[s][t])} for t in sorted(report[s])}
           for s in sorted(report)}
    return json.dumps(doc, indent=1) + "\n"


def curves_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "task", "k", "ndcg"])
    for s in sorted(report):
        for t in sorted(report[s]):
            for k in sorted(report[s][t]):
                w.writerow([s, t, k, repr(report[s][t][k])])
    return buf.getvalue()


def write_outputs(result: dict, output_dir) -> dict:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "curves": out / "curves.csv", "info": out / "run_info.json"}
    paths["report"].write_text(report_json(result["report"]), encoding="utf-8")
    paths["curves"].write_text(curves_csv(result["report"]), encoding="utf-8")
    paths["info"].write_text(json.dumps(result["info"], indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
