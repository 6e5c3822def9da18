"""Command-line entry point: ``tagrank <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TagrankError

log = logging.getLogger("tagrank")

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


def _add_data_args(p, visual=None):
    """``visual``: None to omit, else whether --visual is required."""
    p.add_argument("--dataset", required=True, help="dataset JSON")
    if visual is not None:
        p.add_argument("--visual", required=visual, help="retrieval feature matrix (TGRK binary)")


def _match_config(args, vocab):
    from .corpus import load_lexicon, load_taxonomy
    from .measure import MatchConfig
    kw = {}
    if args.lexicon:
        kw["lexicon"] = load_lexicon(args.lexicon, vocab)
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    return MatchConfig(taxonomy=taxonomy, wup_threshold=args.threshold, alpha=args.alpha, beta=args.beta,
                       **kw)


def _load_visual(args):
    from .corpus import load_feature_matrix
    return load_feature_matrix(args.visual).values


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    from .corpus import check_feature_rows, load_dataset, load_feature_matrix, load_lexicon, load_taxonomy
    vocab, records = load_dataset(args.dataset)
    summary = {"images": len(records), "objects": len(vocab.object_categories),
               "scenes": len(vocab.scene_categories)}
    for key, role in (("visual", "visual_retrieval"), ("scene_features", "scene_visual")):
        path = getattr(args, key)
        if path:
            m = load_feature_matrix(path, role=role)
            check_feature_rows(records, m.rows)
            summary[key] = [m.rows, m.dim]
    if args.lexicon:
        load_lexicon(args.lexicon, vocab)
    if args.taxonomy:
        load_taxonomy(args.taxonomy)
    print(json.dumps(summary, sort_keys=True))


def cmd_measure(args):
    from .corpus import load_dataset
    from .measure import measure_dataset, save_importance
    vocab, records = load_dataset(args.dataset)
    result = measure_dataset(records, _match_config(args, vocab), quantize=args.quantize)
    save_importance(args.output, result)
    log.info("measured %d image(s) -> %s", len(result), args.output)


def _saliency_lookup(images_dir):
    from .saliency import read_pgm, spectral_residual_saliency
    if not images_dir:
        return lambda rec: None
    root = Path(images_dir)

    def lookup(rec):
        p = root / f"{rec.id}.pgm"
        return spectral_residual_saliency(read_pgm(p)) if p.exists() else None
    return lookup


def cmd_features(args):
    from .corpus import load_dataset, load_feature_matrix
    from .features import build_mrf_instance, save_instances
    from .measure import load_importance
    vocab, records = load_dataset(args.dataset)
    scene = None
    if args.scene_features:
        scene = load_feature_matrix(args.scene_features, role="scene_visual").values
    importance = load_importance(args.importance) if args.importance else {}
    sal = _saliency_lookup(args.images)
    out = []
    for rec in records:
        row = scene[rec.feature_row] if scene is not None and rec.scene_tag is not None else None
        out.append(build_mrf_instance(rec, sal(rec), row, vocab, importance=importance.get(rec.id),
                                      binary=args.binary))
    save_instances(args.output, out, vocab)
    log.info("wrote %d instance(s) -> %s", len(out), args.output)


def cmd_saliency(args):
    from .saliency import read_pgm, spectral_residual_saliency, write_pgm
    smap = spectral_residual_saliency(read_pgm(args.input))
    write_pgm(args.output, np.clip(np.floor(smap.values * 255 + 0.5), 0, 255).astype(np.uint8))


def cmd_train_ssvm(args):
    from .features import load_instances
    from .ssvm import ModelShape, TrainConfig, save_model, train_ssvm
    vocab, insts = load_instances(args.instances)
    cfg = TrainConfig(C=args.C, epsilon=args.epsilon, max_iterations=args.max_iterations, mode=args.mode,
                      inference_cap=args.inference_cap, seed=args.seed)
    scene_dim = 0
    for inst in insts:
        if inst.has_scene:
            scene_dim = inst.scene_features.shape[0] - len(vocab.scene_categories)
            break
    shape = ModelShape.for_vocabulary(vocab, scene_dim, args.mode)
    weights, report = train_ssvm(insts, None, cfg, shape)
    save_model(args.output, weights, vocab, cfg)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=1) + "\n", encoding="utf-8")
    log.info("trained in %d iteration(s), converged=%s", report.iterations, report.converged)


def cmd_predict(args):
    from .features import load_instances
    from .measure import save_importance
    from .ssvm import InferenceConfig, load_model, predict_importance
    vocab, insts = load_instances(args.instances)
    weights, cfg = load_model(args.model, vocab)
    icfg = InferenceConfig(cap=cfg.inference_cap, seed=args.seed)
    save_importance(args.output, {inst.image_id: predict_importance(inst, weights, icfg) for inst in insts})


def cmd_train_cca(args):
    from .cca import fit_cca, save_cca
    from .corpus import load_dataset
    from .measure import load_importance
    from .retrieval import TextFeatureMode, build_text_features
    visual = _load_visual(args)
    vocab, records = load_dataset(args.dataset, n_feature_rows=visual.shape[0])
    mode = TextFeatureMode(args.setting)
    importance = load_importance(args.importance) if args.importance else None
    if importance is not None:
        records = [r for r in records if r.id in importance]
    text = build_text_features(records, importance, mode, vocab)
    model = fit_cca(visual[[r.feature_row for r in records]], text, c=args.dim, reg=args.reg,
                    power=args.power, text_mode=mode.value)
    save_cca(args.output, model)
    log.info("top correlations: %s", np.round(model.correlations[:5], 4).tolist())


def cmd_retrieve(args):
    from .cca import load_cca
    from .corpus import load_dataset
    from .retrieval import annotate_i2t, build_text_features, retrieve_i2i, retrieve_t2i, TextFeatureMode
    from .measure import load_importance
    model = load_cca(args.model)
    visual = _load_visual(args)
    vocab, records = load_dataset(args.dataset, n_feature_rows=visual.shape[0])
    by_id = {r.id: r for r in records}
    db_ids = [r.id for r in records]
    db_vis = visual[[r.feature_row for r in records]]
    if args.task == "T2I":
        weights = np.zeros(len(vocab.tags))
        for item in args.tags:
            tag, _, val = item.partition("=")
            weights[vocab.tag_index(tag)] = float(val) if val else 1.0
        ranked = retrieve_t2i(model, weights, db_ids, db_vis)
    else:
        if args.query not in by_id:
            raise ValueError(f"unknown query id {args.query!r}")
        qvis = visual[by_id[args.query].feature_row]
        if args.task == "I2I":
            ranked = retrieve_i2i(model, qvis, db_ids, db_vis)
        else:
            mode = TextFeatureMode(model.text_mode or "TAGS")
            importance = load_importance(args.importance) if args.importance else None
            db_text = build_text_features(records, importance, mode, vocab, training=False)
            ranked = annotate_i2t(model, qvis, db_vis, db_text, vocab.tags, args.neighbors)
    for item, score in ranked[:args.top]:
        print(f"{item}\t{score:.6f}")


def cmd_eval(args):
    from .ablation import binary_accuracy
    from .measure import load_importance
    from .metrics import prediction_error
    pred = load_importance(args.predicted)
    truth = load_importance(args.truth)
    out = {"mad": prediction_error(pred, truth)}
    p = [pred[i][t] > 0 for i in sorted(truth) for t in sorted(truth[i])]
    g = [truth[i][t] > 0 for i in sorted(truth) for t in sorted(truth[i])]
    if p:
        out["binary_accuracy"] = binary_accuracy(p, g)
    print(json.dumps(out, sort_keys=True))


def cmd_synth(args):
    from .synth import SynthConfig, generate_synthetic
    cfg = SynthConfig(images=args.images, objects=args.objects, scenes=args.scenes, dim=args.dim,
                      noise=args.noise, sentences=args.sentences, render=args.render)
    paths = generate_synthetic(cfg, seed=args.seed).write(args.output)
    print(json.dumps(paths, sort_keys=True))


def cmd_experiment(args):
    from .experiment import ExperimentConfig, run_experiment
    cfg = ExperimentConfig.from_json(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed_given:
        cfg.seed = args.seed
    if not cfg.output_dir:
        cfg.output_dir = str(Path(args.config).parent / "results")
    run_experiment(cfg)
    log.info("report written to %s", cfg.output_dir)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tagrank", description="Tag importance measurement, prediction and retrieval.")
    parser.add_argument("--version", action="version", version=f"tagrank {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="random seed (default 42)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("validate", help="check a dataset and its companion files")
    _add_data_args(p, visual=False)
    p.add_argument("--scene-features", dest="scene_features")
    p.add_argument("--lexicon")
    p.add_argument("--taxonomy")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("measure", help="measure tag importance from sentences")
    _add_data_args(p)
    p.add_argument("--lexicon")
    p.add_argument("--taxonomy")
    p.add_argument("--threshold", type=float, default=0.9, help="Wu-Palmer acceptance threshold")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--quantize", action="store_true", help="round to tenths")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("features", help="build MRF instances")
    _add_data_args(p)
    p.add_argument("--scene-features", dest="scene_features")
    p.add_argument("--images", help="directory of <id>.pgm images for saliency")
    p.add_argument("--importance", help="importance JSON used as labels")
    p.add_argument("--binary", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("saliency", help="spectral-residual saliency of a PGM image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("train-ssvm", help="train the structured importance model")
    p.add_argument("--instances", required=True)
    p.add_argument("--mode", choices=("continuous", "binary"), default="continuous")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=500)
    p.add_argument("--inference-cap", dest="inference_cap", type=int, default=6)
    p.add_argument("--report", help="write the training report JSON here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train_ssvm)

    p = sub.add_parser("predict", help="predict importance with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("train-cca", help="fit the visual/textual CCA embedding")
    _add_data_args(p, visual=True)
    p.add_argument("--importance")
    p.add_argument("--setting", default="TCTI", choices=("TAGS", "PBTI", "PCTI", "TBTI", "TCTI"))
    p.add_argument("--dim", type=int)
    p.add_argument("--reg", type=float)
    p.add_argument("--power", type=float, default=4.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train_cca)

    p = sub.add_parser("retrieve", help="run one I2I, T2I or I2T query")
    _add_data_args(p, visual=True)
    p.add_argument("--model", required=True)
    p.add_argument("--task", choices=("I2I", "T2I", "I2T"), default="I2I")
    p.add_argument("--query", help="query image id (I2I, I2T)")
    p.add_argument("--tags", nargs="*", default=[], help="tag or tag=weight items (T2I)")
    p.add_argument("--importance", help="importance JSON for I2T textual rows")
    p.add_argument("--neighbors", type=int, default=50)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="score predicted importance against ground truth")
    p.add_argument("--predicted", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--images", type=int, default=400)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--scenes", type=int, default=3)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--sentences", type=int, default=5)
    p.add_argument("--render", action="store_true", help="also write PGM images")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("experiment", help="run a full retrieval experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 42
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (TagrankError, ValueError, KeyError, IndexError, OSError) as exc:
        print(f"tagrank {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
