"""Compare importance predictors on a synthetic dataset.

Reports test MAD for the equal-importance baseline, ridge regression on node
features (with and without the semantic one-hot), and the continuous SSVM,
plus binary accuracy for the binary SSVM against the majority decision.

    python3 scripts/prediction_ablation.py --images 300
"""

import argparse
import time

import numpy as np

from tagrank.ablation import binary_accuracy, equal_importance, train_ridge_importance
from tagrank.corpus import split_dataset
from tagrank.experiment import ExperimentConfig, build_instances, load_data, predict_setting
from tagrank.metrics import prediction_error
from tagrank.ssvm import BINARY, CONTINUOUS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--images", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--render", action="store_true", help="render images so saliency features are populated")
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--max-iterations", type=int, default=100)
    args = p.parse_args()

    cfg = ExperimentConfig(synthetic={"images": args.images, "noise": args.noise, "render": args.render},
                           seed=args.seed)
    data = load_data(cfg)
    _, train, test = split_dataset(data.records, 0.1, 0.5, args.seed)
    truth = {r.id: data.truth[r.id] for r in test}
    n_obj, n_scene = len(data.vocab.object_categories), len(data.vocab.scene_categories)

    rows = [("equal", prediction_error({r.id: equal_importance(list(truth[r.id])) for r in test}, truth))]
    train_insts, test_insts = build_instances(data, train, False), build_instances(data, test, False)
    for semantic in (False, True):
        model = train_ridge_importance(train_insts, [data.truth[r.id] for r in train], args.ridge_lambda,
                                       n_obj, n_scene, semantic)
        pred = {inst.image_id: model.predict(inst) for inst in test_insts}
        rows.append((f"ridge{' +semantic' if semantic else ''}", prediction_error(pred, truth)))
    t0 = time.perf_counter()
    pred, rep = predict_setting(data, train, test, CONTINUOUS, {"max_iterations": args.max_iterations})
    rows.append((f"ssvm ({rep.iterations} it, {time.perf_counter() - t0:.1f}s)", prediction_error(pred, truth)))

    print("test MAD")
    for name, mad in rows:
        print(f"  {name:28s} {mad:.4f}")

    bpred, _ = predict_setting(data, train, test, BINARY, {"max_iterations": args.max_iterations})
    p_dec, t_dec = [], []
    for r in test:
        for t, v in truth[r.id].items():
            p_dec.append(bpred[r.id][t] > 0)
            t_dec.append(v > 0)
    majority = max(np.mean(t_dec), 1 - np.mean(t_dec))
    print(f"binary accuracy: ssvm {binary_accuracy(p_dec, t_dec):.4f}, majority {majority:.4f}")


if __name__ == "__main__":
    main()
