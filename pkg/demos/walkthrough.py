"""Follow one scene through the full head, before and after a short training run.

Usage: python3 demos/walkthrough.py [--epochs N] [--scenes N]
"""

import argparse

import numpy as np

from sctc import numerics as nx
from sctc.fixtures import generate_dataset
from sctc.model import HoiModel, ModelConfig
from sctc.train import TrainConfig, evaluate_model, train


def describe(model, scene, vocab, top=5):
    with nx.no_grad():
        out = model.forward(scene, compute_loss=False)
    print(f"  {len(scene.detections)} detections, {len(scene.humans)} humans, "
          f"{len(out.pairs)} candidate pairs, {len(out.selected.indices)} kept after top-K")
    if out.relations is not None and out.relations.adj is not None:
        adj = out.relations.adj.data
        print(f"  adjacency {adj.shape}, row sums in [{adj.sum(1).min():.6f}, {adj.sum(1).max():.6f}]")
    gt = {(a, g.object_category) for g in scene.gt_triplets for a in g.actions}
    print(f"  ground truth (action, object): {sorted(gt)}")
    preds = sorted(model.predict(scene), key=lambda p: -p.score)[:top]
    for p in preds:
        mark = "*" if (p.action, p.object_category) in gt else " "
        print(f"  {mark} action {p.action:2d} object {p.object_category:2d} score {p.score:.4f} "
              f"(interactiveness {p.interactiveness:.3f}, action prob {p.action_prob:.3f})")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--scenes", type=int, default=60)
    args = ap.parse_args()

    train_s, test_s, vocab = generate_dataset(num_train=args.scenes, num_test=args.scenes // 4)
    rare = int(np.sum(vocab.rare))
    print(f"dataset: {len(train_s)} train / {len(test_s)} test scenes, {len(vocab.hois)} HOI "
          f"categories ({rare} rare)")
    model = HoiModel(ModelConfig.for_data(vocab, train_s[0]), vocab)
    print(f"model: {sum(p.data.size for p in model.parameters())} parameters")

    scene = test_s[0]
    print(f"\nscene {scene.id} before training:")
    describe(model, scene, vocab)
    print(f"untrained mAP {evaluate_model(model, test_s)['full']:.3f}")

    def log(row):
        print(f"epoch {row['epoch']}: L_kd {row['L_kd']:.4f}  L_pair {row['L_pair']:.4f}  "
              f"L_a {row['L_a']:.4f}  total {row['total']:.4f}")

    print()
    train(model, train_s, TrainConfig(epochs=args.epochs), on_epoch=log)

    print(f"\nscene {scene.id} after training (* marks a correct category):")
    describe(model, scene, vocab)
    m = evaluate_model(model, test_s)
    rare_map = "n/a" if m["rare"] is None else f"{m['rare']:.3f}"
    print(f"trained mAP full {m['full']:.3f}, rare {rare_map}, non-rare {m['non_rare']:.3f}")


if __name__ == "__main__":
    main()
