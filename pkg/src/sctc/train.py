"""Training loop, evaluation driver and ablation arms."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from sctc import interaction
from sctc import numerics as nx
from sctc.errors import ConfigurationError, NumericalError
from sctc.evaluation import evaluate
from sctc.model import HoiModel, ModelConfig

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "L_kd", "L_pair", "L_a", "total")
_LOSS_KEYS = {"kd": "L_kd", "pair": "L_pair", "action": "L_a", "total": "total"}


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-4
    negative_ratio: float = interaction.NEGATIVE_RATIO
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")


def _check_finite(losses, scene_id):
    for name, t in losses.items():
        if not np.isfinite(t.data).all():
            raise NumericalError(f"non-finite {name} loss on scene {scene_id}", component=name)


def train(model, scenes, cfg=None, on_epoch=None):
    """Fit ``model`` in place; returns one loss-log row per epoch.

    Negatives are re-mined every epoch from the interactiveness scores the
    model produced for that scene in the previous epoch (random in epoch 0).
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    opt = nx.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay,
                   horizon=cfg.epochs)
    rng = np.random.default_rng([cfg.seed, 7])
    pair_cache = [interaction.enumerate_pairs(s, model.cfg.num_actions) for s in scenes]
    score_cache = [None] * len(scenes)
    rows = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(scenes))
        sums = dict.fromkeys(_LOSS_KEYS, 0.0)
        counted = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            opt.zero_grad()
            total = None
            for i in batch:
                scene, pairs = scenes[i], pair_cache[i]
                if len(pairs) == 0:
                    continue
                cand = interaction.sample_training_pairs(
                    pairs.gt_label, cfg.negative_ratio, score_cache[i], rng)
                out = model.forward(scene, candidates=cand, pairs=pairs)
                if out.empty:
                    continue
                _check_finite(out.losses, scene.id)
                score_cache[i] = out.state.scores.data.copy()
                for k in sums:
                    sums[k] += float(out.losses[k].data)
                counted += 1
                term = out.losses["total"] * (1.0 / len(batch))
                total = term if total is None else total + term
            if total is None:
                continue
            total.backward()
            for p in model.parameters():
                if p.grad is None:  # e.g. an unused constant in a tiny batch
                    p.grad = np.zeros_like(p.data)
                elif not np.isfinite(p.grad).all():
                    raise NumericalError(f"non-finite gradient for {p.name}",
                                         component=p.name.split(".")[0])
            opt.step(epoch)
        row = {"epoch": epoch + 1}
        row.update({_LOSS_KEYS[k]: v / max(counted, 1) for k, v in sums.items()})
        rows.append(row)
        log.info("epoch %d  L_kd %.4f  L_pair %.4f  L_a %.4f  total %.4f", epoch + 1,
                 row["L_kd"], row["L_pair"], row["L_a"], row["total"])
        if on_epoch is not None:
            on_epoch(row)
    return rows


def predict_all(model, scenes, threads=1):
    """Predictions keyed by scene id; scenes are independent so threads may share them."""
    if threads <= 1:
        return {s.id: model.predict(s) for s in scenes}
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(threads) as ex:
        preds = list(ex.map(model.predict, scenes))
    return {s.id: p for s, p in zip(scenes, preds)}


def evaluate_model(model, scenes, threads=1):
    return evaluate(predict_all(model, scenes, threads), scenes, model.vocab)


# Ablation arms: name -> ModelConfig overrides, in table-row order.
MODULE_ARMS = {
    "mlp-baseline": dict(mlp_baseline=True, kd=False, sta=False, ctd=False),
    "+KD": dict(mlp_baseline=True, kd=True, sta=False, ctd=False),
    "+KD+STA": dict(mlp_baseline=False, kd=True, sta=True, ctd=False),
    "+KD+CTD": dict(mlp_baseline=False, kd=True, sta=False, ctd=True),
    "+KD+STA+CTD": dict(mlp_baseline=False, kd=True, sta=True, ctd=True),
}
EDGE_ARMS = {f"edge={m}": dict(edge=m) for m in ("LE", "SF", "IF", "IF+SF")}
RELATION_ARMS = {
    "LE": dict(relations=("LE",)),
    "IR": dict(relations=("IR",)),
    "SR": dict(relations=("SR",)),
    "LR": dict(relations=("LR",)),
    "IR+SR+LR": dict(relations=("IR", "SR", "LR")),
}
ARM_GRIDS = {"modules": MODULE_ARMS, "edges": EDGE_ARMS, "relations": RELATION_ARMS}


def run_arm(train_scenes, test_scenes, vocab, overrides, seed, train_cfg=None, base=None,
            threads=1):
    """Train one configuration from scratch and evaluate it; returns (model, rows, metrics)."""
    kw = dict(base or {})
    kw.update(overrides)
    kw["seed"] = seed
    mcfg = ModelConfig.for_data(vocab, train_scenes[0], **kw)
    tcfg = TrainConfig(**asdict(train_cfg)) if train_cfg else TrainConfig()
    tcfg.seed = seed
    model = HoiModel(mcfg, vocab)
    rows = train(model, train_scenes, tcfg)
    return model, rows, evaluate_model(model, test_scenes, threads)
