"""The full interaction head: parameters, forward pass, losses and checkpoints."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from sctc import ctd, decoder, distill, interaction, sta
from sctc import numerics as nx
from sctc.errors import ConfigurationError, LoadError
from sctc.fixtures import container

CHECKPOINT_FORMAT = "hoi-checkpoint/1"
# Both sigmoid heads start near probability 0.01 with tiny weights, the usual
# focal-loss initialization; an untrained model then ranks by detector score.
PRIOR_BIAS = -float(np.log(99.0))
HEAD_STD = 0.01


@dataclass
class ModelConfig:
    num_objects: int
    num_actions: int
    d_app: int
    d_map: int
    d_text: int
    d_sem: int = 16
    d_model: int = 64
    heads: int = 4
    d_ff: int = 128
    layers: int = 6
    top_k: int = 32
    kd: bool = True
    sta: bool = True
    ctd: bool = True
    mlp_baseline: bool = False
    edge: str = "IF+SF"
    relations: tuple = ("IR", "SR", "LR")
    adj_norm: str = "softmax"
    kd_negatives: str = "all"
    pair_loss_scope: str = "selected"
    score_rule: str = "full"
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    focal_gamma: float = nx.FOCAL_GAMMA
    focal_alpha: float = nx.FOCAL_ALPHA
    seed: int = 0

    def __post_init__(self):
        self.relations = tuple(self.relations)
        self.validate()

    def validate(self):
        if self.mlp_baseline and (self.sta or self.ctd):
            raise ConfigurationError("the MLP baseline excludes STA and CTD")
        if self.edge not in sta.EDGE_MODES:
            raise ConfigurationError(f"edge must be one of {sta.EDGE_MODES}")
        rel = set(self.relations)
        if not rel or not (rel <= set(ctd.RELATIONS) or rel == {"LE"}):
            raise ConfigurationError("relations must be a non-empty subset of IR/SR/LR, or LE alone")
        if self.adj_norm not in ctd.NORMS:
            raise ConfigurationError(f"adj_norm must be one of {ctd.NORMS}")
        if self.kd_negatives not in ("all", "hoi"):
            raise ConfigurationError("kd_negatives must be 'all' or 'hoi'")
        if self.pair_loss_scope not in ("selected", "all"):
            raise ConfigurationError("pair_loss_scope must be 'selected' or 'all'")
        if self.score_rule not in decoder.SCORE_RULES:
            raise ConfigurationError(f"score_rule must be one of {decoder.SCORE_RULES}")
        if self.top_k < 1 or self.layers < 0:
            raise ConfigurationError("top_k must be >= 1 and layers >= 0")
        if self.d_model % self.heads or self.d_model % 4:
            raise ConfigurationError("d_model must be divisible by the head count and by 4")

    @property
    def d_inst(self):
        return self.d_app + self.d_sem

    @property
    def d_node(self):
        return self.d_text

    def to_dict(self):
        d = asdict(self)
        d["relations"] = list(self.relations)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def for_data(cls, vocab, scene, **kw):
        """Read the data-dependent widths from a vocabulary and a sample scene."""
        return cls(num_objects=vocab.num_objects, num_actions=vocab.num_actions,
                   d_app=scene.detections[0].appearance.shape[0],
                   d_map=scene.feature_map.shape[-1], d_text=vocab.dim, **kw)


def init_params(cfg):
    """Fresh parameters for the modules enabled in ``cfg``, keyed by name.

    Each tensor draws from a generator keyed by (seed, name), so enabling or
    disabling one module leaves every other initial value unchanged.
    """
    s = cfg.seed
    p = {}

    def lin(name, fan_in, fan_out, bias=0.0, std=None):
        if std is None:
            p[f"{name}.W"] = nx.glorot(s, f"{name}.W", fan_in, fan_out)
        else:
            w = std * nx.param_rng(s, f"{name}.W").normal(size=(fan_in, fan_out))
            p[f"{name}.W"] = nx.Parameter(w, f"{name}.W")
        p[f"{name}.b"] = nx.Parameter(np.full(fan_out, float(bias)), f"{name}.b")

    def norm(name, width):
        p[f"{name}.g"] = nx.Parameter(np.ones(width), f"{name}.g")
        p[f"{name}.b"] = nx.Parameter(np.zeros(width), f"{name}.b")

    def normal(name, shape, scale):
        p[name] = nx.Parameter(scale * nx.param_rng(s, name).normal(size=shape), name)

    dn, dm = cfg.d_node, cfg.d_model
    normal("instance.category_embed", (cfg.num_objects, cfg.d_sem), 1.0)
    lin("interaction.mlp.0", 2 * cfg.d_inst + interaction.SPATIAL_DIM, cfg.d_text)
    lin("interaction.mlp.1", cfg.d_text, cfg.d_text)
    lin("sta.node_h", cfg.d_inst, dn)
    lin("sta.node_o", cfg.d_inst, dn)
    edge_in = {"IF+SF": cfg.d_text + interaction.SPATIAL_DIM, "IF": cfg.d_text,
               "SF": interaction.SPATIAL_DIM}
    if cfg.edge == "LE":
        normal("sta.edge_const", (dn,), 1.0)
    else:
        lin("sta.edge", edge_in[cfg.edge], dn)
    if cfg.sta:
        for name in ("sta.f_i", "sta.f_h", "sta.f_o"):
            lin(name, dn, dn)
    else:
        lin("fusion.0", 3 * dn, 2 * dn)
        lin("fusion.1", 2 * dn, 2 * dn)
    lin("sta.score.0", 2 * dn, dn)
    lin("sta.score.1", dn, 1, bias=PRIOR_BIAS, std=HEAD_STD)
    if cfg.ctd:
        if cfg.relations == ("LE",):
            normal("ctd.adj_const", (cfg.top_k, cfg.top_k), 0.1)
        else:
            width = 0
            if "IR" in cfg.relations:
                lin("ctd.embed_ins", 2, ctd.D_INS)
                width += ctd.D_INS
            if "SR" in cfg.relations:
                lin("ctd.embed_sem", cfg.num_objects, ctd.D_SEM)
                width += ctd.D_SEM
            if "LR" in cfg.relations:
                lin("ctd.embed_lay", interaction.SPATIAL_DIM, ctd.D_LAY)
                width += ctd.D_LAY
            lin("ctd.fuse.0", width, ctd.FUSE_HIDDEN)
            lin("ctd.fuse.1", ctd.FUSE_HIDDEN, 1)
    lin("decoder.query.0", 2 * dn, dm)
    lin("decoder.query.1", dm, dm)
    if cfg.layers:
        lin("decoder.memory", cfg.d_map, dm)
    for i in range(cfg.layers):
        pre = f"decoder.{i}"
        for ln in ("ln1", "ln2", "ln3"):
            norm(f"{pre}.{ln}", dm)
        for att in ("self", "cross"):
            for proj in ("q", "k", "v", "o"):
                lin(f"{pre}.{att}.{proj}", dm, dm)
        lin(f"{pre}.ff.0", dm, cfg.d_ff)
        lin(f"{pre}.ff.1", cfg.d_ff, dm)
    lin("head", dm, cfg.num_actions, bias=PRIOR_BIAS, std=HEAD_STD)
    return p


@dataclass
class Output:
    pairs: interaction.Pairs
    candidates: np.ndarray
    state: sta.TripletGraphState | None = None
    selected: sta.SelectedProposals | None = None
    relations: ctd.RelationTensors | None = None
    nu_hoi_hat: nx.Tensor | None = None
    decoded: nx.Tensor | None = None
    y_hat: nx.Tensor | None = None
    losses: dict = field(default_factory=dict)
    attention: list | None = None

    @property
    def empty(self):
        return self.selected is None


class HoiModel:
    """Holds parameters and runs the head on one scene at a time."""

    def __init__(self, cfg, vocab, params=None):
        self.cfg = cfg
        self.vocab = vocab
        self.params = init_params(cfg) if params is None else params

    def parameters(self):
        return list(self.params.values())

    def forward(self, scene, candidates=None, pairs=None, compute_loss=True, trace=False):
        """Run the head on ``scene``.

        ``candidates`` restricts selection and the distillation loss to a
        subset of pair indices (hard-mined training pairs); ``None`` uses
        every pair. Losses are attached to ``Output.losses`` as tensors.
        """
        cfg, params = self.cfg, self.params
        if pairs is None:
            pairs = interaction.enumerate_pairs(scene, cfg.num_actions)
        cand = np.arange(len(pairs)) if candidates is None else np.asarray(candidates, dtype=np.intp)
        out = Output(pairs, cand)
        if len(pairs) == 0 or len(cand) == 0:
            return out
        inst = interaction.instance_features(scene, params)
        _, F = interaction.interaction_features(inst, pairs, params)
        pairs = interaction.Pairs(pairs.human_idx, pairs.object_idx, pairs.spatial,
                                  pairs.gt_label, pairs.gt_actions, None, F)
        out.pairs = pairs
        nu_h, nu_o = sta.node_features(inst, pairs.human_idx, pairs.object_idx, params)
        edge = sta.edge_features(F, pairs.spatial, params, cfg.edge)
        if cfg.sta:
            state = sta.sta_forward(nu_h, nu_o, edge, params)
        else:
            state = sta.mlp_fusion(nu_h, nu_o, edge, params)
        state.scores = sta.interactiveness(state.nu_hoi, params)
        out.state = state
        sel = sta.select_proposals(state, cand, cfg.top_k, pairs.gt_label, pairs.gt_actions)
        out.selected = sel
        nu = sel.nu_hoi
        if cfg.ctd:
            boxes = [d.box for d in scene.detections]
            cats = [d.category for d in scene.detections]
            rel = ctd.build_relations(pairs.human_idx[sel.indices], pairs.object_idx[sel.indices],
                                      boxes, cats, cfg.num_objects, scene.image_size)
            rel.adj = ctd.fuse_adjacency(rel, params, cfg.relations, cfg.adj_norm)
            out.relations = rel
            nu = ctd.ctd_update(nu, rel.adj)
        out.nu_hoi_hat = nu
        attn = [] if trace else None
        out.decoded = decoder.decode(nu, scene.feature_map, params, cfg.layers, cfg.heads, attn)
        out.attention = attn
        out.y_hat = decoder.action_probs(out.decoded, params)
        if compute_loss:
            out.losses = self.losses(scene, out)
        return out

    def losses(self, scene, out):
        cfg = self.cfg
        pairs, cand, sel = out.pairs, out.candidates, out.selected
        if cfg.kd:
            cats = [scene.detections[o].category for o in pairs.object_idx[cand]]
            targets = distill.build_targets(cats, pairs.gt_label[cand], pairs.gt_actions[cand],
                                            self.vocab, cfg.kd_negatives)
            l_kd = distill.kd_loss(nx.take_rows(pairs.F, cand),
                                   distill.target_matrix(targets, cfg.d_text))
        else:
            l_kd = nx.Tensor(0.0)
        if cfg.pair_loss_scope == "selected":
            l_pair = sta.pair_loss(sel.scores, sel.gt_label, cfg.focal_gamma, cfg.focal_alpha)
        else:
            l_pair = sta.pair_loss(nx.take_rows(out.state.scores, cand), pairs.gt_label[cand],
                                   cfg.focal_gamma, cfg.focal_alpha)
        l_a = decoder.action_loss(out.y_hat, sel.gt_actions, cfg.focal_gamma, cfg.focal_alpha)
        total = decoder.total_loss(l_kd, l_pair, l_a, cfg.alpha, cfg.beta, cfg.gamma)
        return {"kd": l_kd, "pair": l_pair, "action": l_a, "total": total}

    def predict(self, scene):
        """Composite-scored HOI predictions for every selected proposal."""
        with nx.no_grad():
            out = self.forward(scene, compute_loss=False)
        if out.empty:
            return []
        sel = out.selected
        return decoder.compose_predictions(
            scene, out.pairs.human_idx[sel.indices], out.pairs.object_idx[sel.indices],
            sel.scores.data, out.y_hat.data, self.vocab, self.cfg.score_rule,
        )

    # -- checkpoints -------------------------------------------------------
    def save(self, path):
        meta = {"format": CHECKPOINT_FORMAT, "model": self.cfg.to_dict(),
                "vocab": {"num_objects": self.vocab.num_objects,
                          "num_actions": self.vocab.num_actions, "num_hoi": self.vocab.num_hoi}}
        container.write(path, meta, {k: p.data for k, p in self.params.items()}, dtype="<f8")

    @classmethod
    def load(cls, path, vocab, expect=None):
        """Load a checkpoint; ``expect`` (a ModelConfig) must agree on the data widths."""
        meta, tensors = container.read(path)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise LoadError(f"{path}: not a checkpoint")
        cfg = ModelConfig.from_dict(meta["model"])
        if (cfg.num_objects, cfg.num_actions) != (vocab.num_objects, vocab.num_actions) \
                or cfg.d_text != vocab.dim:
            raise LoadError("checkpoint and vocabulary dimensions disagree")
        if expect is not None:
            for name in ("d_app", "d_map", "d_text", "num_objects", "num_actions"):
                if getattr(expect, name) != getattr(cfg, name):
                    raise LoadError(f"checkpoint {name}={getattr(cfg, name)} but config expects "
                                    f"{getattr(expect, name)}")
        fresh = init_params(cfg)
        if set(fresh) != set(tensors):
            raise LoadError("checkpoint parameter set does not match its configuration")
        for name, p in fresh.items():
            if p.shape != tensors[name].shape:
                raise LoadError(f"parameter {name}: shape {tensors[name].shape} != {p.shape}")
            p.data = tensors[name].copy()
        return cls(cfg, vocab, fresh)
