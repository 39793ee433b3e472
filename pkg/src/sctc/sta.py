"""Self-triplet aggregation: a two-node graph per pair with the interaction feature as edge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sctc import numerics as nx
from sctc.errors import ConfigurationError

EDGE_MODES = ("IF+SF", "IF", "SF", "LE")


@dataclass
class TripletGraphState:
    """Batched over pairs: every tensor has a leading pair axis."""

    nu_h: nx.Tensor
    nu_o: nx.Tensor
    edge: nx.Tensor
    nu_h_hat: nx.Tensor
    nu_o_hat: nx.Tensor
    nu_hoi: nx.Tensor
    scores: nx.Tensor | None = None


@dataclass
class SelectedProposals:
    indices: np.ndarray
    nu_hoi: nx.Tensor
    scores: nx.Tensor
    gt_label: np.ndarray
    gt_actions: np.ndarray


def _proj(x, params, name):
    """Linear map followed by ReLU."""
    return nx.relu(nx.linear(x, params[f"{name}.W"], params[f"{name}.b"]))


def node_features(inst, human_idx, object_idx, params):
    """Project instance features to node width; returns (nu_h, nu_o) per pair."""
    nu_h = nx.take_rows(nx.linear(inst, params["sta.node_h.W"], params["sta.node_h.b"]), human_idx)
    nu_o = nx.take_rows(nx.linear(inst, params["sta.node_o.W"], params["sta.node_o.b"]), object_idx)
    return nu_h, nu_o


def edge_features(F, spatial, params, mode="IF+SF"):
    """Initial edge per pair from the interaction feature and/or spatial vector."""
    if mode == "IF+SF":
        x = nx.concat([F, nx.Tensor(spatial)], axis=-1)
    elif mode == "IF":
        x = F
    elif mode == "SF":
        x = nx.Tensor(spatial)
    elif mode == "LE":
        const = params["sta.edge_const"]
        return const * nx.Tensor(np.ones((len(spatial), 1)))
    else:
        raise ConfigurationError(f"unknown edge mode {mode!r}")
    return nx.linear(x, params["sta.edge.W"], params["sta.edge.b"])


def sta_forward(nu_h, nu_o, edge, params):
    """One round of gated message passing with skip connections.

    ``h->o = f_i(edge) * f_h(nu_h)``, ``o->h = f_i(edge) * f_o(nu_o)``,
    ``nu_o' = h->o + nu_o``, ``nu_h' = o->h + nu_h``.
    """
    gate = _proj(edge, params, "sta.f_i")
    h_to_o = nx.hadamard(gate, _proj(nu_h, params, "sta.f_h"))
    o_to_h = nx.hadamard(gate, _proj(nu_o, params, "sta.f_o"))
    nu_o_hat = h_to_o + nu_o
    nu_h_hat = o_to_h + nu_h
    return TripletGraphState(nu_h, nu_o, edge, nu_h_hat, nu_o_hat,
                             nx.concat([nu_h_hat, nu_o_hat], axis=-1))


def mlp_fusion(nu_h, nu_o, edge, params):
    """Ablation stand-in for the graph: an MLP over [nu_h ; nu_o ; edge]."""
    x = nx.concat([nu_h, nu_o, edge], axis=-1)
    out = nx.mlp(x, [(params["fusion.0.W"], params["fusion.0.b"]),
                     (params["fusion.1.W"], params["fusion.1.b"])])
    return TripletGraphState(nu_h, nu_o, edge, nu_h, nu_o, out)


def interactiveness(nu_hoi, params):
    """sigmoid(linear(relu(linear(nu_hoi)))) -> one score per pair."""
    logits = nx.mlp(nu_hoi, [(params["sta.score.0.W"], params["sta.score.0.b"]),
                             (params["sta.score.1.W"], params["sta.score.1.b"])])
    return nx.sigmoid(logits.reshape(-1))


def select_topk(scores, K):
    """Indices of the ``min(K, n)`` highest scores, descending; ties by index."""
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    s = np.asarray(scores.data if isinstance(scores, nx.Tensor) else scores, dtype=np.float64)
    order = np.lexsort((np.arange(len(s)), -s))
    return order[:K].astype(np.intp)


def select_proposals(state, candidates, K, gt_label, gt_actions):
    """Top-K among ``candidates`` (indices into the pair axis)."""
    cand = np.asarray(candidates, dtype=np.intp)
    local = select_topk(state.scores.data[cand], K)
    idx = cand[local]
    return SelectedProposals(idx, nx.take_rows(state.nu_hoi, idx), nx.take_rows(state.scores, idx),
                             gt_label[idx], gt_actions[idx])


def pair_loss(scores, labels, gamma=nx.FOCAL_GAMMA, alpha=nx.FOCAL_ALPHA):
    """Focal loss summed over proposals, divided by max(#positives, 1)."""
    labels = np.asarray(labels, dtype=np.float64)
    fl = nx.focal_loss(scores, labels, gamma, alpha)
    return fl.sum() * (1.0 / max(labels.sum(), 1.0))
