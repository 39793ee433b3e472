"""Action decoder, action loss, score composition and the combined objective."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sctc import numerics as nx
from sctc.errors import ConfigurationError

SCORE_RULES = ("full", "no-interactiveness")


@dataclass
class HoiPrediction:
    scene_id: str
    proposal: int
    human_box: tuple
    object_box: tuple
    object_category: int
    action: int
    action_prob: float
    interactiveness: float
    score: float


def sine_position_encoding(height, width, dim):
    """Fixed 2-D sinusoidal encoding, ``[height * width, dim]``.

    The first half of the channels encodes the row, the second half the
    column, each as interleaved sin/cos over geometric frequencies.
    """
    if dim % 4:
        raise ConfigurationError("position-encoding width must be divisible by 4")
    half = dim // 2
    freqs = 1.0 / (10000.0 ** (np.arange(0, half, 2) / half))

    def encode(pos):
        ang = pos[:, None] * freqs[None, :]
        out = np.zeros((len(pos), half))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.concatenate([encode(rows.ravel() + 1.0), encode(cols.ravel() + 1.0)], axis=1)


def attention(q_in, kv_in, params, prefix, heads, trace=None):
    """Multi-head scaled dot-product attention from ``q_in`` onto ``kv_in``."""
    nq, d = q_in.shape
    nk = kv_in.shape[0]
    if d % heads:
        raise ConfigurationError(f"model width {d} not divisible by {heads} heads")
    dh = d // heads

    def split(x, n):
        return x.reshape(n, heads, dh).transpose(1, 0, 2)

    q = split(nx.linear(q_in, params[f"{prefix}.q.W"], params[f"{prefix}.q.b"]), nq)
    k = split(nx.linear(kv_in, params[f"{prefix}.k.W"], params[f"{prefix}.k.b"]), nk)
    v = split(nx.linear(kv_in, params[f"{prefix}.v.W"], params[f"{prefix}.v.b"]), nk)
    weights = nx.softmax(nx.matmul(q, k.transpose(0, 2, 1)) * (1.0 / math.sqrt(dh)), axis=-1)
    if trace is not None:
        trace.append(weights.data)
    out = nx.matmul(weights, v).transpose(1, 0, 2).reshape(nq, d)
    return nx.linear(out, params[f"{prefix}.o.W"], params[f"{prefix}.o.b"])


def _ln(x, params, name):
    return nx.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def decoder_layer(x, memory, params, i, heads, trace=None):
    p = f"decoder.{i}"
    h = _ln(x, params, f"{p}.ln1")
    x = x + attention(h, h, params, f"{p}.self", heads, trace)
    x = x + attention(_ln(x, params, f"{p}.ln2"), memory, params, f"{p}.cross", heads, trace)
    h = _ln(x, params, f"{p}.ln3")
    h = nx.mlp(h, [(params[f"{p}.ff.0.W"], params[f"{p}.ff.0.b"]),
                   (params[f"{p}.ff.1.W"], params[f"{p}.ff.1.b"])])
    return x + h


def query_projection(nu_hoi, params):
    return nx.mlp(nu_hoi, [(params["decoder.query.0.W"], params["decoder.query.0.b"]),
                           (params["decoder.query.1.W"], params["decoder.query.1.b"])])


def memory_tokens(feature_map, params, d_model):
    fm = np.asarray(feature_map, dtype=np.float64)
    hf, wf, dm = fm.shape
    mem = nx.linear(nx.Tensor(fm.reshape(hf * wf, dm)), params["decoder.memory.W"],
                    params["decoder.memory.b"])
    return mem + nx.Tensor(sine_position_encoding(hf, wf, d_model))


def decode(nu_hoi, feature_map, params, layers, heads, trace=None):
    """Queries from ``nu_hoi`` refined by ``layers`` pre-norm decoder layers."""
    x = query_projection(nu_hoi, params)
    if layers == 0:
        return x
    memory = memory_tokens(feature_map, params, x.shape[1])
    for i in range(layers):
        x = decoder_layer(x, memory, params, i, heads, trace)
    return x


def action_probs(decoded, params):
    return nx.sigmoid(nx.linear(decoded, params["head.W"], params["head.b"]))


def action_loss(y_hat, y, gamma=nx.FOCAL_GAMMA, alpha=nx.FOCAL_ALPHA):
    """Focal loss summed over proposals and classes, divided by max(#positive labels, 1)."""
    y = np.asarray(y, dtype=np.float64)
    return nx.focal_loss(y_hat, y, gamma, alpha).sum() * (1.0 / max(y.sum(), 1.0))


def composite_scores(s_h, s_o, p_hat, y_hat, rule="full"):
    """``s_h * s_o * p_hat * y_hat`` per (proposal, action); p_hat dropped for the variant."""
    s_h = np.asarray(s_h, dtype=np.float64)[:, None]
    s_o = np.asarray(s_o, dtype=np.float64)[:, None]
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if rule == "full":
        return s_h * s_o * np.asarray(p_hat, dtype=np.float64)[:, None] * y_hat
    if rule == "no-interactiveness":
        return s_h * s_o * y_hat
    raise ConfigurationError(f"unknown score rule {rule!r}")


def compose_predictions(scene, human_idx, object_idx, p_hat, y_hat, vocab, rule="full"):
    """One prediction per selected proposal and per action valid for its object."""
    dets = scene.detections
    s_h = [dets[h].score for h in human_idx]
    s_o = [dets[o].score for o in object_idx]
    scores = composite_scores(s_h, s_o, p_hat, y_hat, rule)
    preds = []
    for k, (h, o) in enumerate(zip(human_idx, object_idx)):
        cat = dets[o].category
        for a in vocab.actions_for(cat):
            preds.append(HoiPrediction(scene.id, k, tuple(dets[h].box), tuple(dets[o].box), cat, a,
                                       float(y_hat[k, a]), float(p_hat[k]), float(scores[k, a])))
    return preds


def total_loss(l_kd, l_pair, l_a, alpha=1.0, beta=1.0, gamma=1.0):
    return alpha * l_kd + beta * l_pair + gamma * l_a
