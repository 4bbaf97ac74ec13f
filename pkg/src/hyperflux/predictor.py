"""Directed-hyperedge scoring from node representations.

A candidate edge is scored by attending across its two node sets
(cross attention), within each set (self attention, excluding self),
then pooling squared differences between the resulting dynamic vectors
and a per-node static projection.  Right and left sides use separate
parameters; the final score is the sum of the two pooled outputs.

All functions accept either single-edge inputs ``(k, d)`` or grouped
batches ``(B, k, d)`` of same-shape edges.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import ParamStore

__all__ = [
    "cat_layer",
    "sat_layer",
    "directed_score",
    "hyperedge_loglik",
    "loglik_from_scores",
]

_NEG = -1e30


def cat_layer(right: Tensor, left: Tensor, params: ParamStore):
    """Cross-attention dynamic vectors for each node of both sides.

    Right nodes attend over left nodes (and vice versa); logits are plain
    bilinear products of the projected vectors, outputs pass through tanh.
    """
    q_r = right @ params["cat.right.Wq"]
    k_r = right @ params["cat.right.Wk"]
    v_r = right @ params["cat.right.Wv"]
    q_l = left @ params["cat.left.Wq"]
    k_l = left @ params["cat.left.Wk"]
    v_l = left @ params["cat.left.Wv"]

    kt_l = ad.transpose(k_l, _swap_last2(k_l.ndim))
    kt_r = ad.transpose(k_r, _swap_last2(k_r.ndim))
    alpha_r = ad.softmax(q_r @ kt_l, axis=-1)
    alpha_l = ad.softmax(q_l @ kt_r, axis=-1)
    d_ch_right = ad.tanh(alpha_r @ v_l)
    d_ch_left = ad.tanh(alpha_l @ v_r)
    return d_ch_right, d_ch_left


def sat_layer(z: Tensor, params: ParamStore, side: str) -> Tensor:
    """Self-attention dynamic vectors over one node set, self excluded.

    Singleton sets have no peers to attend over and yield zeros.
    """
    k = z.shape[-2]
    if k == 1:
        return ad.constant(np.zeros(z.shape))
    q = z @ params[f"sat.{side}.Wq"]
    kk = z @ params[f"sat.{side}.Wk"]
    v = z @ params[f"sat.{side}.Wv"]
    logits = q @ ad.transpose(kk, _swap_last2(kk.ndim))
    mask = np.zeros((k, k))
    np.fill_diagonal(mask, _NEG)
    alpha = ad.softmax(logits + ad.constant(mask), axis=-1)
    return ad.tanh(alpha @ v)


def _swap_last2(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def _side_score(reps: Tensor, d_ch: Tensor, params: ParamStore, side: str):
    z = reps + d_ch
    d_sh = sat_layer(z, params, side)
    d_h = d_sh + d_ch
    s_h = reps @ params[f"static.{side}.W"]
    feats = ad.concat([ad.square(d_h - s_h), ad.square(d_ch - s_h)], axis=-1)
    o = feats @ params[f"out.{side}.W"] + params[f"out.{side}.b"]
    k = reps.shape[-2]
    pooled = ad.tsum(o, axis=(-2, -1)) * (1.0 / k)
    return pooled, d_h


def directed_score(right: Tensor, left: Tensor, params: ParamStore):
    """Score lambda of a directed hyperedge given its member representations.

    right: (kr, d) or (B, kr, d); left likewise.  Returns
    (lambda, d_h_right, d_h_left) where lambda is a scalar (or (B,)) and
    the d_h tensors hold the per-node dynamic vectors used downstream as
    message features.
    """
    d_ch_r, d_ch_l = cat_layer(right, left, params)
    p_r, d_h_r = _side_score(right, d_ch_r, params, "right")
    p_l, d_h_l = _side_score(left, d_ch_l, params, "left")
    return p_r + p_l, d_h_r, d_h_l


def loglik_from_scores(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Sum of label*log(sig(s)) + (1-label)*log(1-sig(s)), numerically safe."""
    labels = ad.constant(np.asarray(labels, dtype=np.float64))
    return ad.tsum(labels * ad.log_sigmoid(scores) +
                   (1.0 - labels) * ad.log_sigmoid(-scores))


def hyperedge_loglik(candidates, reps: dict[int, Tensor], params: ParamStore) -> Tensor:
    """Log-likelihood of labelled candidate edges under the predictor.

    candidates: list of (DirectedHyperedge, label in {0,1}); reps maps node
    id to its representation tensor at the event time.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    scores = []
    labels = []
    for edge, label in candidates:
        r = ad.concat([ad.reshape(reps[i], (1, -1)) for i in edge.right], axis=0)
        l = ad.concat([ad.reshape(reps[i], (1, -1)) for i in edge.left], axis=0)
        lam, _, _ = directed_score(r, l, params)
        scores.append(ad.reshape(lam, (1,)))
        labels.append(label)
    return loglik_from_scores(ad.concat(scores, axis=0), np.array(labels))
