"""Stage heads: lognormal event-time model, adjacency/size heads, sampling.

All losses are returned in minimization form (nonnegative); the total
training objective is their plain sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import ParamStore, mlp2
from .streams import DirectedHyperedge

__all__ = [
    "SURVIVAL_CLAMP",
    "LossCounters",
    "PredictionBundle",
    "time_mu",
    "predict_event_time",
    "node_event_nll",
    "adjacency_logits",
    "size_logits",
    "adjacency_nll",
    "size_nll",
    "negative_sample",
    "generate_candidates",
    "total_nll",
]

SURVIVAL_CLAMP = 1e-12


@dataclass
class LossCounters:
    """Diagnostics accumulated during loss evaluation."""

    survival_clamps: int = 0
    skipped_time_terms: int = 0


@dataclass
class PredictionBundle:
    """Per event-node head outputs used for candidate assembly."""

    node: int
    mu: float
    theta_right: np.ndarray
    theta_left: np.ndarray
    kappa_right: np.ndarray
    kappa_left: np.ndarray
    candidates: list = field(default_factory=list)


def time_mu(reps: Tensor, params: ParamStore) -> Tensor:
    """Lognormal location per node: (n, 1) from (n, d) representations."""
    return mlp2(reps, params["time_head.W0"], params["time_head.b0"],
                params["time_head.W1"], params["time_head.b1"])


def predict_event_time(reps: Tensor, params: ParamStore) -> Tensor:
    """Point estimate of the next inter-event gap, exp(mu); always positive."""
    return ad.exp(time_mu(reps, params))


def node_event_nll(event_reps: Tensor, nonevent_reps: Tensor,
                   dt_event: np.ndarray, dt_nonevent: np.ndarray,
                   params: ParamStore, s_t: float,
                   counters: LossCounters | None = None) -> Tensor:
    """Event-time loss: squared log-gap error for event nodes plus the
    negative log survival probability for sampled non-event nodes.

    dt_* give the elapsed time since the previous event, one entry per
    representation row; all must be positive.
    """
    dt_event = np.asarray(dt_event, dtype=np.float64)
    dt_nonevent = np.asarray(dt_nonevent, dtype=np.float64)
    if np.any(dt_event <= 0) or np.any(dt_nonevent <= 0):
        raise ValueError("inter-event time must be positive")
    total = ad.constant(0.0)
    if len(dt_event):
        mu = time_mu(event_reps, params)
        resid = ad.constant(np.log(dt_event)[:, None]) - mu
        total = total + ad.tsum(ad.square(resid)) * (1.0 / (2.0 * s_t * s_t))
    if len(dt_nonevent):
        mu = time_mu(nonevent_reps, params)
        arg = (ad.constant(np.log(dt_nonevent)[:, None]) - mu) * (1.0 / s_t)
        survival = 1.0 - ad.normal_cdf(arg)
        if counters is not None:
            counters.survival_clamps += int((survival.value <= SURVIVAL_CLAMP).sum())
        total = total - ad.tsum(ad.log(ad.clip_min(survival, SURVIVAL_CLAMP)))
    return total


def adjacency_logits(reps: Tensor, mem: Tensor, params: ParamStore, side: str) -> Tensor:
    """Neighbor logits (n, |V|); the output layer is the live memory matrix."""
    hidden = ad.tanh(reps @ params[f"adj_{side}.W0"] + params[f"adj_{side}.b0"])
    return hidden @ ad.transpose(mem, (1, 0))


def size_logits(reps: Tensor, params: ParamStore, side: str) -> Tensor:
    return mlp2(reps, params[f"size_{side}.W0"], params[f"size_{side}.b0"],
                params[f"size_{side}.W1"], params[f"size_{side}.b1"])


def _bce_sum(logits: Tensor, targets: np.ndarray) -> Tensor:
    t = ad.constant(np.asarray(targets, dtype=np.float64))
    return -ad.tsum(t * ad.log_sigmoid(logits) + (1.0 - t) * ad.log_sigmoid(-logits))


def adjacency_nll(targets_right, targets_left, theta_right: Tensor, theta_left: Tensor) -> Tensor:
    """Summed binary cross-entropy over both adjacency vectors."""
    return _bce_sum(theta_right, targets_right) + _bce_sum(theta_left, targets_left)


def size_nll(targets_right, targets_left, kappa_right: Tensor, kappa_left: Tensor) -> Tensor:
    """Summed binary cross-entropy over both size vectors."""
    return _bce_sum(kappa_right, targets_right) + _bce_sum(kappa_left, targets_left)


def total_nll(loss_t: Tensor, loss_k: Tensor, loss_a: Tensor, loss_h: Tensor) -> Tensor:
    """Unweighted sum of the four component losses."""
    return loss_t + loss_k + loss_a + loss_h


def negative_sample(edge: DirectedHyperedge, count: int, node_count: int,
                    kr_max: int, kl_max: int, rng: np.random.Generator):
    """Corrupted variants of `edge`: one side kept, the other redrawn.

    The replaced side gets a uniform size in 1..k_max and uniformly sampled
    distinct nodes; draws equal to the original edge are rejected.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if node_count < max(kr_max, kl_max):
        raise ValueError("node_count too small for requested sizes")
    negatives = []
    while len(negatives) < count:
        replace_right = rng.random() < 0.5
        k_max = kr_max if replace_right else kl_max
        size = int(rng.integers(1, k_max + 1))
        nodes = tuple(int(v) for v in rng.choice(node_count, size=size, replace=False))
        try:
            neg = (DirectedHyperedge(nodes, edge.left) if replace_right
                   else DirectedHyperedge(edge.right, nodes))
        except ValueError:
            continue
        if neg == edge:
            continue
        negatives.append(neg)
    return negatives


def _top_nodes(scores: np.ndarray, k: int, exclude=()):  # descending, stable
    if k <= 0:
        return []
    order = np.argsort(-scores, kind="stable")
    picked = []
    for v in order:
        if int(v) in exclude:
            continue
        picked.append(int(v))
        if len(picked) == k:
            break
    return picked


def generate_candidates(bundles: list[PredictionBundle]) -> list[DirectedHyperedge]:
    """One candidate hyperedge per event node from its head outputs.

    The argmax size bits fix the side sizes; the right side is the node
    itself plus its top adjacency-scored peers, the left side the top
    left-adjacency nodes.  Identical candidates are merged.  If the two
    sides would coincide, the last left pick is bumped to the next node.
    """
    out: list[DirectedHyperedge] = []
    seen = set()
    for b in bundles:
        kr = int(np.argmax(b.kappa_right)) + 1
        kl = int(np.argmax(b.kappa_left)) + 1
        right = tuple(sorted([b.node] + _top_nodes(b.theta_right, kr - 1, exclude={b.node})))
        left_pool = _top_nodes(b.theta_left, kl + 1)
        left = tuple(sorted(left_pool[:kl]))
        if set(left) == set(right) and len(left_pool) > kl:
            left = tuple(sorted(left_pool[:kl - 1] + [left_pool[kl]]))
        try:
            cand = DirectedHyperedge(right, left)
        except ValueError:
            continue
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return out
