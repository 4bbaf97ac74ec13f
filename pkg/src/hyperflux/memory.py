"""Per-node memory, recent-relation caches, and temporal representations.

Memory rows summarize each node's event history and are rewritten once per
batch boundary by a GRU fed with the node's stored messages.  A node's
representation at time t combines its memory row with attention over the
recent relations where it appeared on the right / left side.

Two code paths compute representations: the single-node functions below
(the readable contract) and :func:`compute_representations`, a batched
pipeline used by training; tests pin them to each other.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import ParamStore, attention_mix, fourier_encode, gru_cell, multi_head_attention
from .streams import DirectedHyperedge

__all__ = [
    "RelationRecord",
    "NeighborCaches",
    "MemoryState",
    "hyperedge_repr",
    "neighborhood_features",
    "node_representation",
    "boundary_update",
    "memory_update",
    "cache_update",
    "generate_messages",
    "compute_representations",
]

_MASK = -1e30


class RelationRecord(NamedTuple):
    edge: DirectedHyperedge
    time: float


class NeighborCaches:
    """Per node, the most recent `depth` relations on each side."""

    def __init__(self, node_count: int, depth: int):
        self.depth = depth
        self.right = [deque(maxlen=depth) for _ in range(node_count)]
        self.left = [deque(maxlen=depth) for _ in range(node_count)]

    def side(self, name: str):
        return self.right if name == "right" else self.left

    def copy(self) -> "NeighborCaches":
        c = NeighborCaches(len(self.right), self.depth)
        for i in range(len(self.right)):
            c.right[i].extend(self.right[i])
            c.left[i].extend(self.left[i])
        return c


class MemoryState:
    """Memory matrix, last-update times, pending messages, caches."""

    def __init__(self, mem, last_update, pending_right, pending_left, caches,
                 last_event_time=0.0, prev_event_time=0.0):
        self.mem = mem
        self.last_update = last_update
        self.pending_right = pending_right
        self.pending_left = pending_left
        self.caches = caches
        self.last_event_time = last_event_time
        self.prev_event_time = prev_event_time

    @classmethod
    def zero(cls, node_count: int, dim: int, cache_depth: int) -> "MemoryState":
        return cls(np.zeros((node_count, dim)), np.zeros(node_count), {}, {},
                   NeighborCaches(node_count, cache_depth))

    @property
    def node_count(self) -> int:
        return self.mem.shape[0]

    def copy(self) -> "MemoryState":
        return MemoryState(self.mem.copy(), self.last_update.copy(),
                           dict(self.pending_right), dict(self.pending_left),
                           self.caches.copy(), self.last_event_time,
                           self.prev_event_time)


# -- single-node contract functions ------------------------------------------

def hyperedge_repr(edge: DirectedHyperedge, mem: Tensor, params: ParamStore) -> Tensor:
    """Mean-pooled projection of member memory rows, one term per side."""
    r = ad.gather_rows(mem, np.array(edge.right))
    l = ad.gather_rows(mem, np.array(edge.left))
    right_part = ad.tsum(r @ params["nbr.W_edge_right"], axis=0) * (1.0 / edge.kr)
    left_part = ad.tsum(l @ params["nbr.W_edge_left"], axis=0) * (1.0 / edge.kl)
    return right_part + left_part


def neighborhood_features(node: int, side: str, t: float, mem: Tensor,
                          caches: NeighborCaches, params: ParamStore,
                          heads: int) -> Tensor:
    """Attention over the node's cached relations on one side.

    Keys/values are [relation representation || time features]; the query is
    [memory row || time features at lag 0].  An empty cache yields zeros;
    cached relations newer than t are ignored (nothing leaks backwards).
    """
    records = [rec for rec in caches.side(side)[node] if rec.time <= t]
    d = mem.shape[1]
    if not records:
        return ad.constant(np.zeros(d))
    omega, phi = params["time_enc.omega"], params["time_enc.phi"]
    rows = []
    for rec in records:
        feat = ad.concat([hyperedge_repr(rec.edge, mem, params),
                          fourier_encode(t - rec.time, omega, phi)], axis=-1)
        rows.append(ad.reshape(feat, (1, 2 * d)))
    keys = ad.concat(rows, axis=0)
    q = ad.reshape(ad.gather_rows(mem, np.array([node])), (d,))
    q = ad.concat([q, fourier_encode(0.0, omega, phi)], axis=-1)
    tag = "right" if side == "right" else "left"
    return multi_head_attention(q, keys, keys,
                                params[f"attn_{tag}.Wq"], params[f"attn_{tag}.Wk"],
                                params[f"attn_{tag}.Wv"], params[f"attn_{tag}.Wo"],
                                heads)


def node_representation(node: int, t: float, mem: Tensor, caches: NeighborCaches,
                        params: ParamStore, heads: int) -> Tensor:
    """tanh of memory + right/left neighborhood features, all linearly mapped."""
    m = ad.reshape(ad.gather_rows(mem, np.array([node])), (-1,))
    vr = neighborhood_features(node, "right", t, mem, caches, params, heads)
    vl = neighborhood_features(node, "left", t, mem, caches, params, heads)
    pre = (ad.reshape(m, (1, -1)) @ params["repr.W_mem"] +
           ad.reshape(vr, (1, -1)) @ params["repr.W_right"] +
           ad.reshape(vl, (1, -1)) @ params["repr.W_left"] + params["repr.b"])
    return ad.reshape(ad.tanh(pre), (-1,))


# -- batch boundary ------------------------------------------------------------

def boundary_update(state: MemoryState, params: ParamStore):
    """Differentiable application of pending messages to the memory.

    Returns (mem tensor after update, updated row ids, their new times).
    The incoming memory enters as a constant, so gradients reach the GRU
    weights and stop at the stored messages.
    """
    mem_t = ad.constant(state.mem)
    rows = sorted(set(state.pending_right) | set(state.pending_left))
    if not rows:
        return mem_t, [], {}
    dim3 = 3 * state.mem.shape[1]
    x = np.zeros((len(rows), 2 * dim3))
    times = {}
    for k, v in enumerate(rows):
        best = -np.inf
        if v in state.pending_right:
            msg, t = state.pending_right[v]
            x[k, :dim3] = msg
            best = max(best, t)
        if v in state.pending_left:
            msg, t = state.pending_left[v]
            x[k, dim3:] = msg
            best = max(best, t)
        times[v] = best
    h = ad.gather_rows(mem_t, np.array(rows))
    gru = {k: params[f"gru.{k}"] for k in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")}
    new_rows = gru_cell(ad.constant(x), h, gru)
    return ad.scatter_rows(mem_t, np.array(rows), new_rows), rows, times


def memory_update(state: MemoryState, params: ParamStore) -> None:
    """Consume pending messages in place (forward only)."""
    mem_used, rows, times = boundary_update(state, params)
    state.mem = mem_used.value
    for v, t in times.items():
        state.last_update[v] = t
    state.pending_right.clear()
    state.pending_left.clear()


def cache_update(items, caches: NeighborCaches) -> None:
    """Append each hyperedge to the caches of its member nodes."""
    for item in items:
        rec = RelationRecord(item.edge, item.time)
        for v in item.edge.right:
            caches.right[v].append(rec)
        for v in item.edge.left:
            caches.left[v].append(rec)


def generate_messages(occurrences, params: ParamStore, effective_tp) -> tuple[dict, dict]:
    """Assemble per-node pending messages from node occurrences in a batch.

    occurrences: iterable of (node, side, time, rep_value, dh_value) in
    chronological order; for repeated (node, side) pairs the latest wins.
    ``effective_tp(node)`` supplies the node's last memory-update time.
    """
    pending_right: dict[int, tuple[np.ndarray, float]] = {}
    pending_left: dict[int, tuple[np.ndarray, float]] = {}
    omega, phi = params["time_enc.omega"], params["time_enc.phi"]
    for node, side, t, rep, dh in occurrences:
        psi = fourier_encode(max(t - effective_tp(node), 0.0), omega, phi).value
        msg = np.concatenate([rep, dh, psi])
        target = pending_right if side == "right" else pending_left
        target[node] = (msg, t)
    return pending_right, pending_left


# -- batched representation pipeline -------------------------------------------

def edge_projections(mem: Tensor, params: ParamStore):
    """Shared per-batch linear maps of the memory used by relation pooling."""
    return mem @ params["nbr.W_edge_right"], mem @ params["nbr.W_edge_left"]


def _edge_reprs(edges, proj_right: Tensor, proj_left: Tensor):
    """Pooled representation per distinct cached relation: (E, d) tensor."""
    r_ids, r_seg, l_ids, l_seg = [], [], [], []
    inv_kr = np.empty(len(edges))
    inv_kl = np.empty(len(edges))
    for e_idx, edge in enumerate(edges):
        r_ids.extend(edge.right)
        r_seg.extend([e_idx] * edge.kr)
        l_ids.extend(edge.left)
        l_seg.extend([e_idx] * edge.kl)
        inv_kr[e_idx] = 1.0 / edge.kr
        inv_kl[e_idx] = 1.0 / edge.kl
    right = ad.segment_sum(ad.gather_rows(proj_right, np.array(r_ids)), np.array(r_seg), len(edges))
    left = ad.segment_sum(ad.gather_rows(proj_left, np.array(l_ids)), np.array(l_seg), len(edges))
    return right * ad.constant(inv_kr[:, None]) + left * ad.constant(inv_kl[:, None])


def compute_representations(pairs, mem: Tensor, caches: NeighborCaches,
                            params: ParamStore, heads: int,
                            edge_proj=None) -> Tensor:
    """Representations for (node, time) pairs as one (P, d) tensor.

    Semantically equals stacking :func:`node_representation` per pair; the
    relation pooling, time encoding and attention run batched with padding
    masks so a whole batch costs a handful of array ops.
    """
    if not pairs:
        return ad.constant(np.zeros((0, mem.shape[1])))
    d = mem.shape[1]
    nodes = np.array([p[0] for p in pairs])
    omega, phi = params["time_enc.omega"], params["time_enc.phi"]

    edge_index: dict[DirectedHyperedge, int] = {}
    per_side_records = {}
    for side in ("right", "left"):
        bank = caches.side(side)
        recs = [list(bank[v]) for v, _ in pairs]
        for rl in recs:
            for rec in rl:
                if rec.edge not in edge_index:
                    edge_index[rec.edge] = len(edge_index)
        per_side_records[side] = recs

    if edge_index:
        if edge_proj is None:
            edge_proj = edge_projections(mem, params)
        reprs = _edge_reprs(list(edge_index), *edge_proj)

    mem_rows = ad.gather_rows(mem, nodes)
    psi0 = ad.reshape(fourier_encode(0.0, omega, phi), (1, d))

    feats = {}
    for side in ("right", "left"):
        recs = per_side_records[side]
        width = max((len(rl) for rl in recs), default=0)
        if width == 0 or not edge_index:
            feats[side] = ad.constant(np.zeros((len(pairs), d)))
            continue
        idx = np.zeros((len(pairs), width), dtype=np.intp)
        dt = np.zeros((len(pairs), width))
        mask = np.full((len(pairs), 1, 1, width), _MASK)
        keep = np.zeros((len(pairs), 1))
        for p, ((_, t), rl) in enumerate(zip(pairs, recs)):
            for j, rec in enumerate(rl):
                lag = t - rec.time
                if lag < 0:
                    continue  # relation newer than the query time stays masked
                idx[p, j] = edge_index[rec.edge]
                dt[p, j] = lag
                mask[p, 0, 0, j] = 0.0
                keep[p, 0] = 1.0
        psi = fourier_encode(dt, omega, phi)
        tag = f"attn_{side}"
        wq, wk, wv = params[f"{tag}.Wq"], params[f"{tag}.Wk"], params[f"{tag}.Wv"]
        # keys are [relation repr || psi]; project the halves separately so
        # each distinct relation is mapped once instead of once per slot
        qp = mem_rows @ ad.slice_rows(wq, 0, d) + psi0 @ ad.slice_rows(wq, d, 2 * d)
        flat = idx.ravel()
        kp = (ad.reshape(ad.gather_rows(reprs @ ad.slice_rows(wk, 0, d), flat),
                         (len(pairs), width, d)) + psi @ ad.slice_rows(wk, d, 2 * d))
        vp = (ad.reshape(ad.gather_rows(reprs @ ad.slice_rows(wv, 0, d), flat),
                         (len(pairs), width, d)) + psi @ ad.slice_rows(wv, d, 2 * d))
        out = attention_mix(qp, kp, vp, params[f"{tag}.Wo"], heads, mask=mask)
        feats[side] = out * ad.constant(keep)

    pre = (mem_rows @ params["repr.W_mem"] + feats["right"] @ params["repr.W_right"] +
           feats["left"] @ params["repr.W_left"] + params["repr.b"])
    return ad.tanh(pre)
