"""Batch engine, training loop, and warm replay.

Every batch is processed against the memory/cache state frozen at the
batch start: pending messages are folded into the memory (differentiably,
so the recurrent update trains), representations are computed from that
state, losses are formed, and only after the optimizer step are the new
messages and cache entries committed.  Gradients therefore never cross a
batch boundary through the memory.

Hyperedges inside a batch are canonicalized by (time, stream index), so
within-batch order never influences results.  All sampling is keyed by
(seed, purpose, epoch, stream index) and is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .heads import (LossCounters, adjacency_logits, adjacency_nll, negative_sample,
                    node_event_nll, size_logits, size_nll, time_mu, total_nll)
from .memory import (MemoryState, boundary_update, cache_update, compute_representations,
                     edge_projections, generate_messages)
from .nn import Adam, ParamStore, init_uniform
from .predictor import directed_score, loglik_from_scores
from .streams import EventStream, batch_iter, build_node_targets

__all__ = ["TrainConfig", "Model", "BatchResult", "build_model", "build_params",
           "process_batch", "commit_batch", "fit", "warm_replay", "finalize_state",
           "node_reps_at"]

_TAG_INIT, _TAG_NEG, _TAG_SURV, _TAG_EVAL_NEG = 0, 1, 2, 3


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.001
    dim: int = 64
    negatives: int = 20
    s_t: float = 1.0
    cache_depth: int = 10
    heads: int = 2
    seed: int = 0
    fractions: tuple[float, float, float] = (0.5, 0.25, 0.25)

    def validate(self):
        if self.epochs < 0 or self.lr < 0 or self.s_t <= 0:
            raise ValueError("invalid training configuration")
        if min(self.batch_size, self.dim, self.negatives, self.cache_depth, self.heads) < 1:
            raise ValueError("invalid training configuration")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


@dataclass
class Model:
    params: ParamStore
    node_count: int
    kr_max: int
    kl_max: int
    cfg: TrainConfig


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(list(key))


def build_model(stream: EventStream, cfg: TrainConfig) -> Model:
    """Create and initialize every learnable tensor for a dataset's shape."""
    span = max(stream.events[-1].t, 2.0)
    params = build_params(stream.node_count, stream.kr_max, stream.kl_max, cfg, span)
    return Model(params, stream.node_count, stream.kr_max, stream.kl_max, cfg)


def build_params(node_count: int, kr_max: int, kl_max: int, cfg: TrainConfig,
                 span: float = 2.0) -> ParamStore:
    """Initialize the full parameter set for the given problem dimensions."""
    cfg.validate()
    rng = _rng(cfg.seed, _TAG_INIT)
    d = cfg.dim
    p = ParamStore()

    def lin(name, d_in, d_out):
        p.add(name, init_uniform(rng, (d_in, d_out), d_in))

    def bias(name, d_out, fan_in):
        p.add(name, init_uniform(rng, (d_out,), fan_in))

    for side in ("right", "left"):
        lin(f"nbr.W_edge_{side}", d, d)
        for w in ("Wq", "Wk", "Wv"):
            lin(f"attn_{side}.{w}", 2 * d, d)
        lin(f"attn_{side}.Wo", d, d)
        for w in ("Wq", "Wk", "Wv"):
            lin(f"cat.{side}.{w}", d, d)
            lin(f"sat.{side}.{w}", d, d)
        lin(f"static.{side}.W", d, d)
        lin(f"out.{side}.W", 2 * d, 1)
        bias(f"out.{side}.b", 1, 2 * d)
        lin(f"adj_{side}.W0", d, d)
        bias(f"adj_{side}.b0", d, d)
    lin("repr.W_mem", d, d)
    lin("repr.W_right", d, d)
    lin("repr.W_left", d, d)
    bias("repr.b", d, d)
    for g in ("z", "r", "h"):
        lin(f"gru.W_{g}", 6 * d, d)
        lin(f"gru.U_{g}", d, d)
        bias(f"gru.b_{g}", d, 6 * d)
    lin("time_head.W0", d, d)
    bias("time_head.b0", d, d)
    lin("time_head.W1", d, 1)
    bias("time_head.b1", 1, d)
    lin("size_right.W0", d, d)
    bias("size_right.b0", d, d)
    lin("size_right.W1", d, kr_max)
    bias("size_right.b1", kr_max, d)
    lin("size_left.W0", d, d)
    bias("size_left.b0", d, d)
    lin("size_left.W1", d, kl_max)
    bias("size_left.b1", kl_max, d)

    p.add("time_enc.omega", np.logspace(-np.log10(max(span, 2.0)), 0.0, d))
    p.add("time_enc.phi", np.zeros(d))
    return p


@dataclass
class BatchResult:
    total: Tensor | None
    loss_t: Tensor | None
    loss_k: Tensor | None
    loss_a: Tensor | None
    loss_h: Tensor | None
    counters: LossCounters
    items: list
    messages: tuple[dict, dict]
    boundary: tuple
    last_time: float
    prev_time: float


def _portioned(items, state):
    """Group canonical items by event time, attaching previous event times."""
    portions = []
    last_t = state.last_event_time
    prev_distinct = state.prev_event_time
    for it in items:
        if portions and portions[-1][0] == it.time:
            portions[-1][2].append(it)
            continue
        if it.time == last_t:
            t_prev = prev_distinct
        else:
            t_prev = last_t
            prev_distinct = last_t
            last_t = it.time
        portions.append((it.time, t_prev, [it]))
    return portions, last_t, prev_distinct


def process_batch(items, state: MemoryState, model: Model, *, mode: str,
                  epoch: int = 0, collector=None) -> BatchResult:
    """Forward (and loss) pass for one batch against the pre-batch state.

    mode: "train" builds loss tensors; "replay" touches only the memory
    path; "eval" feeds per-event predictions to `collector` instead of
    building losses.
    """
    cfg, params, V = model.cfg, model.params, model.node_count
    counters = LossCounters()
    items = sorted(items, key=lambda it: (it.time, it.index))
    portions, last_t, prev_t = _portioned(items, state)

    mem_used, b_rows, b_times = boundary_update(state, params)
    proj = edge_projections(mem_used, params)

    def eff_tp(v):
        return b_times.get(v, state.last_update[v])

    # representations of true-edge members at their event times
    pairs_a: list[tuple[int, float]] = []
    pos_a: dict[tuple[int, float], int] = {}
    for t, _, pitems in portions:
        for it in pitems:
            for v in it.edge.right + it.edge.left:
                if (v, t) not in pos_a:
                    pos_a[(v, t)] = len(pairs_a)
                    pairs_a.append((v, t))
    reps_a = compute_representations(pairs_a, mem_used, state.caches, params,
                                     cfg.heads, proj)

    # score true edges grouped by shape; keep per-node dynamic vectors
    groups: dict[tuple[int, int], list] = {}
    for t, _, pitems in portions:
        for it in pitems:
            groups.setdefault((it.edge.kr, it.edge.kl), []).append(it)
    lam_true: dict[int, float] = {}
    dh_values: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    true_score_tensors = []
    d = model.cfg.dim
    for shape in sorted(groups):
        members = groups[shape]
        idx_r = np.array([[pos_a[(v, it.time)] for v in it.edge.right] for it in members])
        idx_l = np.array([[pos_a[(v, it.time)] for v in it.edge.left] for it in members])
        r = ad.reshape(ad.gather_rows(reps_a, idx_r.ravel()), idx_r.shape + (d,))
        l = ad.reshape(ad.gather_rows(reps_a, idx_l.ravel()), idx_l.shape + (d,))
        lam, dh_r, dh_l = directed_score(r, l, params)
        true_score_tensors.append(lam)
        for b, it in enumerate(members):
            lam_true[it.index] = float(lam.value[b])
            dh_values[it.index] = (dh_r.value[b], dh_l.value[b])

    occurrences = []
    for t, _, pitems in portions:
        for it in pitems:
            dh_r, dh_l = dh_values[it.index]
            for j, v in enumerate(it.edge.right):
                occurrences.append((v, "right", t, reps_a.value[pos_a[(v, t)]], dh_r[j]))
            for j, v in enumerate(it.edge.left):
                occurrences.append((v, "left", t, reps_a.value[pos_a[(v, t)]], dh_l[j]))
    messages = generate_messages(occurrences, params, eff_tp)

    result = BatchResult(None, None, None, None, None, counters, items, messages,
                         (mem_used, b_rows, b_times), last_t, prev_t)
    if mode == "replay":
        return result

    # head representations at the previous event time
    portion_meta = []
    pairs_b: list[tuple[int, float]] = []
    for t, t_prev, pitems in portions:
        event_nodes = sorted({v for it in pitems for v in it.edge.right})
        dt = t - t_prev
        surv_nodes: list[int] = []
        if mode == "train" and dt > 0:
            pool = np.setdiff1d(np.arange(V), np.array(event_nodes))
            want = min(len(event_nodes), len(pool))
            if want:
                rng = _rng(cfg.seed, _TAG_SURV, epoch, pitems[0].index)
                surv_nodes = sorted(int(x) for x in rng.choice(pool, size=want, replace=False))
        rows_ev = []
        for v in event_nodes:
            rows_ev.append(len(pairs_b))
            pairs_b.append((v, t_prev))
        rows_sv = []
        for v in surv_nodes:
            rows_sv.append(len(pairs_b))
            pairs_b.append((v, t_prev))
        portion_meta.append((t, t_prev, dt, pitems, event_nodes, rows_ev, surv_nodes, rows_sv))
    reps_b = compute_representations(pairs_b, mem_used, state.caches, params,
                                     cfg.heads, proj)

    ev_rows, sv_rows, ev_dt, sv_dt = [], [], [], []
    tg_ar, tg_al, tg_kr, tg_kl = [], [], [], []
    for t, t_prev, dt, pitems, event_nodes, rows_ev, surv_nodes, rows_sv in portion_meta:
        if dt > 0:
            ev_rows.extend(rows_ev)
            ev_dt.extend([dt] * len(rows_ev))
            sv_rows.extend(rows_sv)
            sv_dt.extend([dt] * len(rows_sv))
        else:
            counters.skipped_time_terms += len(rows_ev)
        targets = build_node_targets(
            _PseudoEvent(t, tuple(it.edge for it in pitems)), V, model.kr_max, model.kl_max)
        for v in event_nodes:
            tg = targets[v]
            tg_ar.append(tg.adj_right)
            tg_al.append(tg.adj_left)
            tg_kr.append(tg.size_right)
            tg_kl.append(tg.size_left)

    all_ev_rows = [r for meta in portion_meta for r in meta[5]]
    reps_ev = ad.gather_rows(reps_b, np.array(all_ev_rows, dtype=np.intp))
    theta_r = adjacency_logits(reps_ev, mem_used, params, "right")
    theta_l = adjacency_logits(reps_ev, mem_used, params, "left")
    kappa_r = size_logits(reps_ev, params, "right")
    kappa_l = size_logits(reps_ev, params, "left")

    if mode == "train":
        loss_t = node_event_nll(ad.gather_rows(reps_b, np.array(ev_rows, dtype=np.intp)),
                                ad.gather_rows(reps_b, np.array(sv_rows, dtype=np.intp)),
                                np.array(ev_dt), np.array(sv_dt), params, cfg.s_t, counters)
        loss_a = adjacency_nll(np.array(tg_ar), np.array(tg_al), theta_r, theta_l)
        loss_k = size_nll(np.array(tg_kr), np.array(tg_kl), kappa_r, kappa_l)

    # negatives: corrupt each true edge, score them grouped by shape
    neg_tag = _TAG_NEG if mode == "train" else _TAG_EVAL_NEG
    neg_records = []
    pairs_c: list[tuple[int, float]] = []
    pos_c: dict[tuple[int, float], int] = {}
    for t, _, dt, pitems, *_rest in portion_meta:
        for it in pitems:
            rng = (_rng(cfg.seed, neg_tag, epoch, it.index) if mode == "train"
                   else _rng(cfg.seed, neg_tag, it.index))
            negs = negative_sample(it.edge, cfg.negatives, V, model.kr_max,
                                   model.kl_max, rng)
            for slot, neg in enumerate(negs):
                for v in neg.right + neg.left:
                    key = (v, t)
                    if key not in pos_a and key not in pos_c:
                        pos_c[key] = len(pairs_c)
                        pairs_c.append(key)
                neg_records.append((it.index, slot, t, neg))
    reps_c = compute_representations(pairs_c, mem_used, state.caches, params,
                                     cfg.heads, proj)
    combined = ad.concat([reps_a, reps_c], axis=0) if pairs_c else reps_a
    offset = len(pairs_a)

    def row_of(v, t):
        key = (v, t)
        return pos_a[key] if key in pos_a else offset + pos_c[key]

    neg_groups: dict[tuple[int, int], list] = {}
    for rec in neg_records:
        neg_groups.setdefault((rec[3].kr, rec[3].kl), []).append(rec)
    neg_score_tensors = []
    lam_negs: dict[int, dict[int, float]] = {}
    for shape in sorted(neg_groups):
        members = neg_groups[shape]
        idx_r = np.array([[row_of(v, t) for v in neg.right] for _, _, t, neg in members])
        idx_l = np.array([[row_of(v, t) for v in neg.left] for _, _, t, neg in members])
        r = ad.reshape(ad.gather_rows(combined, idx_r.ravel()), idx_r.shape + (d,))
        l = ad.reshape(ad.gather_rows(combined, idx_l.ravel()), idx_l.shape + (d,))
        lam, _, _ = directed_score(r, l, params)
        neg_score_tensors.append(lam)
        for b, (gidx, slot, _, _) in enumerate(members):
            lam_negs.setdefault(gidx, {})[slot] = float(lam.value[b])

    if mode == "train":
        scores = ad.concat(true_score_tensors + neg_score_tensors, axis=0)
        labels = np.concatenate([np.ones(sum(t.value.shape[0] for t in true_score_tensors)),
                                 np.zeros(sum(t.value.shape[0] for t in neg_score_tensors))])
        loss_h = -loglik_from_scores(scores, labels)
        result.loss_t, result.loss_k, result.loss_a, result.loss_h = loss_t, loss_k, loss_a, loss_h
        result.total = total_nll(loss_t, loss_k, loss_a, loss_h)

    if collector is not None:
        mu_vals = time_mu(reps_ev, params).value[:, 0]
        row = 0
        for t, t_prev, dt, pitems, event_nodes, rows_ev, *_r in portion_meta:
            n = len(event_nodes)
            collector.add_portion({
                "time": t, "t_prev": t_prev, "dt": dt if dt > 0 else None,
                "event_nodes": event_nodes,
                "mu": mu_vals[row:row + n],
                "theta_right": theta_r.value[row:row + n],
                "theta_left": theta_l.value[row:row + n],
                "kappa_right": kappa_r.value[row:row + n],
                "kappa_left": kappa_l.value[row:row + n],
                "targets_ar": np.array(tg_ar[row:row + n]),
                "targets_al": np.array(tg_al[row:row + n]),
                "targets_kr": np.array(tg_kr[row:row + n]),
                "targets_kl": np.array(tg_kl[row:row + n]),
                "edges": [
                    {"edge": it.edge, "index": it.index,
                     "lambda_true": lam_true[it.index],
                     "lambda_negs": np.array([lam_negs[it.index][s]
                                              for s in range(cfg.negatives)])}
                    for it in pitems],
            })
            row += n
    return result


class _PseudoEvent:
    """Event view of a batch portion (a possibly partial concurrent event)."""

    __slots__ = ("t", "hyperedges")

    def __init__(self, t, hyperedges):
        self.t = t
        self.hyperedges = hyperedges


def commit_batch(state: MemoryState, result: BatchResult) -> None:
    """Apply the state transitions computed during the batch forward pass."""
    mem_used, rows, times = result.boundary
    state.mem = mem_used.value
    for v, t in times.items():
        state.last_update[v] = t
    state.pending_right, state.pending_left = result.messages
    cache_update(result.items, state.caches)
    state.last_event_time = result.last_time
    state.prev_event_time = result.prev_time


def fit(train_events, model: Model, *, epochs: int | None = None):
    """Train over chronological batches; returns (history, final state).

    Each epoch resets the memory and replays the training events in order;
    a NaN loss aborts with diagnostics.  Deterministic for a fixed config.
    """
    cfg = model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    adam = Adam(lr=cfg.lr)
    history = []
    state = MemoryState.zero(model.node_count, cfg.dim, cfg.cache_depth)
    for epoch in range(epochs):
        state = MemoryState.zero(model.node_count, cfg.dim, cfg.cache_depth)
        sums = np.zeros(5)
        n_batches = 0
        for items in batch_iter(train_events, cfg.batch_size):
            model.params.zero_grads()
            res = process_batch(items, state, model, mode="train", epoch=epoch)
            vals = [res.total.value, res.loss_t.value, res.loss_k.value,
                    res.loss_a.value, res.loss_h.value]
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError(
                    f"non-finite loss in epoch {epoch}: total={vals[0]}, "
                    f"t={vals[1]}, k={vals[2]}, a={vals[3]}, h={vals[4]}")
            res.total.backward()
            adam.step(model.params)
            commit_batch(state, res)
            del res  # drop the graph before the next batch allocates
            sums += [float(v) for v in vals]
            n_batches += 1
        means = (sums / max(n_batches, 1)).tolist()
        history.append({"epoch": epoch, "total": means[0], "time": means[1],
                        "size": means[2], "adjacency": means[3], "hyperedge": means[4]})
    return history, state


def warm_replay(events, model: Model, state: MemoryState | None = None,
                start_index: int = 0) -> MemoryState:
    """Forward-only pass building the memory/cache state for later spans."""
    if state is None:
        state = MemoryState.zero(model.node_count, model.cfg.dim, model.cfg.cache_depth)
    for items in batch_iter(events, model.cfg.batch_size, start_index=start_index):
        res = process_batch(items, state, model, mode="replay")
        commit_batch(state, res)
        del res
    return state


def finalize_state(state: MemoryState, model: Model) -> None:
    """Fold any still-pending messages into the memory (forward only)."""
    from .memory import memory_update

    memory_update(state, model.params)


def node_reps_at(state: MemoryState, model: Model, pairs) -> np.ndarray:
    """Representation values for (node, time) pairs under the current state."""
    mem = ad.constant(state.mem)
    return compute_representations(pairs, mem, state.caches, model.params,
                                   model.cfg.heads).value
