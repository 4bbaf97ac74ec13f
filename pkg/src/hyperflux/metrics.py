"""Evaluation: reciprocal ranks, time error, neighbor recall, size AUC.

One replay pass over a split collects everything; the per-metric helpers
below are thin views over the collected report.  Ranks are tie-aware
(strictly-greater count plus half the ties), so a constant scorer cannot
fake a perfect rank.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .heads import PredictionBundle
from .streams import EventStream, batch_iter, chronological_split
from .training import Model, commit_batch, process_batch, warm_replay

__all__ = [
    "MetricsReport",
    "EvalCollector",
    "rank_of",
    "evaluate_split",
    "evaluate_mrr",
    "evaluate_mae",
    "evaluate_recall",
    "evaluate_auc",
    "roc_auc",
]

PERCENTAGES = tuple(range(5, 55, 5))
_BUCKETS = (("k=2", 2, 2), ("3<=k<=4", 3, 4), ("5<=k<=8", 5, 8), ("k>=9", 9, 10 ** 9))


def _bucket(k: int) -> str:
    for name, lo, hi in _BUCKETS:
        if lo <= k <= hi:
            return name
    return _BUCKETS[0][0]


def rank_of(true_score: float, negative_scores: np.ndarray) -> float:
    """Tie-aware rank of the true candidate among its negatives."""
    return float((negative_scores > true_score).sum() +
                 0.5 * (negative_scores == true_score).sum())


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Mann-Whitney AUC with midranks; None when one class is absent."""
    labels = np.asarray(labels, dtype=bool)
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return None
    ranks = _stats.rankdata(scores)
    return float((ranks[labels].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass
class MetricsReport:
    mrr: float
    mae: float | None
    recall: dict[int, float]
    auc_macro: float | None
    auc_micro: float | None
    mrr_buckets: dict[str, tuple[float, int]]
    mae_buckets: dict[str, tuple[float, int]]
    n_edges: int
    n_events: int

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "mae": self.mae,
            "recall": {str(p): v for p, v in self.recall.items()},
            "auc_macro": self.auc_macro,
            "auc_micro": self.auc_micro,
            "mrr_buckets": {k: {"value": v, "count": c} for k, (v, c) in self.mrr_buckets.items()},
            "mae_buckets": {k: {"value": v, "count": c} for k, (v, c) in self.mae_buckets.items()},
            "n_edges": self.n_edges,
            "n_events": self.n_events,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_rows(self) -> list[tuple[str, str]]:
        rows = [("mrr", repr(self.mrr)), ("mae", repr(self.mae)),
                ("auc_macro", repr(self.auc_macro)), ("auc_micro", repr(self.auc_micro)),
                ("n_edges", str(self.n_edges)), ("n_events", str(self.n_events))]
        rows += [(f"recall@{p}", repr(v)) for p, v in sorted(self.recall.items())]
        rows += [(f"mrr[{k}]", repr(v)) for k, (v, _) in self.mrr_buckets.items()]
        rows += [(f"mrr_count[{k}]", str(c)) for k, (_, c) in self.mrr_buckets.items()]
        rows += [(f"mae[{k}]", repr(v)) for k, (v, _) in self.mae_buckets.items()]
        rows += [(f"mae_count[{k}]", str(c)) for k, (_, c) in self.mae_buckets.items()]
        return rows


class EvalCollector:
    """Accumulates per-event predictions streamed out of the batch engine."""

    def __init__(self, node_count: int, percentages=PERCENTAGES, store_bundles=False):
        self.node_count = node_count
        self.percentages = tuple(percentages)
        self.store_bundles = store_bundles
        self.rr: list[tuple[float, str]] = []
        self.mae_terms: list[tuple[float, str]] = []
        self.recall_sums = {p: {"right": [0.0, 0], "left": [0.0, 0]} for p in self.percentages}
        self.size_scores = {"right": [], "left": []}
        self.size_labels = {"right": [], "left": []}
        self.portions: list[dict] = []

    def add_portion(self, data: dict) -> None:
        nodes = data["event_nodes"]
        n = len(nodes)
        # event type ranking
        edge_ks = []
        for rec in data["edges"]:
            k = rec["edge"].kr + rec["edge"].kl
            edge_ks.append(k)
            r = rank_of(rec["lambda_true"], rec["lambda_negs"])
            self.rr.append((1.0 / (r + 1.0), _bucket(k)))
        # event time error
        if data["dt"] is not None and n:
            pred = data["t_prev"] + np.exp(data["mu"])
            term = float(np.mean(np.abs(data["time"] - pred)))
            self.mae_terms.append((term, _bucket(max(edge_ks, default=2))))
        # adjacency recall at each percentage
        for side in ("right", "left"):
            targets = data[f"targets_a{side[0]}"]
            logits = data[f"theta_{side}"]
            valid = [i for i in range(n) if targets[i].sum() > 0]
            if not valid:
                continue
            order = np.argsort(-logits, axis=1, kind="stable")
            for p in self.percentages:
                k = max(1, int(round(p / 100.0 * self.node_count)))
                ratios = []
                for i in valid:
                    hit = targets[i][order[i, :k]].sum()
                    ratios.append(hit / targets[i].sum())
                acc = self.recall_sums[p][side]
                acc[0] += float(np.mean(ratios))
                acc[1] += 1
        # size prediction pools
        if n:
            self.size_scores["right"].append(data["kappa_right"])
            self.size_labels["right"].append(data["targets_kr"])
            self.size_scores["left"].append(data["kappa_left"])
            self.size_labels["left"].append(data["targets_kl"])
        if self.store_bundles:
            bundles = [PredictionBundle(v, float(data["mu"][i]), data["theta_right"][i],
                                        data["theta_left"][i], data["kappa_right"][i],
                                        data["kappa_left"][i])
                       for i, v in enumerate(nodes)]
            self.portions.append({"time": data["time"], "t_prev": data["t_prev"],
                                  "bundles": bundles,
                                  "true_edges": [rec["edge"] for rec in data["edges"]]})

    # -- finalization ---------------------------------------------------------
    def _auc_pair(self):
        pooled_scores, pooled_labels, per_bit = [], [], []
        for side in ("right", "left"):
            if not self.size_scores[side]:
                continue
            scores = np.concatenate(self.size_scores[side], axis=0)
            labels = np.concatenate(self.size_labels[side], axis=0)
            for b in range(scores.shape[1]):
                auc = roc_auc(scores[:, b], labels[:, b])
                if auc is not None:
                    per_bit.append(auc)
                pooled_scores.append(scores[:, b])
                pooled_labels.append(labels[:, b])
        macro = float(np.mean(per_bit)) if per_bit else None
        micro = (roc_auc(np.concatenate(pooled_scores), np.concatenate(pooled_labels))
                 if pooled_scores else None)
        return macro, micro

    def report(self) -> MetricsReport:
        rr_values = np.array([v for v, _ in self.rr])
        mrr = float(rr_values.mean()) if len(rr_values) else 0.0
        mrr_buckets = {}
        mae_buckets = {}
        for name, _, _ in _BUCKETS:
            vals = [v for v, b in self.rr if b == name]
            if vals:
                mrr_buckets[name] = (float(np.mean(vals)), len(vals))
            terms = [v for v, b in self.mae_terms if b == name]
            if terms:
                mae_buckets[name] = (float(np.mean(terms)), len(terms))
        mae = float(np.mean([v for v, _ in self.mae_terms])) if self.mae_terms else None
        recall = {}
        for p in self.percentages:
            halves = []
            for side in ("right", "left"):
                total, count = self.recall_sums[p][side]
                if count:
                    halves.append(total / count)
            if halves:
                recall[p] = float(np.mean(halves))
        macro, micro = self._auc_pair()
        return MetricsReport(mrr, mae, recall, macro, micro, mrr_buckets, mae_buckets,
                             len(self.rr), len(self.mae_terms))


def _split_parts(stream: EventStream, model: Model, split: str):
    train, val, test = chronological_split(stream, model.cfg.fractions)
    if split == "train":
        prefix, target = [], train
    elif split == "val":
        prefix, target = train, val
    elif split == "test":
        prefix, target = train + val, test
    else:
        raise ValueError(f"unknown split: {split}")
    offset = sum(len(ev.hyperedges) for ev in prefix)
    return prefix, target, offset


def evaluate_split(stream: EventStream, model: Model, split: str = "test",
                   store_bundles: bool = False):
    """Warm-replay up to the split, then score it; returns (report, collector)."""
    prefix, target, offset = _split_parts(stream, model, split)
    state = warm_replay(prefix, model)
    collector = EvalCollector(model.node_count, store_bundles=store_bundles)
    for items in batch_iter(target, model.cfg.batch_size, start_index=offset):
        res = process_batch(items, state, model, mode="eval", collector=collector)
        commit_batch(state, res)
        del res
    return collector.report(), collector


def evaluate_mrr(stream, model, split="test") -> float:
    return evaluate_split(stream, model, split)[0].mrr


def evaluate_mae(stream, model, split="test") -> float | None:
    return evaluate_split(stream, model, split)[0].mae


def evaluate_recall(stream, model, split="test") -> dict[int, float]:
    return evaluate_split(stream, model, split)[0].recall


def evaluate_auc(stream, model, split="test"):
    report = evaluate_split(stream, model, split)[0]
    return report.auc_macro, report.auc_micro
