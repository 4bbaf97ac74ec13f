"""Timed directed-hyperedge streams: data model, JSONL io, targets, batching.

A dataset is a chronological sequence of events; each event carries one or
more directed hyperedges (a right node set acting on a left node set).
Files are JSON Lines, one hyperedge per line ``{"t": .., "right": [..],
"left": [..]}``, with consecutive equal-time lines merged into one event.
An optional sidecar ``<path>.header.json`` declares ``node_count`` and the
size caps; otherwise both are inferred.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "DatasetError",
    "DirectedHyperedge",
    "TimedEvent",
    "EventStream",
    "NodeTargets",
    "BatchItem",
    "parse_jsonl",
    "serialize_jsonl",
    "build_node_targets",
    "chronological_split",
    "batch_iter",
]


class DatasetError(ValueError):
    """Raised for malformed files or invariant violations in a stream."""


def _clean_side(nodes, label: str) -> tuple[int, ...]:
    nodes = tuple(int(v) for v in nodes)
    if not nodes:
        raise DatasetError(f"{label} side is empty")
    if any(v < 0 for v in nodes):
        raise DatasetError(f"{label} side contains a negative node id")
    if len(set(nodes)) != len(nodes):
        raise DatasetError(f"{label} side contains duplicate nodes")
    return tuple(sorted(nodes))


@dataclass(frozen=True, eq=False)
class DirectedHyperedge:
    """A relation from a set of source nodes (right) to target nodes (left)."""

    right: tuple[int, ...]
    left: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "right", _clean_side(self.right, "right"))
        object.__setattr__(self, "left", _clean_side(self.left, "left"))
        if self.right == self.left:
            raise DatasetError("right and left sides must not be the same set")
        object.__setattr__(self, "_hash", hash((self.right, self.left)))

    def __eq__(self, other):
        return (isinstance(other, DirectedHyperedge) and self.right == other.right
                and self.left == other.left)

    def __hash__(self):
        return self._hash

    @property
    def kr(self) -> int:
        return len(self.right)

    @property
    def kl(self) -> int:
        return len(self.left)

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.right) | set(self.left)))


@dataclass(frozen=True)
class TimedEvent:
    """One or more hyperedges occurring at the same instant."""

    t: float
    hyperedges: tuple[DirectedHyperedge, ...]

    def __post_init__(self):
        if self.t < 0:
            raise DatasetError("event time must be nonnegative")
        if not self.hyperedges:
            raise DatasetError("event has no hyperedges")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "hyperedges", tuple(self.hyperedges))


class EventStream:
    """Immutable chronological stream of timed hyperedge events."""

    def __init__(self, node_count: int, events, kr_max: int | None = None,
                 kl_max: int | None = None):
        events = tuple(events)
        if node_count <= 0:
            raise DatasetError("node_count must be positive")
        seen_kr, seen_kl = 0, 0
        prev_t = -np.inf
        for ev in events:
            if ev.t <= prev_t:
                raise DatasetError(f"non-monotone time at t={ev.t}")
            prev_t = ev.t
            for h in ev.hyperedges:
                if h.nodes[-1] >= node_count:
                    raise DatasetError(f"node id {h.nodes[-1]} exceeds node_count={node_count}")
                seen_kr = max(seen_kr, h.kr)
                seen_kl = max(seen_kl, h.kl)
        self.node_count = int(node_count)
        self.events = events
        self.kr_max = int(kr_max) if kr_max is not None else max(seen_kr, 1)
        self.kl_max = int(kl_max) if kl_max is not None else max(seen_kl, 1)
        if seen_kr > self.kr_max or seen_kl > self.kl_max:
            raise DatasetError("observed hyperedge size exceeds declared cap")

    def __len__(self):
        return len(self.events)

    def hyperedge_count(self) -> int:
        return sum(len(ev.hyperedges) for ev in self.events)

    def iter_hyperedges(self) -> Iterator["BatchItem"]:
        """Flatten to (global index, event time, hyperedge) in stream order."""
        idx = 0
        for ev in self.events:
            for h in ev.hyperedges:
                yield BatchItem(idx, ev.t, h)
                idx += 1

    def mean_interevent(self) -> float:
        if len(self.events) < 2:
            return 1.0
        ts = np.array([ev.t for ev in self.events])
        return float(np.diff(ts).mean())

    def rescaled(self, factor: float) -> "EventStream":
        """Divide all event times by `factor` (e.g. the mean inter-event gap)."""
        if factor <= 0:
            raise DatasetError("scale factor must be positive")
        events = [TimedEvent(ev.t / factor, ev.hyperedges) for ev in self.events]
        return EventStream(self.node_count, events, self.kr_max, self.kl_max)


class BatchItem(NamedTuple):
    index: int
    time: float
    edge: DirectedHyperedge


@dataclass
class NodeTargets:
    """Per-node supervision for one event: adjacency and size indicator vectors."""

    adj_right: np.ndarray
    adj_left: np.ndarray
    size_right: np.ndarray
    size_left: np.ndarray


def _header_path(path) -> Path:
    return Path(str(path) + ".header.json")


def parse_jsonl(path) -> EventStream:
    """Load a stream from a JSON Lines file (plus optional sidecar header)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")

    declared = None
    hp = _header_path(path)
    if hp.exists():
        declared = json.loads(hp.read_text())

    raw: list[tuple[float, DirectedHyperedge]] = []
    with path.open() as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                t = float(obj["t"])
                edge = DirectedHyperedge(tuple(obj["right"]), tuple(obj["left"]))
            except (KeyError, TypeError, ValueError, DatasetError) as e:
                raise DatasetError(f"{path}:{lineno}: malformed line ({e})") from e
            if t < 0:
                raise DatasetError(f"{path}:{lineno}: negative time")
            raw.append((t, edge))
    if not raw:
        raise DatasetError(f"{path}: empty dataset")

    if declared is None:
        ids = sorted({v for _, e in raw for v in e.nodes})
        remap = {v: i for i, v in enumerate(ids)}
        raw = [(t, DirectedHyperedge(tuple(remap[v] for v in e.right),
                                     tuple(remap[v] for v in e.left))) for t, e in raw]
        node_count = len(ids)
        kr_max = kl_max = None
    else:
        node_count = int(declared["node_count"])
        kr_max = declared.get("kr_max")
        kl_max = declared.get("kl_max")
        overflow = max(v for _, e in raw for v in e.nodes)
        if overflow >= node_count:
            raise DatasetError(f"node id {overflow} overflows declared node_count={node_count}")

    events: list[TimedEvent] = []
    group_t, group_edges = raw[0][0], [raw[0][1]]
    for t, edge in raw[1:]:
        if t == group_t:
            group_edges.append(edge)
        else:
            events.append(TimedEvent(group_t, group_edges))
            group_t, group_edges = t, [edge]
    events.append(TimedEvent(group_t, group_edges))

    for prev, cur in zip(events, events[1:]):
        if cur.t <= prev.t:
            raise DatasetError(f"non-monotone time: {cur.t} after {prev.t}")
    return EventStream(node_count, events, kr_max, kl_max)


def serialize_jsonl(stream: EventStream, path) -> None:
    """Write a stream back to JSONL plus its sidecar header."""
    path = Path(path)
    with path.open("w") as f:
        for ev in stream.events:
            for h in ev.hyperedges:
                f.write(json.dumps({"t": ev.t, "right": list(h.right), "left": list(h.left)}) + "\n")
    header = {"node_count": stream.node_count, "kr_max": stream.kr_max, "kl_max": stream.kl_max}
    _header_path(path).write_text(json.dumps(header, sort_keys=True) + "\n")


def build_node_targets(event: TimedEvent, node_count: int, kr_max: int,
                       kl_max: int) -> dict[int, NodeTargets]:
    """Targets for every node on the right of some hyperedge in `event`.

    adj_right[j] marks right-side co-members (diagonal excluded), adj_left[j]
    marks left-side partners, and the size vectors mark the observed right /
    left sizes (bit k-1 means size exactly k) of the hyperedges the node
    initiates.
    """
    out: dict[int, NodeTargets] = {}
    for h in event.hyperedges:
        if h.nodes[-1] >= node_count:
            raise DatasetError(f"node id {h.nodes[-1]} out of range")
        if h.kr > kr_max or h.kl > kl_max:
            raise DatasetError("hyperedge exceeds size bounds")
        for i in h.right:
            tg = out.get(i)
            if tg is None:
                tg = NodeTargets(np.zeros(node_count), np.zeros(node_count),
                                 np.zeros(kr_max), np.zeros(kl_max))
                out[i] = tg
            for j in h.right:
                if j != i:
                    tg.adj_right[j] = 1.0
            for j in h.left:
                tg.adj_left[j] = 1.0
            tg.size_right[h.kr - 1] = 1.0
            tg.size_left[h.kl - 1] = 1.0
    return out


def chronological_split(stream: EventStream, fractions=(0.5, 0.25, 0.25)):
    """Split into (train, val, test) event lists counting hyperedges.

    Boundaries are placed at cumulative hyperedge counts; an event whose
    hyperedges straddle a boundary goes wholly to the earlier split.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError("fractions must be three values summing to 1")
    total = stream.hyperedge_count()
    b1 = total * fractions[0]
    b2 = total * (fractions[0] + fractions[1])
    splits: tuple[list, list, list] = ([], [], [])
    cum = 0
    for ev in stream.events:
        if cum < b1:
            splits[0].append(ev)
        elif cum < b2:
            splits[1].append(ev)
        else:
            splits[2].append(ev)
        cum += len(ev.hyperedges)
    if any(not part for part in splits):
        raise DatasetError("empty split")
    return splits


def batch_iter(events, batch_size: int, start_index: int = 0) -> Iterator[list[BatchItem]]:
    """Consecutive fixed-size groups of hyperedges, order preserved.

    Events are flattened; each item keeps its event time and a global
    hyperedge index (offset by `start_index`).  The final batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    batch: list[BatchItem] = []
    idx = start_index
    for ev in events:
        for h in ev.hyperedges:
            batch.append(BatchItem(idx, ev.t, h))
            idx += 1
            if len(batch) == batch_size:
                yield batch
                batch = []
    if batch:
        yield batch
