"""Checkpoint files: parameters plus optional memory state, JSON, versioned."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .memory import MemoryState, NeighborCaches, RelationRecord
from .nn import ParamStore
from .streams import DirectedHyperedge

__all__ = ["CHECKPOINT_VERSION", "CheckpointVersionError", "save_checkpoint",
           "load_checkpoint", "params_to_doc", "params_from_doc",
           "state_to_doc", "state_from_doc"]

CHECKPOINT_VERSION = "hyperflux.checkpoint.v1"


class CheckpointVersionError(ValueError):
    pass


def params_to_doc(params: ParamStore) -> dict:
    return {name: {"shape": list(params[name].value.shape),
                   "values": params[name].value.ravel().tolist()}
            for name in params.names()}


def params_from_doc(doc: dict, params: ParamStore) -> None:
    state = {}
    for name, entry in doc.items():
        state[name] = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
    params.load_state_dict(state)


def _records_doc(records) -> list:
    return [{"right": list(r.edge.right), "left": list(r.edge.left), "t": r.time}
            for r in records]


def state_to_doc(state: MemoryState) -> dict:
    def msgs(pending):
        return {str(v): {"msg": m.tolist(), "t": t} for v, (m, t) in sorted(pending.items())}

    return {
        "mem": state.mem.tolist(),
        "last_update": state.last_update.tolist(),
        "pending_right": msgs(state.pending_right),
        "pending_left": msgs(state.pending_left),
        "cache_depth": state.caches.depth,
        "caches_right": [_records_doc(c) for c in state.caches.right],
        "caches_left": [_records_doc(c) for c in state.caches.left],
        "last_event_time": state.last_event_time,
        "prev_event_time": state.prev_event_time,
    }


def state_from_doc(doc: dict) -> MemoryState:
    mem = np.array(doc["mem"], dtype=np.float64)
    caches = NeighborCaches(mem.shape[0], int(doc["cache_depth"]))
    for bank, key in ((caches.right, "caches_right"), (caches.left, "caches_left")):
        for v, recs in enumerate(doc[key]):
            for r in recs:
                bank[v].append(RelationRecord(
                    DirectedHyperedge(tuple(r["right"]), tuple(r["left"])), float(r["t"])))

    def msgs(entry):
        return {int(v): (np.array(m["msg"], dtype=np.float64), float(m["t"]))
                for v, m in entry.items()}

    return MemoryState(mem, np.array(doc["last_update"], dtype=np.float64),
                       msgs(doc["pending_right"]), msgs(doc["pending_left"]), caches,
                       float(doc["last_event_time"]), float(doc["prev_event_time"]))


def save_checkpoint(path, params: ParamStore, state: MemoryState | None = None,
                    config: dict | None = None) -> None:
    doc = {"version": CHECKPOINT_VERSION, "params": params_to_doc(params)}
    if state is not None:
        doc["state"] = state_to_doc(state)
    if config is not None:
        doc["config"] = config
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {doc.get('version')!r} not supported "
            f"(expected {CHECKPOINT_VERSION!r})")
    return doc
