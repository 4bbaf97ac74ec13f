"""Tour of the data model: synthesize a stream, inspect it, build targets.

Run:  python3 demos/01_dataset_tour.py
"""

import numpy as np

from hyperflux import (build_node_targets, chronological_split, generate_synthetic,
                       parse_jsonl, serialize_jsonl)
from hyperflux.synthetic import SyntheticConfig

# A planted-structure stream: two communities, right side of every relation
# stays inside one community, the left side lives in its partner community.
cfg = SyntheticConfig(node_count=20, communities=2, hyperedges=200, seed=7)
stream = generate_synthetic(cfg)
print(f"{stream.hyperedge_count()} hyperedges over {stream.node_count} nodes, "
      f"{len(stream.events)} events, size caps ({stream.kr_max}, {stream.kl_max})")

first = stream.events[0]
print(f"first event at t={first.t:.3f}:")
for h in first.hyperedges:
    print(f"  right {h.right} -> left {h.left}")

# Event-level supervision: adjacency vectors (who co-occurs with whom) and
# size indicator vectors, for every node on the right of some hyperedge.
targets = build_node_targets(first, stream.node_count, stream.kr_max, stream.kl_max)
for node, tg in targets.items():
    print(f"node {node}: right-neighbors {np.flatnonzero(tg.adj_right).tolist()}, "
          f"left-partners {np.flatnonzero(tg.adj_left).tolist()}, "
          f"right sizes {np.flatnonzero(tg.size_right) + 1}")

# Chronological splitting counts hyperedges, never breaks an event apart.
train, val, test = chronological_split(stream, (0.5, 0.25, 0.25))
print(f"split hyperedges: train={sum(len(e.hyperedges) for e in train)}, "
      f"val={sum(len(e.hyperedges) for e in val)}, "
      f"test={sum(len(e.hyperedges) for e in test)}")

# Round trip through the JSONL format.
serialize_jsonl(stream, "/tmp/hyperflux_demo.jsonl")
again = parse_jsonl("/tmp/hyperflux_demo.jsonl")
assert again.hyperedge_count() == stream.hyperedge_count()
print("serialize -> parse round trip ok")
