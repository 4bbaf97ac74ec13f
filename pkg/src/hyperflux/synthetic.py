"""Synthetic ground-truth generator with planted community structure.

Inter-event gaps are lognormal.  Nodes are partitioned into communities;
every hyperedge starts from an initiator node v in some community and
points at that community's partner group.  A configurable fraction of
events are deterministic pairs ({v}, {partner(v)}); the rest are groups
drawn inside the two linked communities, with partner(v) always present
on the left.  The planted rule "right inside community j implies left
inside community j+1 (mod c)" therefore holds for every edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import DirectedHyperedge, EventStream, TimedEvent

__all__ = ["SyntheticConfig", "generate_synthetic", "community_blocks", "partner_of"]


@dataclass
class SyntheticConfig:
    node_count: int = 50
    communities: int = 2
    hyperedges: int = 5000
    mean_log_dt: float = 0.0
    sigma_log_dt: float = 0.25
    pair_fraction: float = 0.2
    max_group_right: int = 3
    max_group_left: int = 3
    popularity: float = 1.5
    concurrency: float = 0.05
    horizon: float | None = None
    seed: int = 0

    def validate(self):
        if self.node_count <= 0:
            raise ValueError("node_count must be positive")
        if self.communities <= 0 or self.communities > self.node_count:
            raise ValueError("communities must be in 1..node_count")
        if self.hyperedges <= 0:
            raise ValueError("hyperedges must be positive")
        if self.sigma_log_dt <= 0:
            raise ValueError("sigma_log_dt must be positive")
        if not 0.0 <= self.pair_fraction <= 1.0:
            raise ValueError("pair_fraction must be in [0, 1]")
        if self.popularity < 0:
            raise ValueError("popularity exponent must be nonnegative")
        block = self.node_count // self.communities
        if block < 1:
            raise ValueError("empty community")
        if self.max_group_right > block or self.max_group_left > block:
            raise ValueError("group sizes exceed community size")


def community_blocks(node_count: int, communities: int) -> list[np.ndarray]:
    """Partition 0..node_count-1 into near-equal contiguous blocks."""
    bounds = np.linspace(0, node_count, communities + 1).astype(int)
    return [np.arange(bounds[j], bounds[j + 1]) for j in range(communities)]


def partner_of(v: int, blocks: list[np.ndarray]) -> int:
    """The fixed partner of v in the next community (positions aligned)."""
    for j, block in enumerate(blocks):
        if block[0] <= v <= block[-1]:
            nxt = blocks[(j + 1) % len(blocks)]
            return int(nxt[(v - block[0]) % len(nxt)])
    raise ValueError(f"node {v} not in any community")


def _block_weights(block, alpha):
    """Within-community draw weights, heavier toward low positions."""
    w = (np.arange(len(block)) + 1.0) ** (-alpha)
    return w / w.sum()


def _draw_edge(rng, blocks, weights, cfg) -> DirectedHyperedge:
    j = int(rng.integers(len(blocks)))
    block = blocks[j]
    v = int(rng.choice(block, p=weights[j]))
    u = partner_of(v, blocks)
    if rng.random() < cfg.pair_fraction:
        return DirectedHyperedge((v,), (u,))
    partner_block = blocks[(j + 1) % len(blocks)]
    kr = int(rng.integers(2, cfg.max_group_right + 1)) if cfg.max_group_right >= 2 else 1
    kl = int(rng.integers(2, cfg.max_group_left + 1)) if cfg.max_group_left >= 2 else 1
    right = {v}
    if kr > 1:
        keep = block != v
        w = weights[j][keep]
        right.update(int(x) for x in
                     rng.choice(block[keep], size=kr - 1, replace=False, p=w / w.sum()))
    left = {u}
    if kl > 1:
        jp = (j + 1) % len(blocks)
        keep = partner_block != u
        w = weights[jp][keep]
        left.update(int(x) for x in
                    rng.choice(partner_block[keep], size=kl - 1, replace=False, p=w / w.sum()))
    return DirectedHyperedge(tuple(right), tuple(left))


def generate_synthetic(cfg: SyntheticConfig) -> EventStream:
    """Generate a stream with exactly ``cfg.hyperedges`` edges (or up to the horizon)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    blocks = community_blocks(cfg.node_count, cfg.communities)
    weights = [_block_weights(b, cfg.popularity) for b in blocks]

    events = []
    t = 0.0
    remaining = cfg.hyperedges
    while remaining > 0:
        t += float(rng.lognormal(cfg.mean_log_dt, cfg.sigma_log_dt))
        if cfg.horizon is not None and t > cfg.horizon:
            break
        count = 1
        while count < remaining and rng.random() < cfg.concurrency:
            count += 1
        edges = [_draw_edge(rng, blocks, weights, cfg) for _ in range(count)]
        events.append(TimedEvent(t, edges))
        remaining -= count
    if not events:
        raise ValueError("horizon too small: no events generated")
    return EventStream(cfg.node_count, events)
