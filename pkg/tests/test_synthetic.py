import numpy as np
import pytest

from hyperflux.synthetic import (SyntheticConfig, community_blocks, generate_synthetic,
                                 partner_of)


def test_same_seed_identical_streams():
    cfg = SyntheticConfig(node_count=20, hyperedges=200, seed=42)
    a = generate_synthetic(cfg)
    b = generate_synthetic(cfg)
    assert len(a.events) == len(b.events)
    for ea, eb in zip(a.events, b.events):
        assert ea.t == eb.t and list(ea.hyperedges) == list(eb.hyperedges)


def test_exact_hyperedge_count():
    stream = generate_synthetic(SyntheticConfig(node_count=20, hyperedges=333, seed=3,
                                                concurrency=0.3))
    assert stream.hyperedge_count() == 333


def test_lognormal_median_of_gaps():
    cfg = SyntheticConfig(node_count=20, hyperedges=12000, mean_log_dt=0.0,
                          sigma_log_dt=0.25, concurrency=0.0, seed=5)
    stream = generate_synthetic(cfg)
    gaps = np.diff([ev.t for ev in stream.events])
    assert len(gaps) >= 10_000
    assert abs(np.median(gaps) - 1.0) < 0.1


def test_planted_community_rule_always_holds():
    cfg = SyntheticConfig(node_count=24, communities=3, hyperedges=600, seed=9,
                          pair_fraction=0.5)
    stream = generate_synthetic(cfg)
    blocks = community_blocks(cfg.node_count, cfg.communities)

    def community(v):
        return next(j for j, b in enumerate(blocks) if b[0] <= v <= b[-1])

    for ev in stream.events:
        for h in ev.hyperedges:
            right_comms = {community(v) for v in h.right}
            left_comms = {community(v) for v in h.left}
            assert len(right_comms) == 1
            j = right_comms.pop()
            assert left_comms == {(j + 1) % cfg.communities}
            # the fixed partner of the initiator is always on the left
            partners = {partner_of(v, blocks) for v in h.right}
            assert partners & set(h.left)


def test_invalid_configs_raise():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(node_count=0))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(node_count=10, communities=0))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(node_count=10, communities=11))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(node_count=4, communities=2,
                                           max_group_right=5))


def test_horizon_cuts_generation():
    cfg = SyntheticConfig(node_count=20, hyperedges=10_000, horizon=50.0, seed=1)
    stream = generate_synthetic(cfg)
    assert stream.events[-1].t <= 50.0
    assert stream.hyperedge_count() < 10_000
