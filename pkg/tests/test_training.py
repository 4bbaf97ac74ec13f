import numpy as np
import pytest

from hyperflux.memory import MemoryState
from hyperflux.metrics import evaluate_split
from hyperflux.streams import chronological_split, batch_iter
from hyperflux.synthetic import SyntheticConfig, generate_synthetic
from hyperflux.training import (TrainConfig, build_model, commit_batch, fit,
                                process_batch, warm_replay)


def _setup(hyperedges=240, node_count=16, seed=3, **cfg_kwargs):
    stream = generate_synthetic(SyntheticConfig(node_count=node_count, communities=2,
                                                hyperedges=hyperedges, seed=seed,
                                                concurrency=0.15))
    defaults = dict(epochs=2, batch_size=32, lr=0.001, dim=8, negatives=4,
                    cache_depth=4, heads=2, seed=0)
    defaults.update(cfg_kwargs)
    cfg = TrainConfig(**defaults)
    return stream, cfg


def _states_equal(a: MemoryState, b: MemoryState) -> bool:
    if not (np.array_equal(a.mem, b.mem) and np.array_equal(a.last_update, b.last_update)):
        return False
    if a.last_event_time != b.last_event_time or a.prev_event_time != b.prev_event_time:
        return False
    for pa, pb in ((a.pending_right, b.pending_right), (a.pending_left, b.pending_left)):
        if set(pa) != set(pb):
            return False
        for v in pa:
            if pa[v][1] != pb[v][1] or not np.array_equal(pa[v][0], pb[v][0]):
                return False
    for side in ("right", "left"):
        for ca, cb in zip(a.caches.side(side), b.caches.side(side)):
            if list(ca) != list(cb):
                return False
    return True


def test_zero_learning_rate_leaves_parameters():
    stream, cfg = _setup(lr=0.0)
    train, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    before = model.params.state_dict()
    fit(train, model)
    after = model.params.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_same_seed_identical_loss_curves():
    stream, cfg = _setup()
    train, _, _ = chronological_split(stream, cfg.fractions)
    h1, _ = fit(train, build_model(stream, cfg))
    h2, _ = fit(train, build_model(stream, cfg))
    assert h1 == h2


def test_training_reduces_loss():
    stream, cfg = _setup(hyperedges=400, epochs=4)
    train, _, _ = chronological_split(stream, cfg.fractions)
    hist, _ = fit(train, build_model(stream, cfg))
    assert hist[-1]["total"] < hist[0]["total"]


def test_warm_replay_from_empty_prefix_is_zero():
    stream, cfg = _setup()
    model = build_model(stream, cfg)
    state = warm_replay([], model)
    assert np.array_equal(state.mem, np.zeros_like(state.mem))
    assert not state.pending_right and not state.pending_left


def test_warm_replay_deterministic():
    stream, cfg = _setup()
    model = build_model(stream, cfg)
    s1 = warm_replay(stream.events[:5], model)
    s2 = warm_replay(stream.events[:5], model)
    assert _states_equal(s1, s2)


def test_warm_replay_matches_fit_with_zero_lr():
    stream, cfg = _setup(lr=0.0, epochs=1)
    train, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    _, state_fit = fit(train, model)
    state_replay = warm_replay(train, model)
    assert _states_equal(state_fit, state_replay)


def test_batch_order_invariance_of_losses():
    stream, cfg = _setup(hyperedges=200)
    train, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    state = warm_replay(train[:4], model)
    items = next(batch_iter(train[4:], 64, start_index=sum(len(e.hyperedges)
                                                           for e in train[:4])))
    rng = np.random.default_rng(0)
    res_a = process_batch(items, state.copy(), model, mode="train", epoch=0)
    shuffled = [items[i] for i in rng.permutation(len(items))]
    res_b = process_batch(shuffled, state.copy(), model, mode="train", epoch=0)
    for name in ("total", "loss_t", "loss_k", "loss_a", "loss_h"):
        assert abs(getattr(res_a, name).item() - getattr(res_b, name).item()) < 1e-9


def test_evaluation_does_not_mutate_parameters():
    stream, cfg = _setup()
    model = build_model(stream, cfg)
    checksum = model.params.checksum()
    evaluate_split(stream, model, "test")
    assert model.params.checksum() == checksum


def test_nan_parameter_aborts_with_diagnostics():
    stream, cfg = _setup(epochs=1)
    train, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    model.params["repr.W_mem"].value[0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="non-finite"):
        fit(train, model)


def test_fit_zero_epochs_returns_initial_state():
    stream, cfg = _setup(epochs=0)
    train, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    before = model.params.state_dict()
    history, state = fit(train, model)
    assert history == []
    assert np.array_equal(state.mem, np.zeros_like(state.mem))
    assert all(np.array_equal(before[k], model.params.state_dict()[k]) for k in before)


def test_representations_use_only_prior_state():
    # a node untouched by pending messages keeps its memory row through a batch
    stream, cfg = _setup()
    model = build_model(stream, cfg)
    state = warm_replay(stream.events[:6], model)
    items = next(batch_iter(stream.events[6:], cfg.batch_size,
                            start_index=sum(len(e.hyperedges) for e in stream.events[:6])))
    touched = set(state.pending_right) | set(state.pending_left)
    before = state.mem.copy()
    res = process_batch(items, state, model, mode="replay")
    commit_batch(state, res)
    untouched = [v for v in range(stream.node_count) if v not in touched]
    assert np.array_equal(state.mem[untouched], before[untouched])
