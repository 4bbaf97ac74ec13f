import numpy as np
import pytest
from scipy import stats

from hyperflux.metrics import (EvalCollector, evaluate_split, rank_of, roc_auc)
from hyperflux.streams import DirectedHyperedge, chronological_split
from hyperflux.synthetic import SyntheticConfig, generate_synthetic
from hyperflux.training import TrainConfig, build_model


def _edge(r, l):
    return DirectedHyperedge(tuple(r), tuple(l))


# -- ranks -----------------------------------------------------------------------

def test_rank_arithmetic():
    assert rank_of(5.0, np.array([1.0, 2.0])) == 0.0
    assert rank_of(1.5, np.array([1.0, 2.0])) == 1.0
    rr = [1.0 / (r + 1) for r in (0, 1, 4)]
    assert abs(np.mean(rr) - 0.5667) < 1e-4


def test_rank_handles_ties_symmetrically():
    # a constant scorer lands mid-pack instead of winning
    assert rank_of(3.0, np.full(20, 3.0)) == 10.0


def test_rank_invariant_under_monotone_transform():
    rng = np.random.default_rng(0)
    for _ in range(100):
        true = rng.normal()
        negs = rng.normal(size=20)
        assert rank_of(true, negs) == rank_of(np.exp(true), np.exp(negs))


# -- AUC -----------------------------------------------------------------------------

def test_auc_perfect_separation():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    assert roc_auc(scores, labels) == 1.0


def test_auc_single_pair():
    assert roc_auc(np.array([2.0, 1.0]), np.array([1, 0])) == 1.0


def test_auc_degenerate_is_none():
    assert roc_auc(np.array([1.0, 2.0]), np.array([1, 1])) is None


def test_auc_null_distribution():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=2000)
    labels = rng.random(2000) < 0.3
    assert abs(roc_auc(scores, labels) - 0.5) < 0.03


def test_auc_ties_give_half_credit():
    scores = np.zeros(10)
    labels = np.array([1] * 5 + [0] * 5)
    assert roc_auc(scores, labels) == 0.5


# -- collector-level recall and MAE ---------------------------------------------------

def _portion(node_count, event_nodes, theta_r, targets_ar, t=2.0, t_prev=1.0, mu=None,
             edges=None):
    n = len(event_nodes)
    z = np.zeros((n, node_count))
    return {
        "time": t, "t_prev": t_prev, "dt": t - t_prev,
        "event_nodes": event_nodes,
        "mu": np.zeros(n) if mu is None else mu,
        "theta_right": theta_r, "theta_left": z.copy(),
        "kappa_right": np.zeros((n, 2)), "kappa_left": np.zeros((n, 2)),
        "targets_ar": targets_ar, "targets_al": np.zeros((n, node_count)),
        "targets_kr": np.tile([1.0, 0.0], (n, 1)), "targets_kl": np.tile([1.0, 0.0], (n, 1)),
        "edges": edges or [],
    }


def test_recall_arithmetic_single_node():
    c = EvalCollector(4, percentages=(25, 50))
    theta = np.array([[0.0, 3.0, 1.0, 2.0]])
    targets = np.array([[0.0, 1.0, 1.0, 0.0]])
    c.add_portion(_portion(4, [0], theta, targets))
    rep = c.report()
    # 25% of 4 nodes -> top-1 = node 1: hit 1 of 2 -> 0.5
    assert abs(rep.recall[25] - 0.5) < 1e-12
    # 50% -> top-2 = nodes 1,3: hits 1 of 2 -> 0.5
    assert abs(rep.recall[50] - 0.5) < 1e-12


def test_recall_full_coverage_is_one():
    c = EvalCollector(4, percentages=(50,))
    theta = np.array([[5.0, 4.0, 0.0, 0.0]])
    targets = np.array([[1.0, 1.0, 0.0, 0.0]])
    c.add_portion(_portion(4, [0], theta, targets))
    assert c.report().recall[50] == 1.0


def test_recall_skips_empty_target_sides():
    c = EvalCollector(4, percentages=(50,))
    theta = np.zeros((1, 4))
    targets = np.zeros((1, 4))  # nothing to recall on either side
    c.add_portion(_portion(4, [0], theta, targets))
    assert c.report().recall == {}


def test_recall_random_logits_hits_half_at_fifty_percent():
    rng = np.random.default_rng(2)
    c = EvalCollector(40, percentages=(50,))
    for _ in range(300):
        theta = rng.normal(size=(1, 40))
        targets = np.zeros((1, 40))
        targets[0, rng.choice(40, size=6, replace=False)] = 1.0
        c.add_portion(_portion(40, [0], theta, targets))
    assert abs(c.report().recall[50] - 0.5) < 0.05


def test_mae_event_average():
    c = EvalCollector(4)
    # two nodes with absolute errors 1 and 3 -> event term 2
    mu = np.log(np.array([2.0, 4.0]))
    data = _portion(4, [0, 1], np.zeros((2, 4)), np.zeros((2, 4)), t=2.0, t_prev=1.0,
                    mu=mu, edges=[{"edge": _edge([0], [1]), "index": 0,
                                   "lambda_true": 1.0, "lambda_negs": np.zeros(2)}])
    c.add_portion(data)
    rep = c.report()
    assert abs(rep.mae - 2.0) < 1e-12


def test_mae_perfect_predictor_zero():
    c = EvalCollector(4)
    mu = np.log(np.array([1.0]))
    c.add_portion(_portion(4, [0], np.zeros((1, 4)), np.zeros((1, 4)),
                           t=2.0, t_prev=1.0, mu=mu,
                           edges=[{"edge": _edge([0], [1]), "index": 0,
                                   "lambda_true": 0.0, "lambda_negs": np.zeros(1)}]))
    assert c.report().mae == 0.0


def test_bucket_breakdowns_recombine_to_aggregate():
    rng = np.random.default_rng(3)
    c = EvalCollector(6)
    for i in range(50):
        kr = int(rng.integers(1, 4))
        kl = int(rng.integers(1, 4))
        edge = _edge(list(range(kr)), list(range(kr, kr + kl)))
        c.add_portion(_portion(6, [0], np.zeros((1, 6)), np.zeros((1, 6)),
                               t=float(i + 2), t_prev=float(i + 1),
                               mu=np.array([rng.normal()]),
                               edges=[{"edge": edge, "index": i,
                                       "lambda_true": rng.normal(),
                                       "lambda_negs": rng.normal(size=5)}]))
    rep = c.report()
    total = sum(v * n for v, n in rep.mrr_buckets.values())
    count = sum(n for _, n in rep.mrr_buckets.values())
    assert abs(total / count - rep.mrr) < 1e-9
    total = sum(v * n for v, n in rep.mae_buckets.values())
    count = sum(n for _, n in rep.mae_buckets.values())
    assert abs(total / count - rep.mae) < 1e-9


# -- end-to-end metric checks on a small stream -------------------------------------------

def test_constant_time_predictor_matches_lognormal_mad():
    sigma = 0.4
    stream = generate_synthetic(SyntheticConfig(node_count=20, hyperedges=1600,
                                                sigma_log_dt=sigma, concurrency=0.0,
                                                seed=11))
    cfg = TrainConfig(epochs=1, batch_size=64, dim=8, negatives=2, cache_depth=3,
                      heads=2, seed=0)
    model = build_model(stream, cfg)
    train, _, _ = chronological_split(stream, cfg.fractions)
    gaps = np.concatenate([[train[0].t], np.diff([ev.t for ev in train])])
    median = float(np.median(gaps))
    # freeze the time head at log(median): a constant predictor
    model.params["time_head.W0"].value[:] = 0.0
    model.params["time_head.W1"].value[:] = 0.0
    model.params["time_head.b0"].value[:] = 0.0
    model.params["time_head.b1"].value[:] = np.log(median)
    report, _ = evaluate_split(stream, model, "test")
    expected_mad = np.exp(sigma ** 2 / 2) * (2 * stats.norm.cdf(sigma) - 1)
    assert abs(report.mae - expected_mad) / expected_mad < 0.2


def test_report_serialization_roundtrip():
    c = EvalCollector(4)
    c.add_portion(_portion(4, [0], np.zeros((1, 4)), np.ones((1, 4)), mu=np.zeros(1),
                           edges=[{"edge": _edge([0], [1]), "index": 0,
                                   "lambda_true": 2.0, "lambda_negs": np.zeros(3)}]))
    rep = c.report()
    import json

    doc = json.loads(rep.to_json())
    assert doc["mrr"] == 1.0
    rows = dict(rep.csv_rows())
    assert rows["mrr"] == "1.0"
