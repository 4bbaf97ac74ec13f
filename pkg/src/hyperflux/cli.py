"""Command-line interface: train, evaluate, forecast, synth, inspect.

Exit codes: 0 success, 1 configuration/schema error, 2 dataset error,
3 checkpoint version mismatch, 4 numeric failure during training.
Every command is deterministic given its config and seed; reports embed
the fully resolved configuration.  The HYPERFLUX_SEED environment
variable supplies the seed when neither config file nor flag does.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import (CHECKPOINT_VERSION, CheckpointVersionError, load_checkpoint,
                         params_from_doc, params_to_doc, save_checkpoint,
                         state_from_doc)
from .heads import generate_candidates, PredictionBundle
from .metrics import evaluate_split
from .predictor import directed_score
from .streams import DatasetError, EventStream, chronological_split, parse_jsonl, serialize_jsonl
from .synthetic import SyntheticConfig, generate_synthetic
from .training import (Model, TrainConfig, build_model, fit, finalize_state,
                       node_reps_at, warm_replay)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_VERSION = 3
EXIT_NUMERIC = 4

_CONFIG_SCHEMA = {
    "dataset": str,
    "checkpoint": str,
    "report_dir": str,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "dim": int,
    "negatives": int,
    "s_t": float,
    "cache_depth": int,
    "heads": int,
    "seed": int,
    "fractions": list,
    "scale_times": bool,
}

_DEFAULTS = {
    "epochs": 100, "batch_size": 128, "lr": 0.001, "dim": 64, "negatives": 20,
    "s_t": 1.0, "cache_depth": 10, "heads": 2, "fractions": [0.5, 0.25, 0.25],
    "scale_times": True,
}


class ConfigError(ValueError):
    pass


def _validate_config(doc: dict) -> dict:
    unknown = set(doc) - set(_CONFIG_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, value in doc.items():
        want = _CONFIG_SCHEMA[key]
        if want is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, want) or isinstance(value, bool) and want is not bool:
            raise ConfigError(f"config key {key!r} must be {want.__name__}")
        out[key] = value
    if "fractions" in out:
        fr = out["fractions"]
        if len(fr) != 3 or not all(isinstance(x, (int, float)) for x in fr):
            raise ConfigError("fractions must be three numbers")
        out["fractions"] = [float(x) for x in fr]
    return out


def _resolve_config(args) -> dict:
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = _validate_config(doc)
    for key in _CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            doc[key] = flag
    if "seed" not in doc:
        env = os.environ.get("HYPERFLUX_SEED")
        doc["seed"] = int(env) if env else 0
    merged = dict(_DEFAULTS)
    merged.update(_validate_config(doc))
    return merged


def _train_config(doc: dict) -> TrainConfig:
    return TrainConfig(epochs=doc["epochs"], batch_size=doc["batch_size"], lr=doc["lr"],
                       dim=doc["dim"], negatives=doc["negatives"], s_t=doc["s_t"],
                       cache_depth=doc["cache_depth"], heads=doc["heads"],
                       seed=doc["seed"], fractions=tuple(doc["fractions"]))


def _load_dataset(doc: dict) -> tuple[EventStream, float]:
    path = doc.get("dataset")
    if not path:
        raise ConfigError("no dataset path configured")
    if not Path(path).exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    stream = parse_jsonl(path)
    scale = stream.mean_interevent() if doc.get("scale_times", True) else 1.0
    if scale != 1.0:
        stream = stream.rescaled(scale)
    return stream, scale


def _rebuild_model(ckpt_doc: dict, stream: EventStream) -> tuple[Model, dict]:
    doc = dict(_DEFAULTS)
    doc.update(ckpt_doc.get("config", {}))
    doc.setdefault("seed", 0)
    cfg = _train_config(doc)
    model = build_model(stream, cfg)
    params_from_doc(ckpt_doc["params"], model.params)
    return model, doc


# -- commands ------------------------------------------------------------------

def cmd_train(args) -> int:
    doc = _resolve_config(args)
    if not doc.get("checkpoint") or not doc.get("report_dir"):
        raise ConfigError("train requires checkpoint and report_dir paths")
    stream, scale = _load_dataset(doc)
    cfg = _train_config(doc)
    train_events, _, _ = chronological_split(stream, cfg.fractions)
    model = build_model(stream, cfg)
    history, state = fit(train_events, model)

    report_dir = Path(doc["report_dir"])
    report_dir.mkdir(parents=True, exist_ok=True)
    resolved = dict(doc, time_scale=scale)
    save_checkpoint(doc["checkpoint"], model.params, state=state, config=resolved)
    curve = report_dir / "loss_curve.csv"
    with curve.open("w") as f:
        f.write("epoch,total,time,size,adjacency,hyperedge\n")
        for row in history:
            f.write(f"{row['epoch']},{row['total']!r},{row['time']!r},{row['size']!r},"
                    f"{row['adjacency']!r},{row['hyperedge']!r}\n")
    (report_dir / "resolved_config.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=2) + "\n")
    last = history[-1]["total"] if history else float("nan")
    print(f"trained {cfg.epochs} epochs on {sum(len(e.hyperedges) for e in train_events)} "
          f"hyperedges; final mean batch loss {last:.4f}")
    print(f"checkpoint: {doc['checkpoint']}")
    print(f"reports: {curve}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    doc = dict(ckpt.get("config", {}))
    doc["dataset"] = args.dataset
    if args.report_dir:
        doc["report_dir"] = args.report_dir
    if not doc.get("report_dir"):
        raise ConfigError("evaluate requires a report_dir")
    stream, scale = _load_dataset(doc)
    model, doc = _rebuild_model(ckpt, stream)
    report, _ = evaluate_split(stream, model, split=args.split)

    report_dir = Path(doc["report_dir"] if not args.report_dir else args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["config"] = dict(doc, dataset=args.dataset, split=args.split, time_scale=scale)
    (report_dir / "metrics.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    with (report_dir / "metrics.csv").open("w") as f:
        f.write("metric,value\n")
        for key, value in report.csv_rows():
            f.write(f"{key},{value}\n")
    print(f"split={args.split} mrr={report.mrr:.4f} mae={report.mae} "
          f"auc_macro={report.auc_macro} n_edges={report.n_edges}")
    print(f"reports: {report_dir / 'metrics.json'}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    doc = dict(ckpt.get("config", {}))
    doc["dataset"] = args.dataset
    stream, scale = _load_dataset(doc)
    model, doc = _rebuild_model(ckpt, stream)

    if args.at_end:
        state = warm_replay(stream.events, model)
    else:
        state = state_from_doc(ckpt["state"]) if "state" in ckpt else warm_replay(stream.events, model)
    finalize_state(state, model)
    t_end = state.last_event_time

    nodes = list(range(model.node_count))
    reps = node_reps_at(state, model, [(v, t_end) for v in nodes])
    from .heads import size_logits, time_mu, adjacency_logits

    reps_t = ad.constant(reps)
    mem_t = ad.constant(state.mem)
    mu = time_mu(reps_t, model.params).value[:, 0]
    dt_hat = np.exp(mu)
    theta_r = adjacency_logits(reps_t, mem_t, model.params, "right").value
    theta_l = adjacency_logits(reps_t, mem_t, model.params, "left").value
    kappa_r = size_logits(reps_t, model.params, "right").value
    kappa_l = size_logits(reps_t, model.params, "left").value

    flagged = sorted(np.argsort(dt_hat, kind="stable")[:args.top_nodes].tolist())
    out_path = Path(args.out)
    with out_path.open("w") as f:
        for v in nodes:
            line = {"node": v, "dt": float(dt_hat[v] * scale)}
            if v in flagged:
                bundle = PredictionBundle(v, float(mu[v]), theta_r[v], theta_l[v],
                                          kappa_r[v], kappa_l[v])
                cands = generate_candidates([bundle])
                if cands:
                    cand = cands[0]
                    t_pred = t_end + float(dt_hat[v])
                    members = sorted(set(cand.right) | set(cand.left))
                    rep_rows = node_reps_at(state, model, [(u, t_pred) for u in members])
                    lookup = {u: i for i, u in enumerate(members)}
                    r = ad.constant(rep_rows[[lookup[u] for u in cand.right]][None, :, :])
                    l = ad.constant(rep_rows[[lookup[u] for u in cand.left]][None, :, :])
                    lam, _, _ = directed_score(r, l, model.params)
                    score = float(1.0 / (1.0 + np.exp(-lam.value[0])))
                    line["candidate"] = {"right": list(cand.right), "left": list(cand.left)}
                    line["score"] = score
            f.write(json.dumps(line, sort_keys=True) + "\n")
    print(f"forecast for {len(nodes)} nodes written to {out_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(node_count=args.nodes, communities=args.communities,
                          hyperedges=args.hyperedges, mean_log_dt=args.mu,
                          sigma_log_dt=args.sigma, pair_fraction=args.pair_fraction,
                          max_group_right=args.max_group_right,
                          max_group_left=args.max_group_left,
                          concurrency=args.concurrency, horizon=args.horizon,
                          seed=args.seed if args.seed is not None
                          else int(os.environ.get("HYPERFLUX_SEED", 0)))
    stream = generate_synthetic(cfg)
    serialize_jsonl(stream, args.out)
    print(f"wrote {stream.hyperedge_count()} hyperedges over {stream.node_count} nodes "
          f"to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    stream = parse_jsonl(args.dataset)
    rights = {ev_h.edge.right for ev_h in stream.iter_hyperedges()}
    lefts = {ev_h.edge.left for ev_h in stream.iter_hyperedges()}
    ts = np.array([ev.t for ev in stream.events])
    gaps = np.diff(ts) if len(ts) > 1 else np.array([])
    stats = [
        ("nodes", stream.node_count),
        ("hyperedges", stream.hyperedge_count()),
        ("unique_right", len(rights)),
        ("unique_left", len(lefts)),
        ("time_span", float(ts[-1] - ts[0]) if len(ts) else 0.0),
        ("dt_mean", float(gaps.mean()) if len(gaps) else 0.0),
        ("dt_max", float(gaps.max()) if len(gaps) else 0.0),
        ("dt_min", float(gaps.min()) if len(gaps) else 0.0),
        ("max_concurrency", max(len(ev.hyperedges) for ev in stream.events)),
    ]
    for key, value in stats:
        print(f"{key} {value}")
    return EXIT_OK


# -- argument plumbing -----------------------------------------------------------

def _add_config_flags(sp):
    sp.add_argument("--config", help="JSON run configuration")
    sp.add_argument("--dataset")
    sp.add_argument("--checkpoint")
    sp.add_argument("--report-dir", dest="report_dir")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--negatives", type=int)
    sp.add_argument("--s-t", dest="s_t", type=float)
    sp.add_argument("--cache-depth", dest="cache_depth", type=int)
    sp.add_argument("--heads", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--fractions", type=lambda s: [float(x) for x in s.split(",")])
    sp.add_argument("--no-scale-times", dest="scale_times", action="store_false",
                    default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyperflux",
                                 description="directed group-interaction forecasting")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a checkpoint on a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.add_argument("--report-dir", dest="report_dir")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("forecast", help="dump next-event predictions as JSONL")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--at-end", action="store_true",
                    help="warm the memory by replaying the full dataset")
    sp.add_argument("--top-nodes", dest="top_nodes", type=int, default=10)
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("synth", help="generate a planted synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--nodes", type=int, default=50)
    sp.add_argument("--communities", type=int, default=2)
    sp.add_argument("--hyperedges", type=int, default=5000)
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--sigma", type=float, default=0.25)
    sp.add_argument("--pair-fraction", dest="pair_fraction", type=float, default=0.7)
    sp.add_argument("--max-group-right", dest="max_group_right", type=int, default=3)
    sp.add_argument("--max-group-left", dest="max_group_left", type=int, default=3)
    sp.add_argument("--concurrency", type=float, default=0.05)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("inspect", help="print dataset statistics")
    sp.add_argument("--dataset", required=True)
    sp.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        if isinstance(e, CheckpointVersionError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VERSION
        if isinstance(e, DatasetError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
