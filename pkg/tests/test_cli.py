import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hyperflux.cli import main
from hyperflux.streams import DirectedHyperedge, parse_jsonl


def _synth(tmp_path, name="data.jsonl", hyperedges=160, nodes=16, seed=4, extra=()):
    path = tmp_path / name
    rc = main(["synth", "--out", str(path), "--nodes", str(nodes),
               "--hyperedges", str(hyperedges), "--seed", str(seed), *extra])
    assert rc == 0
    return path


def _train(tmp_path, data, extra=()):
    ckpt = tmp_path / "ckpt.json"
    reports = tmp_path / "reports"
    rc = main(["train", "--dataset", str(data), "--checkpoint", str(ckpt),
               "--report-dir", str(reports), "--epochs", "1", "--batch-size", "32",
               "--dim", "8", "--negatives", "3", "--cache-depth", "3", "--seed", "5",
               *extra])
    return rc, ckpt, reports


def test_synth_and_inspect_roundtrip(tmp_path, capsys):
    data = _synth(tmp_path)
    capsys.readouterr()
    rc = main(["inspect", "--dataset", str(data)])
    assert rc == 0
    out = dict(line.split(" ", 1) for line in capsys.readouterr().out.strip().splitlines())
    assert out["nodes"] == "16"
    assert out["hyperedges"] == "160"
    assert int(out["max_concurrency"]) >= 1
    assert float(out["dt_min"]) > 0


def test_inspect_missing_dataset_exit_code(tmp_path, capsys):
    rc = main(["inspect", "--dataset", str(tmp_path / "nope.jsonl")])
    assert rc == 2


def test_train_writes_artifacts(tmp_path):
    data = _synth(tmp_path)
    rc, ckpt, reports = _train(tmp_path, data)
    assert rc == 0
    assert ckpt.exists()
    assert (reports / "loss_curve.csv").exists()
    assert (reports / "resolved_config.json").exists()
    doc = json.loads(ckpt.read_text())
    assert doc["version"].startswith("hyperflux")
    resolved = json.loads((reports / "resolved_config.json").read_text())
    assert resolved["epochs"] == 1 and resolved["seed"] == 5
    curve = (reports / "loss_curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,total,time,size,adjacency,hyperedge"
    assert len(curve) == 2


def test_train_missing_dataset_is_exit_2(tmp_path, capsys):
    rc, _, _ = _train(tmp_path, tmp_path / "missing.jsonl")
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_train_rejects_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "wat": 3}))
    rc = main(["train", "--config", str(cfg)])
    assert rc == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_flag_overrides_config_file(tmp_path):
    data = _synth(tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": str(data), "checkpoint": str(tmp_path / "c.json"),
        "report_dir": str(tmp_path / "r"), "epochs": 7, "batch_size": 32,
        "dim": 8, "negatives": 3, "cache_depth": 3, "seed": 5}))
    rc = main(["train", "--config", str(cfg), "--epochs", "1"])
    assert rc == 0
    resolved = json.loads((tmp_path / "r" / "resolved_config.json").read_text())
    assert resolved["epochs"] == 1


def test_zero_epochs_checkpoint_is_initialization(tmp_path):
    data = _synth(tmp_path)
    rc, ckpt, _ = _train(tmp_path, data, extra=("--epochs", "0"))
    assert rc == 0
    doc = json.loads(ckpt.read_text())
    from hyperflux.checkpoint import params_from_doc
    from hyperflux.training import TrainConfig, build_model

    stream = parse_jsonl(data).rescaled(parse_jsonl(data).mean_interevent())
    cfg = TrainConfig(epochs=0, batch_size=32, dim=8, negatives=3, cache_depth=3, seed=5)
    fresh = build_model(stream, cfg)
    init = {k: v.copy() for k, v in fresh.params.state_dict().items()}
    params_from_doc(doc["params"], fresh.params)
    for name, value in init.items():
        assert np.array_equal(value, fresh.params[name].value)
    assert np.allclose(np.array(doc["state"]["mem"]), 0.0)


def test_evaluate_writes_reports_and_is_deterministic(tmp_path):
    data = _synth(tmp_path)
    rc, ckpt, _ = _train(tmp_path, data)
    assert rc == 0
    outs = []
    for sub in ("r1", "r2"):
        rdir = tmp_path / sub
        rc = main(["evaluate", "--checkpoint", str(ckpt), "--dataset", str(data),
                   "--split", "test", "--report-dir", str(rdir)])
        assert rc == 0
        assert (rdir / "metrics.csv").exists()
        outs.append((rdir / "metrics.json").read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert 0.0 <= doc["mrr"] <= 1.0
    assert doc["config"]["split"] == "test"


def test_evaluate_version_mismatch_is_exit_3(tmp_path, capsys):
    data = _synth(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": "nope", "params": {}}))
    rc = main(["evaluate", "--checkpoint", str(bad), "--dataset", str(data),
               "--report-dir", str(tmp_path / "r")])
    assert rc == 3


def test_forecast_emits_valid_predictions(tmp_path):
    data = _synth(tmp_path)
    rc, ckpt, _ = _train(tmp_path, data)
    out = tmp_path / "pred.jsonl"
    rc = main(["forecast", "--checkpoint", str(ckpt), "--dataset", str(data),
               "--out", str(out), "--at-end", "--top-nodes", "4"])
    assert rc == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 16
    flagged = 0
    for line in lines:
        assert line["dt"] > 0
        if "candidate" in line:
            flagged += 1
            edge = DirectedHyperedge(tuple(line["candidate"]["right"]),
                                     tuple(line["candidate"]["left"]))
            assert all(0 <= v < 16 for v in edge.nodes)
            assert 0.0 <= line["score"] <= 1.0
    assert flagged >= 1


def test_seed_env_fallback(tmp_path, monkeypatch):
    data = _synth(tmp_path)
    monkeypatch.setenv("HYPERFLUX_SEED", "11")
    ckpt = tmp_path / "c.json"
    rc = main(["train", "--dataset", str(data), "--checkpoint", str(ckpt),
               "--report-dir", str(tmp_path / "r"), "--epochs", "0", "--batch-size",
               "32", "--dim", "8"])
    assert rc == 0
    resolved = json.loads((tmp_path / "r" / "resolved_config.json").read_text())
    assert resolved["seed"] == 11


def test_console_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "hyperflux.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "train" in proc.stdout
