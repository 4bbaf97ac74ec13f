"""End-to-end forecasting through the CLI: synth -> train -> forecast.

Run:  python3 demos/04_forecasting.py
"""

import json
import tempfile
from pathlib import Path

from hyperflux.cli import main

work = Path(tempfile.mkdtemp(prefix="hyperflux_demo_"))
data = work / "stream.jsonl"
ckpt = work / "model.json"

print("generating a planted dataset ...")
main(["synth", "--out", str(data), "--nodes", "24", "--hyperedges", "800",
      "--seed", "21"])
main(["inspect", "--dataset", str(data)])

print("\ntraining (3 epochs, small model) ...")
main(["train", "--dataset", str(data), "--checkpoint", str(ckpt),
      "--report-dir", str(work / "reports"), "--epochs", "3", "--batch-size", "64",
      "--dim", "32", "--negatives", "10", "--seed", "1"])

print("\nforecasting the next event after the stream end ...")
out = work / "forecast.jsonl"
main(["forecast", "--checkpoint", str(ckpt), "--dataset", str(data),
      "--out", str(out), "--at-end", "--top-nodes", "5"])

lines = [json.loads(l) for l in out.read_text().splitlines()]
soonest = sorted(lines, key=lambda d: d["dt"])[:5]
print("\nnodes expected to act soonest:")
for doc in soonest:
    cand = doc.get("candidate")
    if cand:
        print(f"  node {doc['node']:3d}: dt {doc['dt']:.2f}, proposes "
              f"{cand['right']} -> {cand['left']} (confidence {doc['score']:.2f})")
    else:
        print(f"  node {doc['node']:3d}: dt {doc['dt']:.2f}")
print(f"\nartifacts in {work}")
