"""Generate a synthetic corpus and run the whole CLI pipeline on it.

    python scripts/run_synthetic.py --out runs/synth --docs 2000 --labels 200
"""

import argparse
import json
import time
from pathlib import Path

from coderank.cli import main


def step(cfg, *args):
    t = time.perf_counter()
    rc = main([args[0], "--config", str(cfg), *args[1:]])
    if rc:
        raise SystemExit(f"{args[0]} failed with exit code {rc}")
    print(f"{args[0]:12s} {time.perf_counter() - t:6.1f}s")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/synth")
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--labels", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    main(["gen-synthetic", "--out", str(out), "--docs", str(args.docs), "--n-labels", str(args.labels),
          "--seed", str(args.seed)])
    cfg = out / "config.json"
    step(cfg, "build-index", "-v")
    step(cfg, "retrieve", "--split", "test")
    step(cfg, "train", "-v")
    step(cfg, "evaluate", "--split", "test")

    art = out / "artifacts"
    cov = json.loads((art / "candidates.json").read_text())
    rep = json.loads((art / "report.json").read_text())
    log = json.loads((art / "train_log.json").read_text())
    print(f"theta {cov['theta']:.3f}")
    for stage, c in cov["coverage"].items():
        print(f"{stage:10s} recall {c['recall']:.4f}  mean size {c['mean_size']:.1f}")
    print(f"best epoch {log['best_epoch']}")
    print(f"micro-F1 {rep['micro_f1']:.4f}  macro-F1 {rep['macro_f1']:.4f}  micro-AUC {rep['micro_auc']:.4f}")
    print("  ".join(f"P@{k} {v:.4f}" for k, v in rep["p_at_k"].items()))
    for b in rep["buckets"]:
        f1 = "-" if b["micro_f1"] is None else f"{b['micro_f1']:.3f}"
        print(f"  {b['bucket']:10s} labels {b['n_labels']:4d}  micro-F1 {f1}")
