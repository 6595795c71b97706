"""Train the joint model on the synthetic key/value task and report accuracy.

    python3 scripts/run_synthetic.py --config configs/synthetic.conf --out runs/synthetic
"""

import argparse
import json
import time
from pathlib import Path

from mpverify.data import generate_synthetic
from mpverify.pipeline import evaluate_model, load_config, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/synthetic.conf")
    ap.add_argument("--seed", type=int, default=2024, help="data seed")
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--select-on-train", action="store_true",
                    help="stop on training accuracy (overfit check) instead of dev accuracy")
    args = ap.parse_args()

    cfg, synth = load_config(args.config)
    train_set, dev_set = generate_synthetic(synth, args.seed)
    monitor = train_set if args.select_on_train else dev_set
    t0 = time.perf_counter()
    result = train(cfg, train_set, monitor, out_dir=args.out)
    report = {"train": evaluate_model(result.model, train_set),
              "dev": evaluate_model(result.model, dev_set) if dev_set else None,
              "best_epoch": result.best_epoch, "seconds": round(time.perf_counter() - t0, 1),
              "steps": len(result.losses), "warnings": dict(result.warnings)}
    Path(args.out, "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
