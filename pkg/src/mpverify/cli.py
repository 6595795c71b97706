"""Command line: ``mpverify {synth,train,predict,eval,stats}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import IngestionError, generate_synthetic, load_jsonl, write_jsonl
from .metrics import evaluate, span_validity_stats
from .ndcore import ContractError, ema_weights
from .pipeline import CheckpointError, TrainingError, load_checkpoint, load_config, predict_all, train
from .pipeline.config import format_config


def cmd_synth(args) -> int:
    _, synth = load_config(args.config)
    train_set, dev_set = generate_synthetic(synth, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "train.jsonl", (e.to_json() for e in train_set))
    write_jsonl(out / "dev.jsonl", (e.to_json() for e in dev_set))
    print(f"wrote {len(train_set)} train and {len(dev_set)} dev examples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg, _ = load_config(args.config)
    overrides = {k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    cfg = cfg.replace(**overrides)
    train_set = load_jsonl(args.train)
    dev_set = load_jsonl(args.dev) if args.dev else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    result = train(cfg, train_set, dev_set, out_dir=out)
    summary = {"best_epoch": result.best_epoch, "best_metric": result.best_metric,
               "steps": len(result.losses), "final_loss": result.losses[-1] if result.losses else None,
               "warnings": dict(result.warnings)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 0


def cmd_predict(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    examples = load_jsonl(args.input, derive=False)
    with ema_weights(model.params):
        preds = predict_all(model, examples)
    with open(args.output, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_json()) + "\n")
    print(f"wrote {len(preds)} predictions to {args.output}")
    return 0


def _read_predictions(path) -> dict[str, list[str]]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                answer = row["answer"]
                preds[str(row["id"])] = answer.split() if isinstance(answer, str) else list(answer)
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise IngestionError(f"{path}: line {lineno}: bad prediction ({err})") from None
    return preds


def cmd_eval(args) -> int:
    preds = _read_predictions(args.pred)
    gold = {ex.id: {"references": ex.references, "answer": ex.answer_tokens()}
            for ex in load_jsonl(args.gold)}
    report = evaluate(preds, gold, lowercase=not args.cased).to_dict()
    if args.output:
        Path(args.output).write_text(json.dumps(report, indent=2))
    shown = report if args.rows else {k: v for k, v in report.items() if k != "rows"}
    print(json.dumps(shown, indent=2))
    return 0


def cmd_stats(args) -> int:
    print(json.dumps(span_validity_stats(load_jsonl(args.input, derive=False)), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpverify", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic key/value dataset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the joint model")
    p.add_argument("--config")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="answer questions with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--output")
    p.add_argument("--cased", action="store_true", help="compare tokens without lowercasing")
    p.add_argument("--rows", action="store_true", help="also print per-question scores")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("stats", help="multi-answer / multi-span statistics of a dataset")
    p.add_argument("--input", required=True)
    p.set_defaults(fn=cmd_stats)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (IngestionError, ContractError, CheckpointError, TrainingError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
