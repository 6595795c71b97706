"""Multi-task training loop with Adam, L2, weight EMA and dev-based model selection."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import Example, Vocabulary, iterate_batches
from ..encoder import load_pretrained, restrict_vocab_to_pretrained
from ..metrics import best_rouge_l, tokens_of
from ..ndcore import Adam, backward, ema_update, ema_weights, l2_penalty, warmup_decay
from .checkpoint import save_checkpoint
from .config import ModelConfig
from .model import MRCModel, Prediction, predict_all

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: MRCModel
    optimizer: Adam
    history: list[dict] = field(default_factory=list)
    best_metric: float = float("-inf")
    best_epoch: int = -1
    warnings: Counter = field(default_factory=Counter)

    @property
    def losses(self) -> list[float]:
        return [h["loss"] for h in self.history if "loss" in h]


def exact_span_accuracy(preds: list[Prediction], examples: list[Example]) -> float:
    """Share of predictions whose answer tokens equal the gold span's tokens."""
    gold = {ex.id: ex.answer_tokens() for ex in examples}
    hits = [p.chosen.tokens == gold[p.id] for p in preds if gold.get(p.id) is not None]
    return sum(hits) / len(hits) if hits else 0.0


def mean_rouge_l(preds: list[Prediction], examples: list[Example], lowercase: bool = True) -> float:
    refs = {ex.id: [tokens_of(r, lowercase) for r in ex.references] for ex in examples}
    scores = []
    for p in preds:
        cand = [t.lower() for t in p.chosen.tokens] if lowercase else p.chosen.tokens
        scores.append(best_rouge_l(cand, [r for r in refs[p.id] if r]) if refs[p.id] else 0.0)
    return float(np.mean(scores)) if scores else 0.0


def evaluate_model(model: MRCModel, examples: list[Example], use_ema: bool = True) -> dict:
    if use_ema:
        with ema_weights(model.params):
            preds = predict_all(model, examples)
    else:
        preds = predict_all(model, examples)
    return {"exact": exact_span_accuracy(preds, examples),
            "rouge_l": mean_rouge_l(preds, examples, model.cfg.lowercase)}


def build_model(cfg: ModelConfig, train_set: list[Example], vocab: Vocabulary | None = None) -> MRCModel:
    vocab = vocab or Vocabulary.build(train_set)
    pretrained = None
    if cfg.embeddings_path:
        vocab = restrict_vocab_to_pretrained(vocab, cfg.embeddings_path)
        pretrained = load_pretrained(cfg.embeddings_path, vocab, cfg.word_dim,
                                     np.random.default_rng(cfg.seed))
    return MRCModel(cfg, vocab, pretrained)


def _snapshot(model: MRCModel, opt: Adam) -> dict:
    return {"params": {p.name: (p.data.copy(), p.ema_shadow.copy()) for p in model.store},
            "opt": copy.deepcopy(opt.state)}


def _restore(model: MRCModel, opt: Adam, snap: dict) -> None:
    for p in model.store:
        data, shadow = snap["params"][p.name]
        p.tensor.data = data.copy()
        p.ema_shadow = shadow.copy()
    opt.state = copy.deepcopy(snap["opt"])


def train_step(model: MRCModel, opt: Adam, examples: list[Example], step: int) -> dict:
    """One optimizer update; returns the component losses."""
    cfg = model.cfg
    batch = model.batch(examples, require_gold=True)
    out = model.forward(batch, model.active_heads(training=True), with_loss=True)
    record = {name: t.item() for name, t in out.losses.items()}
    for name, value in record.items():
        if not math.isfinite(value):
            raise TrainingError(f"step {step}: {name} loss is not finite ({value})")
    trained = model.trained_params()
    loss = out.loss + l2_penalty(trained, cfg.l2_weight)
    model.store.zero_grad()
    grads = backward(loss, model.params)
    model.zero_pad_grads(grads)
    opt.step(grads)
    decay = warmup_decay(cfg.ema_decay, opt.state.t) if cfg.ema_warmup else cfg.ema_decay
    ema_update(model.params, decay)
    record["loss"] = out.loss.item()
    record["batch_warnings"] = dict(batch.warnings)
    return record


def train(cfg: ModelConfig, train_set: list[Example], dev_set: list[Example] | None = None,
          out_dir: str | Path | None = None, vocab: Vocabulary | None = None) -> TrainResult:
    """Fit the joint model; the returned model holds the best dev-scoring weights."""
    model = build_model(cfg, train_set, vocab)
    opt = Adam(model.params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    result = TrainResult(model, opt)
    usable = [ex for ex in train_set if ex.gold_span is not None]
    result.warnings["dropped_no_gold"] = len(train_set) - len(usable)
    if not usable:
        raise TrainingError("no training example has a gold span")
    rng = np.random.default_rng(cfg.seed + 1)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    logf = open(out_path / "train_log.jsonl", "w") if out_path is not None else None
    best = None
    stale = 0
    step = 0
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            for chunk in iterate_batches(usable, cfg.batch_size, rng):
                rec = train_step(model, opt, chunk, step)
                result.warnings.update(rec.pop("batch_warnings"))
                rec.update(step=step, epoch=epoch)
                result.history.append(rec)
                if logf:
                    logf.write(json.dumps(rec) + "\n")
                step += 1
            if not dev_set:
                continue
            scores = evaluate_model(model, dev_set)
            metric = scores[cfg.dev_metric]
            rec = {"epoch": epoch, "step": step, "dev": scores, "seconds": time.perf_counter() - t0}
            result.history.append(rec)
            if logf:
                logf.write(json.dumps(rec) + "\n")
            log.info("epoch %d dev %s=%.4f", epoch, cfg.dev_metric, metric)
            if metric > result.best_metric:
                result.best_metric, result.best_epoch = metric, epoch
                best = _snapshot(model, opt)
                stale = 0
                if out_path is not None:
                    save_checkpoint(model, out_path / "best.ckpt", opt.state,
                                    {"epoch": epoch, "dev": scores})
            else:
                stale += 1
            if metric >= cfg.target_metric or stale >= cfg.patience:
                break
    finally:
        if logf:
            logf.close()
    if best is not None:
        _restore(model, opt, best)
    elif out_path is not None:
        save_checkpoint(model, out_path / "best.ckpt", opt.state, {"epoch": cfg.epochs - 1})
    return result
