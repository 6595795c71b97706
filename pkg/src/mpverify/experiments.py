"""Shared setup for the full-model vs boundary-only comparison on synthetic data.

Both arms see the same data, the same fixed random word vectors (the
synthetic stand-in for frozen pretrained embeddings) and the same
validation-based early stopping; only the auxiliary heads differ.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import Example, SynthConfig, Vocabulary, generate_synthetic
from .pipeline import ModelConfig, evaluate_model, train

# boundary-only ablation: no auxiliary losses, boundary score alone at prediction
ABLATION = dict(content_weight=0.0, verify_weight=0.0, use_content_score=False,
                use_verification_score=False)

COMPARISON_SYNTH = SynthConfig(n_train=600, n_dev=200, n_passages=5, passage_len=7, noise_facts=0,
                               distractor_rate=0.4)
N_VALID = 100
VECTOR_SCALE = 2.0


def write_random_vectors(tokens: list[str], dim: int, path: str | Path, scale: float,
                         seed: int) -> Path:
    """Write one ``token f1 ... fdim`` line per token with N(0, scale^2) entries."""
    rng = np.random.default_rng(seed)
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for tok in tokens:
            fh.write(tok + " " + " ".join(f"{x:.6f}" for x in rng.normal(scale=scale, size=dim)) + "\n")
    return path


def comparison_data(seed: int, out_dir: str | Path, synth: SynthConfig = COMPARISON_SYNTH,
                    word_dim: int = 32) -> tuple[list[Example], list[Example], list[Example], Path]:
    """``(train, valid, dev, vectors_path)`` for one seed; valid is cut from extra train draws."""
    cfg = SynthConfig(**{**asdict(synth), "n_train": synth.n_train + N_VALID})
    train_set, dev_set = generate_synthetic(cfg, seed)
    train_set, valid_set = train_set[:synth.n_train], train_set[synth.n_train:]
    tokens = Vocabulary.build(train_set + valid_set + dev_set).itos[2:]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vectors = write_random_vectors(tokens, word_dim, out_dir / f"vectors-{seed}.txt", VECTOR_SCALE, seed)
    return train_set, valid_set, dev_set, vectors


def comparison_config(seed: int, vectors: str | Path, **overrides) -> ModelConfig:
    base = ModelConfig(hidden=16, word_dim=32, char_dim=8, lr=0.01, batch_size=16, ema_decay=0.99,
                       epochs=15, patience=4, dev_metric="exact", seed=seed,
                       embeddings_path=str(vectors))
    return base.replace(**overrides)


def run_comparison(seeds=(0, 1, 2), out_dir: str | Path = "runs/comparison", **overrides) -> dict:
    """Train both arms per seed and report dev exact-span accuracy."""
    out_dir = Path(out_dir)
    rows = []
    for seed in seeds:
        train_set, valid_set, dev_set, vectors = comparison_data(seed, out_dir)
        vocab = Vocabulary.build(train_set + valid_set + dev_set)
        for arm, extra in (("full", {}), ("boundary_only", ABLATION)):
            cfg = comparison_config(seed, vectors, **{**overrides, **extra})
            t0 = time.perf_counter()
            result = train(cfg, train_set, valid_set, vocab=vocab)
            scores = evaluate_model(result.model, dev_set)
            rows.append({"seed": seed, "arm": arm, "dev_exact": scores["exact"],
                         "dev_rouge_l": scores["rouge_l"], "valid_exact": result.best_metric,
                         "best_epoch": result.best_epoch, "seconds": time.perf_counter() - t0})
    summary = {arm: float(np.mean([r["dev_exact"] for r in rows if r["arm"] == arm]))
               for arm in ("full", "boundary_only")}
    report = {"rows": rows, "mean_dev_exact": summary}
    (out_dir / "comparison.json").write_text(json.dumps(report, indent=2))
    return report
