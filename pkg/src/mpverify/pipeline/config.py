"""Model/training configuration and the flat ``key = value`` config file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from ..data import SynthConfig
from ..ndcore import ContractError


@dataclass
class ModelConfig:
    # architecture
    hidden: int = 150
    word_dim: int = 300
    char_dim: int = 30
    # joint objective: boundary + content_weight * content + verify_weight * verification
    content_weight: float = 0.5
    verify_weight: float = 0.5
    # optimisation
    lr: float = 0.0004
    batch_size: int = 32
    l2_weight: float = 0.0003
    ema_decay: float = 0.9999
    ema_warmup: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    patience: int = 10
    target_metric: float = 2.0  # stop once the dev metric reaches this; >1 disables
    # lengths
    max_question_len: int = 32
    max_passage_len: int = 64
    max_passages: int = 10
    max_word_len: int = 16
    max_span_len: int = 30
    # scoring
    mask_self_attention: bool = False
    use_content_score: bool = True
    use_verification_score: bool = True
    dev_metric: str = "rouge_l"  # or "exact"
    lowercase: bool = True
    # misc
    seed: int = 0
    embeddings_path: str = ""

    def __post_init__(self):
        for name in ("hidden", "word_dim", "char_dim", "batch_size", "max_question_len",
                     "max_passage_len", "max_passages", "max_word_len", "max_span_len"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.content_weight < 0 or self.verify_weight < 0:
            raise ContractError("task weights must be nonnegative")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ContractError("ema_decay must lie in [0, 1)")
        if self.dev_metric not in ("rouge_l", "exact"):
            raise ContractError(f"unknown dev_metric {self.dev_metric!r}")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


SYNTH_PREFIX = "synth_"


def _coerce(raw: str, typ: Any, key: str):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ContractError(f"config key {key!r}: cannot parse {raw!r} as {typ}") from None


def parse_config_text(text: str) -> tuple[ModelConfig, SynthConfig]:
    """Parse ``key = value`` lines; ``synth_``-prefixed keys configure the generator."""
    model_fields = {f.name: f.type for f in fields(ModelConfig)}
    synth_fields = {f.name: f.type for f in fields(SynthConfig)}
    model_kw, synth_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith(SYNTH_PREFIX) and key[len(SYNTH_PREFIX):] in synth_fields:
            name = key[len(SYNTH_PREFIX):]
            synth_kw[name] = _coerce(value, synth_fields[name], key)
        elif key in model_fields:
            model_kw[key] = _coerce(value, model_fields[key], key)
        else:
            raise ContractError(f"config line {lineno}: unknown key {key!r}")
    return ModelConfig(**model_kw), SynthConfig(**synth_kw)


def load_config(path: str | Path | None) -> tuple[ModelConfig, SynthConfig]:
    if path is None:
        return ModelConfig(), SynthConfig()
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: ModelConfig, synth: SynthConfig | None = None) -> str:
    lines = [f"{k} = {v}" for k, v in cfg.to_dict().items()]
    if synth is not None:
        lines += [f"{SYNTH_PREFIX}{k} = {v}" for k, v in dataclasses.asdict(synth).items()]
    return "\n".join(lines) + "\n"
