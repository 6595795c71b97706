"""Versioned ``.npz`` checkpoints: config, vocabulary, weights, EMA shadows, Adam state."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..data import Vocabulary
from ..ndcore import OptimizerState
from .config import ModelConfig
from .model import MRCModel

MAGIC = "mpverify-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model: MRCModel, path: str | Path, optimizer: OptimizerState | None = None,
                    extra: dict | None = None) -> None:
    header = {"magic": MAGIC, "version": VERSION, "config": model.cfg.to_dict(),
              "vocab": model.vocab.to_json(), "params": [], "extra": extra or {}}
    arrays: dict[str, np.ndarray] = {}
    for p in model.store:
        header["params"].append({"name": p.name, "shape": list(p.shape), "trainable": p.trainable})
        arrays[f"param/{p.name}"] = p.data
        arrays[f"ema/{p.name}"] = p.ema_shadow
    if optimizer is not None:
        header["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                               "eps": optimizer.eps, "t": optimizer.t}
        for name in optimizer.m:
            arrays[f"adam_m/{name}"] = optimizer.m[name]
            arrays[f"adam_v/{name}"] = optimizer.v[name]
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _read(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as err:
        raise CheckpointError(f"{path}: not a readable checkpoint ({err})") from None
    if "__header__" not in arrays:
        raise CheckpointError(f"{path}: missing header")
    try:
        header = json.loads(arrays.pop("__header__").tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: corrupt header") from None
    if header.get("magic") != MAGIC:
        raise CheckpointError(f"{path}: wrong magic string {header.get('magic')!r}")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')} (expected {VERSION})")
    return header, arrays


def load_into(model: MRCModel, header: dict, arrays: dict[str, np.ndarray]) -> None:
    names = [p["name"] for p in header["params"]]
    if set(names) != set(model.store.names()):
        missing = set(model.store.names()) ^ set(names)
        raise CheckpointError(f"parameter sets differ: {sorted(missing)}")
    for name in names:
        p = model.store[name]
        value = arrays[f"param/{name}"]
        if value.shape != p.shape:
            raise CheckpointError(f"dimension mismatch for parameter {name}: "
                                  f"checkpoint {value.shape}, model {p.shape}")
        p.tensor.data = value.astype(np.float64, copy=True)
        p.ema_shadow = arrays[f"ema/{name}"].astype(np.float64, copy=True)


def load_optimizer(header: dict, arrays: dict[str, np.ndarray]) -> OptimizerState | None:
    if "optimizer" not in header:
        return None
    o = header["optimizer"]
    state = OptimizerState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"])
    for key, value in arrays.items():
        if key.startswith("adam_m/"):
            state.m[key[len("adam_m/"):]] = value.copy()
        elif key.startswith("adam_v/"):
            state.v[key[len("adam_v/"):]] = value.copy()
    return state


def load_checkpoint(path: str | Path, config: ModelConfig | None = None
                    ) -> tuple[MRCModel, OptimizerState | None, dict]:
    """Rebuild the model stored at ``path``.

    ``config`` overrides the stored one (shapes must then still agree).
    Returns ``(model, optimizer_state, extra)``.
    """
    header, arrays = _read(path)
    cfg = config if config is not None else ModelConfig(**header["config"])
    vocab = Vocabulary.from_json(header["vocab"])
    frozen = any(p["name"] == "embed.unk" for p in header["params"])
    pretrained = arrays["param/embed.word"] if frozen else None
    if pretrained is not None and pretrained.shape[1] != cfg.word_dim:
        raise CheckpointError(f"dimension mismatch for parameter embed.word: checkpoint "
                              f"{pretrained.shape}, config word_dim {cfg.word_dim}")
    model = MRCModel(cfg, vocab, pretrained)
    load_into(model, header, arrays)
    return model, load_optimizer(header, arrays), header.get("extra", {})
