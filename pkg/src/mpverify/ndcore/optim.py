"""Adam, exponential moving averages of weights, and the L2 penalty."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .layers import Parameter
from .tensor import ContractError, Tensor, square, tsum


@dataclass
class OptimizerState:
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a fixed list of trainable parameters."""

    def __init__(self, params: Iterable[Parameter], lr: float = 4e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for p in self.params:
            self.state.m[p.name] = np.zeros_like(p.data)
            self.state.v[p.name] = np.zeros_like(p.data)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        adam_step(self.state, self.params, grads)


def adam_step(state: OptimizerState, params: list[Parameter], grads: Mapping[str, np.ndarray]) -> None:
    missing = [p.name for p in params if p.name not in grads]
    if missing:
        raise ContractError(f"no gradient for parameters: {', '.join(missing)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in params:
        g = grads[p.name]
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != {p.shape} for {p.name}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.tensor.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def ema_update(params: Iterable[Parameter], decay: float) -> None:
    """``shadow <- decay * shadow + (1 - decay) * param`` for trainable params."""
    if not 0.0 <= decay < 1.0:
        raise ContractError(f"EMA decay must lie in [0, 1), got {decay}")
    for p in params:
        if p.trainable:
            p.ema_shadow *= decay
            p.ema_shadow += (1.0 - decay) * p.data


def warmup_decay(decay: float, step: int) -> float:
    """Cap the decay early in training so shadows are not stuck at init."""
    return min(decay, (1.0 + step) / (10.0 + step))


def ema_swap(params: Iterable[Parameter]) -> None:
    """Exchange live weights and shadows in place; applying twice is the identity."""
    for p in params:
        if p.trainable:
            live = p.tensor.data
            p.tensor.data = p.ema_shadow
            p.ema_shadow = live


@contextmanager
def ema_weights(params: Iterable[Parameter]):
    params = list(params)
    ema_swap(params)
    try:
        yield
    finally:
        ema_swap(params)


def l2_penalty(params: Iterable[Parameter], weight: float) -> Tensor:
    """``weight * sum(w**2)`` over weight matrices only (biases and embeddings excluded)."""
    terms = [tsum(square(p.tensor)) for p in params if p.decay and p.trainable]
    if not terms or weight == 0.0:
        return Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * weight
