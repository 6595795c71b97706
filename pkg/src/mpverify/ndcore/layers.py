"""Parameters, initialisers and recurrent layers built on :mod:`.tensor`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, ContractError, Tensor, _make, _sigmoid, _unbroadcast, as_tensor, concat, index, stack

# LSTM gate order inside the packed 4H axis
GATES = ("input", "forget", "output", "candidate")


@dataclass
class Parameter:
    """A named trainable array plus its moving-average shadow.

    ``decay`` marks weight matrices that receive the L2 penalty; ``trainable``
    false keeps the optimizer and EMA away (frozen pretrained vectors).
    """

    name: str
    tensor: Tensor
    ema_shadow: np.ndarray = field(default=None, repr=False)
    trainable: bool = True
    decay: bool = False

    def __post_init__(self):
        self.tensor.requires_grad = self.trainable
        self.tensor.name = self.name
        if self.ema_shadow is None:
            self.ema_shadow = self.tensor.data.copy()
        if self.ema_shadow.shape != self.tensor.shape:
            raise ContractError(f"shadow shape {self.ema_shadow.shape} != {self.tensor.shape} for {self.name}")

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def shape(self):
        return self.tensor.shape


class ParamStore:
    """Ordered registry of uniquely named parameters."""

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, *, trainable: bool = True, decay: bool = False) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        p = Parameter(name, Tensor(np.array(value, dtype=DTYPE)), trainable=trainable, decay=decay)
        self._params[name] = p
        return p.tensor

    def matrix(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)), decay=True)

    def vector(self, name: str, n: int, value: float = 0.0) -> Tensor:
        return self.add(name, np.full(n, value, dtype=DTYPE))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def trainable(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.tensor.grad = None


@dataclass
class LSTMParams:
    """Packed weights: ``x @ wx + h @ wh + b`` gives the four gate pre-activations."""

    wx: Tensor  # D x 4H
    wh: Tensor  # H x 4H
    b: Tensor   # 4H

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.wx.shape[0]

    @classmethod
    def create(cls, store: ParamStore, prefix: str, input_dim: int, hidden: int,
               forget_bias: float = 1.0) -> "LSTMParams":
        wx = store.matrix(f"{prefix}.wx", input_dim, 4 * hidden)
        wh = store.matrix(f"{prefix}.wh", hidden, 4 * hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = forget_bias
        bt = store.add(f"{prefix}.b", b)
        return cls(wx, wh, bt)


def lstm_step(xproj: Tensor, h_prev: Tensor, c_prev: Tensor, wh: Tensor,
              mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """One LSTM update from pre-projected input ``xproj = x @ wx + b``.

    Rows with ``mask`` 0 carry ``(h_prev, c_prev)`` through unchanged.
    The step is a single graph node with a hand-written backward.
    """
    xproj, h_prev, c_prev, wh = (as_tensor(t) for t in (xproj, h_prev, c_prev, wh))
    H = wh.shape[0]
    z = xproj.data + h_prev.data @ wh.data
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    o = _sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=DTYPE).reshape(h.shape[:-1] + (1,))
        h = m * h + (1.0 - m) * h_prev.data
        c_out = m * c + (1.0 - m) * c_prev.data
    else:
        m = None
        c_out = c

    def backward(grad):
        gh, gc = grad[..., :H], grad[..., H:]
        if m is not None:
            gh_in, gc_in = m * gh, m * gc
        else:
            gh_in, gc_in = gh, gc
        do = gh_in * tc
        dc = gc_in + gh_in * o * (1.0 - tc * tc)
        dz = np.concatenate([dc * g * i * (1.0 - i),
                             dc * c_prev.data * f * (1.0 - f),
                             do * o * (1.0 - o),
                             dc * i * (1.0 - g * g)], axis=-1)
        dh_prev = dz @ wh.data.T
        dc_prev = dc * f
        if m is not None:
            dh_prev = dh_prev + (1.0 - m) * gh
            dc_prev = dc_prev + (1.0 - m) * gc
        hp = h_prev.data.reshape(-1, H)
        dwh = hp.T @ dz.reshape(-1, 4 * H)
        return (_unbroadcast(dz, xproj.shape), _unbroadcast(dh_prev, h_prev.shape),
                _unbroadcast(dc_prev, c_prev.shape), dwh)

    both = _make(np.concatenate([h, c_out], axis=-1), (xproj, h_prev, c_prev, wh), backward, "lstm_step")
    return index(both, (Ellipsis, slice(0, H))), index(both, (Ellipsis, slice(H, 2 * H)))


def lstm_cell(x, h_prev, c_prev, params: LSTMParams) -> tuple[Tensor, Tensor]:
    """Standard LSTM cell with input/forget/output/candidate gates."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    if x.shape[-1] != params.input_dim:
        raise ContractError(f"lstm input width {x.shape[-1]} != {params.input_dim}")
    if h_prev.shape[-1] != params.hidden or c_prev.shape[-1] != params.hidden:
        raise ContractError(f"lstm state width must be {params.hidden}, got "
                            f"{h_prev.shape[-1]} and {c_prev.shape[-1]}")
    return lstm_step(x @ params.wx + params.b, h_prev, c_prev, params.wh)


def run_lstm(seq: Tensor, mask: np.ndarray, params: LSTMParams, reverse: bool = False,
             h0: Tensor | None = None) -> tuple[list[Tensor], Tensor]:
    """Run over ``seq`` [B, T, D]; returns per-step hidden states and the final state.

    Padding is assumed to sit at the end of each row, so the reverse pass
    keeps a zero state until it reaches real tokens.
    """
    B, T, _ = seq.shape
    H = params.hidden
    xproj = seq @ params.wx + params.b
    h = h0 if h0 is not None else Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    outs: list[Tensor | None] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h, c = lstm_step(xproj[:, t, :], h, c, params.wh, mask[:, t])
        outs[t] = h
    return outs, h


@dataclass
class BiLSTMParams:
    fw: LSTMParams
    bw: LSTMParams

    @property
    def hidden(self) -> int:
        return self.fw.hidden

    @classmethod
    def create(cls, store: ParamStore, prefix: str, input_dim: int, hidden: int) -> "BiLSTMParams":
        return cls(LSTMParams.create(store, f"{prefix}.fw", input_dim, hidden),
                   LSTMParams.create(store, f"{prefix}.bw", input_dim, hidden))


def bilstm(seq, params: BiLSTMParams, mask: np.ndarray | None = None,
           return_final: bool = False):
    """Bidirectional LSTM: output at t is ``[forward_t; backward_t]``.

    Accepts [T, D] or [B, T, D].  Masked positions are zeroed in the output.
    With ``return_final`` also returns ``[forward_last; backward_first]``.
    """
    seq = as_tensor(seq)
    squeeze = seq.ndim == 2
    if squeeze:
        seq = seq.reshape(1, *seq.shape)
        if mask is not None:
            mask = np.asarray(mask)[None]
    B, T, _ = seq.shape
    if T < 1:
        raise ContractError("bilstm over an empty sequence")
    if mask is None:
        mask = np.ones((B, T), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    fw, hf = run_lstm(seq, mask, params.fw)
    bw, hb = run_lstm(seq, mask, params.bw, reverse=True)
    out = concat([stack(fw, axis=1), stack(bw, axis=1)], axis=-1)
    out = out * mask[..., None].astype(DTYPE)
    final = concat([hf, hb], axis=-1)
    if squeeze:
        out = out.reshape(out.shape[1:])
        final = final.reshape(final.shape[1:])
    return (out, final) if return_final else out
