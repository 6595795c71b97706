"""Minimal float64 tensor library with reverse-mode differentiation."""

from .gradcheck import check_gradients, numeric_grad, relative_error
from .layers import (BiLSTMParams, LSTMParams, Parameter, ParamStore, bilstm, lstm_cell,
                     lstm_step, run_lstm)
from .optim import (Adam, OptimizerState, adam_step, ema_swap, ema_update, ema_weights,
                    l2_penalty, warmup_decay)
from .tensor import (ContractError, NumericError, Tensor, as_tensor, backward, concat, exp,
                     index, log, masked_max, masked_softmax, matmul, mean, relu, reshape,
                     sigmoid, softmax, square, stack, swapaxes, tanh, tsum)

__all__ = [
    "Adam", "BiLSTMParams", "ContractError", "LSTMParams", "NumericError", "OptimizerState",
    "ParamStore", "Parameter", "Tensor", "adam_step", "as_tensor", "backward", "bilstm",
    "check_gradients", "concat", "ema_swap", "ema_update", "ema_weights", "exp", "index",
    "l2_penalty", "log", "lstm_cell", "lstm_step", "masked_max", "masked_softmax", "matmul",
    "mean", "numeric_grad", "relative_error", "relu", "reshape", "run_lstm", "sigmoid",
    "softmax", "square", "stack", "swapaxes", "tanh", "tsum", "warmup_decay",
]
