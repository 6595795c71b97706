import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mpverify import ndcore as nd
from mpverify.ndcore import (Adam, BiLSTMParams, ContractError, LSTMParams, NumericError, Parameter,
                             ParamStore, Tensor, backward, bilstm, check_gradients, ema_swap,
                             ema_update, lstm_cell, masked_softmax)

TOL = 1e-6


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


# --------------------------------------------------------------------------- backward


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_sigmoid_gradient_at_zero():
    x = Tensor(0.0, requires_grad=True)
    backward(nd.sigmoid(x))
    assert x.grad == pytest.approx(0.25)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_nan_names_operation():
    x = Tensor(np.array([0.0, 2.0]), requires_grad=True)
    with np.errstate(all="ignore"):
        loss = nd.tsum(nd.relu(nd.log(x)))  # log(0) = -inf is cut by relu, gradient 0/0 is not
        assert np.isfinite(loss.item())
        with pytest.raises(NumericError) as err:
            backward(loss)
    assert err.value.op == "log"


def test_nonfinite_loss_rejected():
    x = Tensor(np.array([-1.0]), requires_grad=True)
    with np.errstate(all="ignore"), pytest.raises(NumericError):
        backward(nd.tsum(nd.log(x)))


def test_unreached_params_get_zero_grad(rng):
    store = ParamStore(rng)
    a = store.matrix("a", 2, 2)
    store.matrix("b", 2, 2)
    grads = backward(nd.tsum(a * a), store)
    assert np.all(grads["b"] == 0.0)
    np.testing.assert_allclose(grads["a"], 2 * a.data)


def test_shared_subexpression_accumulates():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    backward(y + y * 3.0)
    assert x.grad == pytest.approx(16.0)


def test_validity_check():
    assert Tensor(np.ones(2)).is_valid()
    assert not Tensor(np.array([1.0, np.nan])).is_valid()


# --------------------------------------------------------------------------- per-op gradients

OPS = {
    "add": lambda a, b: nd.tsum(nd.square(a + b)),
    "sub_bcast": lambda a, b: nd.tsum(nd.square(a - b[0])),
    "mul": lambda a, b: nd.tsum(a * b * a),
    "div": lambda a, b: nd.tsum(a / (nd.square(b) + 1.0)),
    "matmul": lambda a, b: nd.tsum(nd.tanh(a @ nd.swapaxes(b, 0, 1))),
    "sigmoid_tanh_relu": lambda a, b: nd.tsum(nd.sigmoid(a) * nd.tanh(b) + nd.relu(a + 0.1) * b),
    "exp_log": lambda a, b: nd.tsum(nd.log(nd.exp(a) + nd.square(b))),
    "mean_axis": lambda a, b: nd.tsum(nd.square(nd.mean(a * b, axis=1))),
    "concat_index": lambda a, b: nd.tsum(nd.square(nd.concat([a, b], axis=0)[np.array([0, 2, 2, 5])])),
    "stack_reshape": lambda a, b: nd.tsum(nd.square(nd.stack([a, b], axis=1).reshape(-1)) * 0.5),
    "softmax": lambda a, b: nd.tsum(masked_softmax(a, np.array([True, True, False, True])) * b),
    "masked_max": lambda a, b: nd.tsum(nd.masked_max(a * b, np.array([[True], [False], [True]]), axis=0)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, rng):
    a = leaf(rng, 3, 4)
    b = leaf(rng, 3, 4)
    errs = check_gradients(lambda: OPS[name](a, b), [a, b])
    assert max(errs) < TOL, errs


def test_log_floor_gradient_zero_below_floor():
    x = Tensor(np.array([1e-40, 0.5]), requires_grad=True)
    backward(nd.tsum(nd.log(x, floor=1e-30)))
    assert x.grad[0] == 0.0
    assert x.grad[1] == pytest.approx(2.0)


# --------------------------------------------------------------------------- LSTM


def zero_lstm(d, h):
    return LSTMParams(Tensor(np.zeros((d, 4 * h))), Tensor(np.zeros((h, 4 * h))), Tensor(np.zeros(4 * h)))


def test_lstm_zero_everything():
    p = zero_lstm(3, 2)
    h, c = lstm_cell(np.ones((1, 3)), np.zeros((1, 2)), np.zeros((1, 2)), p)
    assert np.all(h.data == 0.0) and np.all(c.data == 0.0)


def test_lstm_scalar_hand_value():
    p = zero_lstm(1, 1)
    h, c = lstm_cell(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)), p)
    assert c.item() == pytest.approx(0.5, abs=1e-15)
    assert h.item() == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)
    assert h.item() == pytest.approx(0.23105858, abs=1e-8)


def test_lstm_dimension_mismatch(rng):
    p = LSTMParams.create(ParamStore(rng), "l", 3, 2)
    with pytest.raises(ContractError):
        lstm_cell(np.ones((1, 4)), np.zeros((1, 2)), np.zeros((1, 2)), p)
    with pytest.raises(ContractError):
        lstm_cell(np.ones((1, 3)), np.zeros((1, 3)), np.zeros((1, 2)), p)


def test_lstm_forget_bias_init(rng):
    p = LSTMParams.create(ParamStore(rng), "l", 3, 2)
    np.testing.assert_array_equal(p.b.data, [0, 0, 1, 1, 0, 0, 0, 0])


def test_lstm_cell_gradients(rng):
    store = ParamStore(rng)
    p = LSTMParams.create(store, "l", 3, 4)
    x, h0, c0 = leaf(rng, 2, 3), leaf(rng, 2, 4), leaf(rng, 2, 4)
    w = rng.normal(size=(2, 4))

    def f():
        h, c = lstm_cell(x, h0, c0, p)
        return nd.tsum(h * w) + nd.tsum(nd.square(c))

    errs = check_gradients(f, [x, h0, c0, p.wx, p.wh, p.b])
    assert max(errs) < TOL, errs


def test_masked_lstm_step_gradients(rng):
    store = ParamStore(rng)
    p = LSTMParams.create(store, "l", 2, 3)
    seq = leaf(rng, 3, 4, 2)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0], [1, 0, 0, 0]], dtype=bool)
    w = rng.normal(size=(3, 4, 3))

    def f():
        outs, last = nd.run_lstm(seq, mask, p, reverse=True)
        return nd.tsum(nd.stack(outs, axis=1) * w) + nd.tsum(nd.square(last))

    errs = check_gradients(f, [seq, p.wx, p.wh, p.b])
    assert max(errs) < TOL, errs


# --------------------------------------------------------------------------- BiLSTM


def test_bilstm_single_step_matches_cells(rng):
    store = ParamStore(rng)
    p = BiLSTMParams.create(store, "bi", 3, 2)
    x = rng.normal(size=(1, 3))
    out = bilstm(x, p)
    zero = np.zeros((1, 2))
    hf, _ = lstm_cell(x, zero, zero, p.fw)
    hb, _ = lstm_cell(x, zero, zero, p.bw)
    np.testing.assert_allclose(out.data, np.concatenate([hf.data, hb.data], axis=-1), atol=1e-15)


def test_bilstm_reversal_swaps_halves(rng):
    store = ParamStore(rng)
    p = BiLSTMParams.create(store, "bi", 3, 2)
    swapped = BiLSTMParams(p.bw, p.fw)
    x = rng.normal(size=(5, 3))
    a = bilstm(x, p).data
    b = bilstm(x[::-1], swapped).data[::-1]
    np.testing.assert_allclose(a[:, :2], b[:, 2:], atol=1e-14)
    np.testing.assert_allclose(a[:, 2:], b[:, :2], atol=1e-14)


def test_bilstm_output_shape_full_width(rng):
    p = BiLSTMParams.create(ParamStore(rng), "bi", 6, 150)
    assert bilstm(rng.normal(size=(7, 6)), p).shape == (7, 300)


def test_bilstm_padding_is_inert(rng):
    p = BiLSTMParams.create(ParamStore(rng), "bi", 3, 2)
    x = rng.normal(size=(4, 3))
    padded = np.concatenate([x, rng.normal(size=(3, 3))])[None]
    mask = np.array([[1, 1, 1, 1, 0, 0, 0]], dtype=bool)
    out = bilstm(padded, p, mask).data[0]
    np.testing.assert_allclose(out[:4], bilstm(x, p).data, atol=1e-14)
    assert np.all(out[4:] == 0.0)


def test_bilstm_empty_rejected(rng):
    p = BiLSTMParams.create(ParamStore(rng), "bi", 3, 2)
    with pytest.raises(ContractError):
        bilstm(np.zeros((0, 3)), p)


# --------------------------------------------------------------------------- softmax


def test_softmax_symmetric():
    np.testing.assert_allclose(masked_softmax(np.zeros(2)).data, [0.5, 0.5])


def test_softmax_hand_value():
    np.testing.assert_allclose(masked_softmax(np.log([1.0, 3.0])).data, [0.25, 0.75], atol=1e-15)


def test_softmax_all_masked_rejected():
    with pytest.raises(ContractError):
        masked_softmax(np.zeros(3), np.zeros(3, dtype=bool))


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)),
       st.floats(-100, 100), st.data())
def test_softmax_properties(scores, shift, data):
    mask = data.draw(hnp.arrays(bool, scores.shape))
    mask[data.draw(st.integers(0, len(scores) - 1))] = True
    p = masked_softmax(scores, mask).data
    assert np.all(p >= 0)
    assert np.all(p[~mask] == 0.0)
    assert abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(masked_softmax(scores + shift, mask).data, p, atol=1e-12)


# --------------------------------------------------------------------------- optimizers


def make_param(value, name="w"):
    return Parameter(name, Tensor(np.array(value, dtype=float)))


def test_adam_first_step_is_lr_sign():
    p = make_param([1.0, -2.0, 0.5])
    opt = Adam([p], lr=0.01, eps=0.0)
    opt.step({"w": np.array([3.0, -0.2, 1e-4])})
    np.testing.assert_allclose(p.data - [1.0, -2.0, 0.5], [-0.01, 0.01, -0.01], rtol=1e-12)


def test_adam_zero_gradient_is_noop():
    p = make_param([1.0, 2.0])
    before = p.data.copy()
    opt = Adam([p], lr=0.1)
    for _ in range(5):
        opt.step({"w": np.zeros(2)})
    np.testing.assert_array_equal(p.data, before)
    assert opt.state.t == 5


def test_adam_two_step_trace():
    # lr 0.1, g = 2: both bias-corrected steps move by 0.1 * 2 / (2 + 1e-8)
    p = make_param([1.0])
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    opt.step({"w": np.array([2.0])})
    assert p.data[0] == pytest.approx(0.9000000005, abs=1e-13)
    opt.step({"w": np.array([2.0])})
    assert p.data[0] == pytest.approx(0.800000001, abs=1e-13)
    np.testing.assert_allclose(opt.state.m["w"], [0.38])
    np.testing.assert_allclose(opt.state.v["w"], [0.007996])


def test_adam_missing_gradient():
    opt = Adam([make_param([1.0], "a"), make_param([1.0], "b")])
    with pytest.raises(ContractError, match="b"):
        opt.step({"a": np.zeros(1)})


def test_ema_single_update():
    p = make_param([1.0])
    p.ema_shadow[:] = 0.0
    ema_update([p], 0.9)
    assert p.ema_shadow[0] == pytest.approx(0.1)


@given(st.floats(0.0, 0.999), st.integers(1, 40), st.floats(-5, 5))
def test_ema_geometric_series(decay, k, value):
    p = make_param([value])
    p.ema_shadow[:] = 0.0
    for _ in range(k):
        ema_update([p], decay)
    assert p.ema_shadow[0] == pytest.approx(value * (1 - decay ** k), abs=1e-12)


def test_ema_swap_involution(rng):
    p = make_param(rng.normal(size=(3, 2)))
    p.ema_shadow = rng.normal(size=(3, 2))
    data, shadow = p.data.copy(), p.ema_shadow.copy()
    ema_swap([p])
    np.testing.assert_array_equal(p.data, shadow)
    ema_swap([p])
    assert p.data.tobytes() == data.tobytes()
    assert p.ema_shadow.tobytes() == shadow.tobytes()


@pytest.mark.parametrize("decay", [-0.1, 1.0, 1.5])
def test_ema_bad_decay(decay):
    with pytest.raises(ContractError):
        ema_update([make_param([1.0])], decay)


def test_l2_skips_biases(rng):
    store = ParamStore(rng)
    w = store.matrix("w", 2, 2)
    store.vector("b", 2, 3.0)
    pen = nd.l2_penalty(store, 0.5)
    assert pen.item() == pytest.approx(0.5 * np.sum(w.data ** 2))


def test_duplicate_parameter_name(rng):
    store = ParamStore(rng)
    store.vector("x", 2)
    with pytest.raises(ContractError):
        store.vector("x", 2)


def test_matrix_init_bounds(rng):
    store = ParamStore(rng)
    w = store.matrix("w", 16, 8)
    assert np.abs(w.data).max() <= 1 / 4
