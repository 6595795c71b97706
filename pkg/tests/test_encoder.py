import numpy as np
import pytest

from mpverify.data import Example, Vocabulary, make_batch
from mpverify.encoder import (EncoderParams, attention_flow, embed, encode, load_pretrained,
                              match)
from mpverify.ndcore import ContractError, ParamStore, Tensor, backward, check_gradients

H, WD, CD = 3, 4, 2


def make_params(vocab, pretrained=None, seed=0):
    store = ParamStore(np.random.default_rng(seed))
    return store, EncoderParams.create(store, vocab.n_tokens, vocab.n_chars, WD, CD, H, pretrained)


def toy_batch(passages=("a b c", "d e", "c a b d")):
    ex = Example("t", "what is c".split(), [p.split() for p in passages])
    vocab = Vocabulary.build([ex])
    return ex, vocab, make_batch([ex], vocab)


def test_embed_width_and_char_sum():
    _, vocab, b = toy_batch()
    _, params = make_params(vocab)
    e = embed(params, b.q_ids[0], b.q_chars[0])
    assert e.shape == (3, WD + CD)
    # "c" is one character: its char half is exactly that character's row
    c_row = params.char.data[vocab.ctoi["c"]]
    np.testing.assert_allclose(e.data[2, WD:], c_row)
    # "what" sums four character rows
    expected = sum(params.char.data[vocab.ctoi[ch]] for ch in "what")
    np.testing.assert_allclose(e.data[0, WD:], expected)


def test_unknown_tokens_share_a_row():
    _, vocab, _ = toy_batch()
    _, params = make_params(vocab)
    ids = np.array([vocab.token_id("zzz"), vocab.token_id("yyy")])
    chars = np.zeros((2, 1), dtype=int)
    e = embed(params, ids, chars).data
    np.testing.assert_array_equal(e[0], e[1])


def test_pad_rows_are_zero():
    _, vocab, _ = toy_batch()
    _, params = make_params(vocab)
    assert not params.word.data[0].any() and not params.char.data[0].any()


def test_passages_encoded_independently():
    ex, vocab, b = toy_batch()
    _, params = make_params(vocab)
    B, N, Tp = b.p_ids.shape
    q = embed(params, b.q_ids, b.q_chars)
    p = embed(params, b.p_ids.reshape(N, Tp), b.p_chars.reshape(N, Tp, -1))
    _, _, up = encode(params, q, b.q_mask, p, b.p_mask.reshape(N, Tp))
    perm = [2, 0, 1]
    p2 = embed(params, b.p_ids[0][perm], b.p_chars[0][perm])
    _, _, up2 = encode(params, q, b.q_mask, p2, b.p_mask[0][perm])
    np.testing.assert_allclose(up2.data, up.data[perm], atol=1e-12)


def test_empty_passage_rejected():
    _, vocab, b = toy_batch()
    _, params = make_params(vocab)
    q = embed(params, b.q_ids, b.q_chars)
    p = Tensor(np.zeros((1, 3, WD + CD)))
    with pytest.raises(ContractError, match="empty passage"):
        encode(params, q, b.q_mask, p, np.zeros((1, 3), dtype=bool))


def test_orthogonal_encodings_give_uniform_attention():
    uq = Tensor(np.array([[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [9.0, 9.0, 9.0, 9.0]]]))
    up = Tensor(np.array([[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 2.0]]]))
    q_mask = np.array([[True, True, False]])
    merged, sim, c2q, q2c = attention_flow(uq, q_mask, up, np.ones((1, 2), dtype=bool))
    assert sim.shape == (1, 3, 2)
    np.testing.assert_allclose(c2q.data[0, :2], 0.5)
    np.testing.assert_array_equal(c2q.data[0, 2], 0.0)
    np.testing.assert_allclose(q2c.data, 0.5)
    assert merged.shape == (1, 2, 16)


def test_merged_blocks():
    rng = np.random.default_rng(2)
    uq = Tensor(rng.normal(size=(1, 2, 4)))
    up = Tensor(rng.normal(size=(1, 3, 4)))
    merged, sim, c2q, q2c = attention_flow(uq, np.ones((1, 2), bool), up, np.ones((1, 3), bool))
    m = merged.data[0]
    u, at = up.data[0], (c2q.data[0].T @ uq.data[0])
    h = q2c.data[0] @ up.data[0]
    np.testing.assert_allclose(m, np.concatenate([u, at, u * at, u * h], axis=-1))
    np.testing.assert_allclose(sim.data[0], uq.data[0] @ up.data[0].T)


def test_fully_masked_question_rejected():
    uq = Tensor(np.ones((1, 2, 4)))
    up = Tensor(np.ones((1, 3, 4)))
    with pytest.raises(ContractError):
        attention_flow(uq, np.zeros((1, 2), bool), up, np.ones((1, 3), bool))


def test_attention_flow_gradients():
    rng = np.random.default_rng(5)
    uq = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    up = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    q_mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
    p_mask = np.array([[1, 1, 1, 0], [1, 1, 1, 1]], dtype=bool)
    weights = rng.normal(size=(2, 4, 16))

    def f():
        merged = attention_flow(uq, q_mask, up, p_mask)[0]
        return (merged * weights).sum()

    assert max(check_gradients(f, [uq, up])) < 1e-6


def test_match_single_passage_matches_batched():
    rng = np.random.default_rng(0)
    store = ParamStore(rng)
    params = EncoderParams.create(store, 5, 5, WD, CD, H)
    uq = Tensor(rng.normal(size=(3, 2 * H)))
    up = Tensor(rng.normal(size=(4, 2 * H)))
    one = match(params, uq, np.ones(3, bool), up, np.ones(4, bool))
    two = match(params, uq.reshape(1, 3, 2 * H), np.ones((1, 3), bool), up.reshape(1, 4, 2 * H),
                np.ones((1, 4), bool))
    assert one.v.shape == (1, 4, 2 * H)
    np.testing.assert_allclose(one.v.data, two.v.data)


def test_frozen_pretrained_table(tmp_path):
    _, vocab, b = toy_batch()
    path = tmp_path / "vec.txt"
    path.write_text("a 1 2 3 4\nc 0 0 1 0\n")
    table = load_pretrained(path, vocab, WD, np.random.default_rng(0))
    np.testing.assert_array_equal(table[vocab.stoi["a"]], [1, 2, 3, 4])
    store, params = make_params(vocab, table)
    assert not store["embed.word"].trainable
    assert "embed.unk" in store.names()
    ids = np.array([vocab.token_id("a"), 1])
    out = embed(params, ids, np.ones((2, 1), dtype=int))
    backward(out.sum(), store.trainable())
    assert params.word.grad is None
    assert params.unk.grad is not None and np.allclose(params.unk.grad, 1.0)
    np.testing.assert_allclose(out.data[1, :WD], params.unk.data)


def test_pretrained_wrong_width(tmp_path):
    _, vocab, _ = toy_batch()
    path = tmp_path / "vec.txt"
    path.write_text("a 1 2\n")
    with pytest.raises(ContractError, match="expected token"):
        load_pretrained(path, vocab, WD, np.random.default_rng(0))
