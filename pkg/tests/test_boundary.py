import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpverify.boundary import (BoundaryParams, boundary_loss, best_span, extract_candidates,
                               predict_boundary)
from mpverify.data import OffsetTable
from mpverify.ndcore import ContractError, ParamStore, Tensor, check_gradients

from oracles import brute_candidates

H = 3


def setup(rng, B=2, L=6):
    store = ParamStore(rng)
    params = BoundaryParams.create(store, H)
    v = Tensor(rng.normal(size=(B, L, 2 * H)), requires_grad=True)
    q = Tensor(rng.normal(size=(B, 2 * H)), requires_grad=True)
    mask = np.ones((B, L), dtype=bool)
    mask[0, -2:] = False
    return store, params, v, q, mask


def test_distributions_normalised_and_masked(rng):
    _, params, v, q, mask = setup(rng)
    dist = predict_boundary(params, v, mask, q)
    for probs in (dist.start.data, dist.end.data):
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(probs[~mask] == 0.0)
        assert np.all(probs[mask] > 0.0)


def test_zero_scorer_is_uniform_and_loss_is_two_log_n(rng):
    _, params, v, q, mask = setup(rng)
    params.attn_out.data[:] = 0.0
    dist = predict_boundary(params, v, mask, q)
    np.testing.assert_allclose(dist.start.data[1], 1 / 6)
    np.testing.assert_allclose(dist.end.data[0, :4], 1 / 4)
    loss = boundary_loss(dist, np.array([0, 2]), np.array([3, 5]))
    assert loss.item() == pytest.approx((2 * math.log(4) + 2 * math.log(6)) / 2, abs=1e-12)


def test_boundary_gradients(rng):
    store, params, v, q, mask = setup(rng, B=2, L=4)

    def f():
        return boundary_loss(predict_boundary(params, v, mask, q), np.array([0, 1]), np.array([1, 3]))

    inputs = [v, q, params.init_w, params.init_b, params.attn_v, params.attn_h, params.attn_out,
              params.decoder.wx, params.decoder.wh, params.decoder.b]
    assert max(check_gradients(f, inputs)) < 1e-6


def test_masked_gold_rejected(rng):
    _, params, v, q, mask = setup(rng)
    dist = predict_boundary(params, v, mask, q)
    with pytest.raises(ContractError):
        boundary_loss(dist, np.array([5, 0]), np.array([5, 0]))


def test_one_hot_distributions_pick_their_span():
    table = OffsetTable([4, 6], 6)
    start = np.zeros(10)
    end = np.zeros(10)
    start[table.to_global(1, 3)] = 1.0
    end[table.to_global(1, 5)] = 1.0
    cands = extract_candidates(start, end, table)
    best = max(cands, key=lambda c: c.boundary_score)
    assert (best.passage, best.start, best.end) == (1, 3, 5)
    assert best.boundary_score == 1.0
    assert (best.global_start, best.global_end) == (7, 9)


def test_max_span_len_one_gives_single_tokens():
    table = OffsetTable([5], 5)
    start = np.array([0.1, 0.6, 0.1, 0.1, 0.1])
    end = np.array([0.1, 0.1, 0.1, 0.6, 0.1])
    [c] = extract_candidates(start, end, table, max_span_len=1)
    assert c.start == c.end
    assert c.boundary_score == pytest.approx(max(start * end))


def test_best_span_tie_breaks_to_first_start():
    s, e, _ = best_span(np.full(3, 1 / 3), np.full(3, 1 / 3), 3)
    assert (s, e) == (0, 0)


def test_candidate_tokens_attached():
    table = OffsetTable([2, 3], 3)
    start = np.array([0.9, 0.1, 0.2, 0.5, 0.3])
    end = np.array([0.1, 0.9, 0.1, 0.1, 0.8])
    cands = extract_candidates(start, end, table, passages=[["a", "b"], ["c", "d", "e"]])
    assert [c.answer for c in cands] == ["a b", "d e"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=4), st.integers(1, 8), st.integers(0, 2 ** 31))
def test_extraction_matches_brute_force(lengths, max_len, seed):
    if sum(lengths) == 0:
        lengths = lengths + [1]
    rng = np.random.default_rng(seed)
    total = sum(lengths)
    start = rng.dirichlet(np.ones(total))
    end = rng.dirichlet(np.ones(total))
    table = OffsetTable(lengths, max(lengths))
    got = [(c.passage, c.start, c.end, c.boundary_score)
           for c in extract_candidates(start, end, table, max_span_len=max_len)]
    want = brute_candidates(start, end, lengths, max_len)
    assert [g[:3] for g in got] == [w[:3] for w in want]
    np.testing.assert_allclose([g[3] for g in got], [w[3] for w in want])
