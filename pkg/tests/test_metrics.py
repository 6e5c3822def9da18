import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tagrank.metrics import dcg, mean_curve, ndcg_at_k, prediction_error, relevance_rb, relevance_rg

gains = st.lists(st.floats(0, 1), min_size=1, max_size=12)


def test_relevance_examples():
    assert relevance_rg([0.6, 0.4], [0.6, 0.4]) == pytest.approx(1.0)
    assert relevance_rg([0.5, 0.0], [0.0, 0.5]) == 0.0
    assert relevance_rg([0.6, 0.4], [1.0, 0.0]) == pytest.approx(0.83205, abs=1e-5)
    assert relevance_rb([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        relevance_rg([0, 0], [1, 0])
    with pytest.raises(ValueError):
        relevance_rg([1, 0], [1, 0, 0])


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.lists(st.floats(0, 1), min_size=3, max_size=3),
       st.floats(0.1, 10))
def test_relevance_properties(a, b, s):
    a, b = np.array(a), np.array(b)
    if a.sum() < 1e-3 or b.sum() < 1e-3:
        return
    r = relevance_rg(a, b)
    assert r == relevance_rg(b, a) and 0 <= r <= 1
    assert relevance_rg(a, s * a) == pytest.approx(1.0)
    assert 0 <= relevance_rb(a, b) <= 1


def test_relevance_one_iff_proportional():
    assert relevance_rg([1, 2], [2, 4]) == pytest.approx(1.0)
    assert relevance_rg([1, 2], [2, 3]) < 1 - 1e-6


def test_ndcg_examples():
    assert ndcg_at_k([0.5, 1.0], [1.0, 0.5], 2) == pytest.approx(0.82861, abs=1e-4)
    assert ndcg_at_k([1.0, 0.5, 0.2], [0.2, 1.0, 0.5], 3) == pytest.approx(1.0)
    assert ndcg_at_k([0, 0, 0], [0, 0, 0], 2) == 0.0
    with pytest.raises(ValueError):
        ndcg_at_k([1.0], [1.0], 0)


def test_ndcg_ideal_uses_whole_database():
    # the top-3 list is perfect among itself but a better item exists deeper in the database
    assert ndcg_at_k([0.5, 0.4, 0.3], [0.5, 0.4, 0.3, 1.0], 3) < 1.0


def test_dcg_definition():
    assert dcg([1.0, 1.0], 2) == pytest.approx(1 + 1 / math.log2(3))


@given(gains, st.integers(1, 12), st.data())
def test_ndcg_swap_monotone(g, k, data):
    i = data.draw(st.integers(0, len(g) - 1))
    j = data.draw(st.integers(0, len(g) - 1))
    i, j = min(i, j), max(i, j)
    before = ndcg_at_k(g, g, k)
    h = list(g)
    if h[j] > h[i]:
        h[i], h[j] = h[j], h[i]
    assert ndcg_at_k(h, g, k) >= before - 1e-12
    assert 0 <= before <= 1 + 1e-12


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.integers(1, 6))
def test_ndcg_brute_force_normalization(g, k):
    best = max(dcg(list(p), k) for p in permutations(g))
    expect = 0.0 if best == 0 else dcg(g, k) / best
    assert ndcg_at_k(g, g, k) == pytest.approx(expect, abs=1e-12)


def test_prediction_error():
    truth = {"a": {"x": 0.3, "y": 0.7}, "b": {"x": 1.0}}
    assert prediction_error(truth, truth) == 0.0
    pred = {"a": {"x": 0.4, "y": 0.6}, "b": {"x": 0.7}}
    assert prediction_error(pred, truth) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        prediction_error({"a": truth["a"]}, truth)
    with pytest.raises(ValueError):
        prediction_error({"a": {"x": 0.3}, "b": {"x": 1.0}}, truth)


def test_mean_curve():
    assert mean_curve([{1: 0.0, 5: 1.0}, {1: 1.0, 5: 0.0}]) == {1: 0.5, 5: 0.5}
