import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seq2set.corpus import EOS_ID
from seq2set.encoder import encode
from seq2set.multilabel import (
    MultiLabel,
    MultiLabelConfig,
    maxmargin_loss,
    maxmargin_loss_and_grad,
    select_herbs,
)
from seq2set.tensor import AdamState, grad_check, make_rng
from seq2set.training import train_step


def model(seed=0, V=6, H=4, d=3):
    return MultiLabel(MultiLabelConfig(10, V, embed_dim=d, hidden_dim=H), rng=make_rng(seed))


def pairwise_oracle(scores, gold):
    V = len(scores)
    pos = [scores[i] for i in gold]
    neg = [scores[i] for i in range(V) if i not in gold]
    return sum(max(0.0, 1.0 - (p - n)) for p in pos for n in neg) / V


def test_config_validation():
    with pytest.raises(ValueError):
        MultiLabelConfig(5, 5, threshold=1.0)
    with pytest.raises(ValueError):
        MultiLabelConfig(5, 5, k=0)


def test_zero_output_weights_give_one_half():
    m = model()
    m.params["ml_W"][:] = 0
    assert m.predict_probs([4, 5, 6]).tolist() == [0.5] * 6


def test_probabilities_in_open_interval():
    m = model(seed=1)
    m.params["ml_W"] *= 50
    p = m.predict_probs([4, 5, 6, 7])
    assert np.all((p > 0) & (p < 1))


def test_three_herb_hand_computation():
    m = model(seed=2, V=3)
    src = [4, 9, 5]
    h = encode(src, m.params).final
    W = m.params["ml_W"]
    expected = [1 / (1 + math.exp(-sum(h[i] * W[i, v] for i in range(h.size)))) for v in range(3)]
    np.testing.assert_allclose(m.predict_probs(src), expected, rtol=0, atol=1e-15)


# ---- selection ----

def test_select_example():
    assert select_herbs([0.9, 0.8, 0.6, 0.4, 0.95], k=2, threshold=0.5) == {4, 0}


def test_select_below_threshold_is_empty():
    for k in (1, 3, 20):
        assert select_herbs([0.4] * 5, k=k, threshold=0.5) == set()


def test_select_tie_at_rank_k_prefers_smaller_id():
    assert select_herbs([0.7, 0.9, 0.7, 0.7], k=2, threshold=0.5) == {1, 0}


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(1, 25), st.sampled_from([0.3, 0.5, 0.7]))
def test_select_size_and_threshold(probs, k, thr):
    out = select_herbs(probs, k, thr)
    assert len(out) <= k and all(probs[i] > thr for i in out)


# ---- max-margin loss ----

def test_margin_satisfied_is_zero():
    assert maxmargin_loss([3.0, 0.5, 1.9, 0.0], [0]) == 0.0


def test_equal_scores():
    scores = [0.3] * 7
    gold = [1, 4]
    assert maxmargin_loss(scores, gold) == pytest.approx(2 * 5 / 7, abs=1e-15)
    assert maxmargin_loss(scores, gold) == pytest.approx(pairwise_oracle(scores, gold), abs=1e-15)


def test_single_pair_gap_half():
    assert maxmargin_loss([1.5, 1.0], [0]) == pytest.approx(0.5 / 2, abs=1e-15)


def test_empty_gold_rejected():
    with pytest.raises(ValueError):
        maxmargin_loss([0.1, 0.2], [])


@given(st.integers(0, 2**32 - 1))
def test_loss_matches_pairwise_oracle_and_zero_criterion(seed):
    rng = make_rng(seed)
    V = int(rng.integers(2, 12))
    scores = rng.normal(0, 1.5, V)
    gold = sorted(rng.choice(V, int(rng.integers(1, V)), replace=False).tolist())
    loss = maxmargin_loss(scores, gold)
    assert loss == pytest.approx(pairwise_oracle(scores, gold), rel=1e-12, abs=1e-15)
    neg = [i for i in range(V) if i not in gold]
    gap = min(scores[gold]) - max(scores[neg])
    assert (loss == 0.0) == (gap >= 1.0)


def test_gradient_matches_finite_differences_away_from_kinks():
    rng = make_rng(7)
    checked = 0
    while checked < 20:
        V = int(rng.integers(2, 10))
        scores = rng.normal(0, 1, V)
        gold = rng.choice(V, int(rng.integers(1, V)), replace=False).tolist()
        neg = [i for i in range(V) if i not in gold]
        gaps = np.array([[scores[p] - scores[n] for n in neg] for p in gold])
        if np.any(np.abs(1.0 - gaps) < 1e-3):
            continue  # resample: too close to a hinge kink
        _, g = maxmargin_loss_and_grad(scores, gold)
        params = {"s": scores}
        report = grad_check(lambda: maxmargin_loss(params["s"], gold), params, {"s": g}, tolerance=1e-4)
        assert report.passed, str(report)
        checked += 1


# ---- full model ----

def test_full_model_gradient_check():
    m = model(seed=3)
    batch = [([4, 5, 6], [EOS_ID + 1, EOS_ID + 4]), ([7, 8], [EOS_ID + 2])]
    _, grads = m.loss_and_grads(batch)
    report = grad_check(lambda: m.loss(batch), m.params, grads, tolerance=1e-4)
    assert report.passed, str(report)


def test_batch_of_one_equals_duplicated_batch_bitwise():
    a, b = model(seed=4), model(seed=4)
    rec = ([4, 5, 6], [EOS_ID + 1, EOS_ID + 3])
    la, ga = a.loss_and_grads([rec])
    lb, gb = b.loss_and_grads([rec, rec])
    assert la == lb
    for k in ga:
        np.testing.assert_array_equal(ga[k], gb[k])


def test_training_reduces_loss():
    m = model(seed=5, V=8, H=8, d=4)
    batch = [([4, 5], [EOS_ID + 1, EOS_ID + 2]), ([6, 7, 8], [EOS_ID + 5])]
    opt = AdamState(lr=1e-2)
    first = train_step(m, batch, opt)
    for _ in range(30):
        train_step(m, batch, opt)
    assert m.loss(batch) < first


def test_generate_returns_sorted_vocab_ids():
    m = model(seed=6)
    m.params["ml_W"] *= 20
    outs, raw = m.generate_batch([[4, 5, 6], [7]])
    assert outs == raw
    for o in outs:
        assert o == sorted(o) and all(EOS_ID < h <= EOS_ID + 6 for h in o)
        assert len(o) <= m.config.k
