import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import forests
from gradcheck import directional_check
from threadloom.autograd import Tensor
from threadloom.corpus import CandidateLevels, ReplyForest, candidate_levels, derive_sessions
from threadloom.loss import HrlWeights, batched_level_losses, level_losses, total_loss


def levels(c, r1, r2=(), r3=(), r4=()):
    return CandidateLevels(c, frozenset(r1), frozenset(r2), frozenset(r3), frozenset(r4))


def grouped_oracle(s, num, den):
    if not num:
        return 0.0
    return -math.log(sum(math.exp(s[j]) for j in num) / sum(math.exp(s[j]) for j in den))


def test_equal_scores_log_n():
    lv = levels(4, {2}, {0, 1}, {3}, {4})
    l1, l2, l3 = level_losses({j: 0.7 for j in range(5)}, lv)
    assert l1.item() == pytest.approx(math.log(5), abs=1e-12)
    assert l2.item() == pytest.approx(math.log(4 / 2), abs=1e-12)
    assert l3.item() == pytest.approx(math.log(2), abs=1e-12)


def test_empty_numerators_zero():
    lv = levels(2, {1}, (), (), {0, 2})
    l1, l2, l3 = level_losses({0: 1.0, 1: -2.0, 2: 0.5}, lv)
    assert l2.item() == 0.0 and l3.item() == 0.0
    assert l1.item() > 0


def test_empty_numerator_has_no_gradient():
    lv = levels(2, {1}, (), (), {0, 2})
    s = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    _, l2, _ = level_losses(s, lv, candidates=[0, 1, 2])
    l2.backward()
    assert np.all(s.grad == 0)


def test_dominant_parent():
    lv = levels(2, {0}, (), (), {1, 2})
    l1, _, _ = level_losses({0: 60.0, 1: 0.0, 2: 0.0}, lv)
    assert l1.item() < 1e-20 + 2 * math.exp(-60)


def test_matches_closed_form_random():
    rng = np.random.default_rng(0)
    forest = ReplyForest((0, 0, 1, 3, 2, 3, 5, 0))
    part = derive_sessions(forest)
    for c in range(8):
        lv = candidate_levels(c, forest, part, 5)
        cands = sorted(set().union(*lv.as_tuple()))
        s = {j: float(rng.normal()) for j in cands}
        l1, l2, l3 = level_losses(s, lv)
        r1, r2, r3, r4 = lv.as_tuple()
        assert l1.item() == pytest.approx(grouped_oracle(s, r1, r1 | r2 | r3 | r4), abs=1e-12)
        assert l2.item() == pytest.approx(grouped_oracle(s, r2, r2 | r3 | r4), abs=1e-12)
        assert l3.item() == pytest.approx(grouped_oracle(s, r3, r3 | r4), abs=1e-12)


@settings(max_examples=60)
@given(forests(min_size=2, max_size=14), st.integers(0, 1000), st.floats(-30, 30))
def test_non_negative_and_shift_invariant(forest, seed, shift):
    rng = np.random.default_rng(seed)
    c = len(forest) - 1
    lv = candidate_levels(c, forest, None, 6)
    cands = sorted(set().union(*lv.as_tuple()))
    s = rng.normal(size=len(cands))
    a = [x.item() for x in level_losses(s, lv, cands)]
    b = [x.item() for x in level_losses(s + shift, lv, cands)]
    assert all(x >= -1e-12 for x in a)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_zero_when_numerator_is_whole_denominator():
    lv = levels(1, {1}, {0})
    _, l2, _ = level_losses({0: 3.0, 1: -1.0}, lv)
    assert l2.item() == pytest.approx(0.0, abs=1e-15)


def test_coverage_checked():
    lv = levels(1, {1}, {0})
    with pytest.raises(ValueError):
        level_losses({1: 0.0}, lv)
    with pytest.raises(ValueError):
        level_losses([0.0, 1.0], lv)


def test_total_defaults():
    w = HrlWeights()
    assert (w.alpha1, w.alpha2, w.alpha3) == (1.0, 0.1, 0.05)
    assert total_loss(Tensor(2.0), Tensor(3.0), Tensor(4.0)).item() == pytest.approx(2 + 0.3 + 0.2)


def test_total_pairwise_only():
    w = HrlWeights(1.0, 0.0, 0.0)
    assert total_loss(Tensor(1.25), Tensor(9.0), Tensor(9.0), w).item() == 1.25


def test_total_zero():
    assert total_loss(Tensor(0.0), Tensor(0.0), Tensor(0.0)).item() == 0.0


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        HrlWeights(1.0, -0.1, 0.0)


def test_batched_matches_single():
    rng = np.random.default_rng(3)
    forest = ReplyForest((0, 0, 1, 0, 3, 4))
    rows, masks = [], np.zeros((4, 6, 6), dtype=bool)
    S = rng.normal(size=(6, 6))
    for c in range(6):
        lv = candidate_levels(c, forest, None, 4)
        for k, s in enumerate(lv.as_tuple()):
            masks[k, c, list(s)] = True
        cands = sorted(set().union(*lv.as_tuple()))
        rows.append([x.item() for x in level_losses(S[c, cands], lv, cands)])
    l1, l2, l3 = batched_level_losses(S, masks)
    np.testing.assert_allclose(np.stack([l1.data, l2.data, l3.data], axis=1), rows, atol=1e-12)


def test_loss_gradient():
    rng = np.random.default_rng(5)
    forest = ReplyForest((0, 0, 1, 0, 3, 2))
    masks = np.zeros((4, 6, 6), dtype=bool)
    for c in range(6):
        for k, s in enumerate(candidate_levels(c, forest, None, 6).as_tuple()):
            masks[k, c, list(s)] = True
    S = Tensor(rng.normal(size=(6, 6)), requires_grad=True)

    def f():
        l1, l2, l3 = batched_level_losses(S, masks)
        return total_loss(l1.sum(), l2.sum(), l3.sum())

    assert directional_check(f, {"S": S}, rng)["S"] < 1e-7
