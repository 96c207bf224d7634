"""Comparison scores: greedy vector pairing, bit intersection, folding."""

import math

import numpy as np
import pytest

from fpbits.bit_training import FingerModel
from fpbits.codebook import BitString
from fpbits.errors import BadLength, LengthMismatch
from fpbits.matching import (
    fold_compress,
    intersection_score,
    lgs_pair_budget,
    lgs_score,
    masked_score,
)


def bits(*positions, k=10, template_length=None):
    arr = np.zeros(k, dtype=bool)
    for p in positions:
        arr[p] = True
    return BitString(arr, template_length=template_length)


# ---------------------------------------------------------------------------
# pair budget
# ---------------------------------------------------------------------------

def test_pair_budget_spot_values():
    assert lgs_pair_budget(35, 35) == 7  # sigmoid midpoint
    assert lgs_pair_budget(35, 200) == 7  # smaller count drives it
    assert lgs_pair_budget(1, 1) == 4
    assert lgs_pair_budget(0, 50) == 4
    assert lgs_pair_budget(1000, 1000) == 10


def test_pair_budget_monotone_and_bounded():
    prev = 0
    for n in range(0, 200):
        b = lgs_pair_budget(n, n)
        assert 4 <= b <= 10
        assert b >= prev
        prev = b


# ---------------------------------------------------------------------------
# greedy pairing
# ---------------------------------------------------------------------------

def greedy_oracle(a, b, budget):
    ranked = sorted(
        (float(np.linalg.norm(a[i] - b[j])), i, j)
        for i in range(len(a))
        for j in range(len(b))
    )
    used_a, used_b, picked = set(), set(), []
    for d, i, j in ranked:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        picked.append(d)
        if len(picked) >= budget:
            break
    return picked


def test_lgs_matches_greedy_oracle():
    rng = np.random.default_rng(149)
    for _ in range(30):
        n_a = int(rng.integers(1, 25))
        n_b = int(rng.integers(1, 25))
        a = np.round(rng.normal(size=(n_a, 4)), 3)  # rounding provokes ties
        b = np.round(rng.normal(size=(n_b, 4)), 3)
        got = lgs_score(a, b)
        budget = lgs_pair_budget(n_a, n_b)
        picked = greedy_oracle(a, b, budget)
        assert got.support == len(picked)
        assert math.isclose(got.value, float(np.mean(picked)), rel_tol=1e-12)
        assert got.short == (len(picked) < budget)
        assert got.kind == "lgs"


def test_lgs_single_pair():
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    score = lgs_score(a, b)
    assert math.isclose(score.value, 5.0)
    assert score.support == 1 and score.short


def test_lgs_identical_sets_score_zero():
    rng = np.random.default_rng(151)
    a = rng.normal(size=(40, 6))
    score = lgs_score(a, a.copy())
    assert score.value == 0.0
    assert not score.short


def test_lgs_empty_side():
    a = np.zeros((0, 3))
    b = np.ones((2, 3))
    for x, y in ((a, b), (b, a), (a, a)):
        score = lgs_score(x, y)
        assert math.isinf(score.value)
        assert score.support == 0 and score.short


def test_lgs_dim_mismatch():
    with pytest.raises(LengthMismatch):
        lgs_score(np.zeros((2, 3)), np.zeros((2, 4)))


# ---------------------------------------------------------------------------
# intersection score
# ---------------------------------------------------------------------------

def test_intersection_spot_values():
    a = bits(0, 1, 2)
    b = bits(1, 2, 5, 7)
    score = intersection_score(a, b)  # sizes 3 and 4, common 2
    assert score.value == 0.56
    assert score.support == 2

    same = bits(1, 4, 6)
    assert intersection_score(same, bits(1, 4, 6)).value == 1.0
    assert intersection_score(bits(0, 1), bits(5, 6)).value == 0.0


def test_intersection_identity_is_exact_one():
    rng = np.random.default_rng(157)
    for _ in range(50):
        arr = rng.random(64) < 0.3
        if not arr.any():
            continue
        bs = BitString(arr)
        assert intersection_score(bs, BitString(arr.copy())).value == 1.0


def test_intersection_empty_both():
    score = intersection_score(bits(), bits())
    assert score.value == 0.0 and score.support == 0


def test_intersection_bounded():
    rng = np.random.default_rng(163)
    for _ in range(200):
        a = BitString(rng.random(32) < rng.uniform(0.1, 0.9))
        b = BitString(rng.random(32) < rng.uniform(0.1, 0.9))
        v = intersection_score(a, b).value
        assert 0.0 <= v <= 1.0


def test_intersection_length_checks():
    with pytest.raises(LengthMismatch):
        intersection_score(bits(0, k=10), bits(0, k=12))
    with pytest.raises(LengthMismatch):
        intersection_score(bits(0, k=10), bits(0, k=10, template_length=20))


# ---------------------------------------------------------------------------
# masked score
# ---------------------------------------------------------------------------

def finger_with_mask(mask):
    m = np.asarray(mask, dtype=bool)
    k = m.shape[0]
    return FingerModel(
        finger_id="f",
        power=np.zeros(k),
        reliability=np.zeros(k),
        mask=m,
        n_mean=5.0,
    )


def test_masked_score_both_sides():
    query = bits(0, 1, 2, 3, k=6)
    enrolled = bits(1, 2, 4, k=6)
    finger = finger_with_mask([0, 1, 1, 1, 0, 0])
    got = masked_score(query, enrolled, finger, mask_both=True)
    want = intersection_score(bits(1, 2, 3, k=6), bits(1, 2, k=6))
    assert got.value == want.value


def test_masked_score_enrolled_only():
    query = bits(0, 1, 2, 3, k=6)
    enrolled = bits(1, 2, 4, k=6)
    finger = finger_with_mask([0, 1, 1, 1, 0, 0])
    got = masked_score(query, enrolled, finger, mask_both=False)
    want = intersection_score(query, bits(1, 2, k=6))
    assert got.value == want.value


def test_masked_score_length_check():
    finger = finger_with_mask([1, 0, 1])
    with pytest.raises(LengthMismatch):
        masked_score(bits(0, k=4), bits(1, k=4), finger)


# ---------------------------------------------------------------------------
# fold compression
# ---------------------------------------------------------------------------

def test_fold_or_semantics():
    bs = bits(0, 5, 9, k=10)
    folded = fold_compress(bs, 5)
    # positions 0, 5 collapse onto 0; 9 lands on 4
    assert folded.bits.tolist() == [True, False, False, False, True]
    assert folded.template_length == 10
    assert len(folded) == 5


def test_fold_identity_at_own_length():
    rng = np.random.default_rng(167)
    for _ in range(20):
        bs = BitString(rng.random(24) < 0.4)
        same = fold_compress(bs, 24)
        assert np.array_equal(same.bits, bs.bits)
        assert same.template_length == bs.template_length


def test_fold_popcount_never_grows():
    rng = np.random.default_rng(173)
    for _ in range(50):
        k = int(rng.integers(2, 64))
        bs = BitString(rng.random(k) < rng.uniform(0.1, 0.8))
        length = int(rng.integers(1, k + 1))
        folded = fold_compress(bs, length)
        assert folded.ones <= bs.ones
        assert len(folded) == length


def test_fold_identical_strings_score_one():
    rng = np.random.default_rng(179)
    for _ in range(30):
        arr = rng.random(40) < 0.35
        if not arr.any():
            continue
        a = fold_compress(BitString(arr), 17)
        b = fold_compress(BitString(arr.copy()), 17)
        assert intersection_score(a, b).value == 1.0


def test_fold_keeps_strings_comparable_only_at_same_history():
    bs = BitString(np.ones(12, dtype=bool))
    with pytest.raises(LengthMismatch):
        # same current length, different original lengths
        intersection_score(fold_compress(bs, 6), BitString(np.ones(6, dtype=bool)))


def test_fold_length_validation():
    bs = bits(0, k=8)
    with pytest.raises(BadLength):
        fold_compress(bs, 0)
    with pytest.raises(BadLength):
        fold_compress(bs, 9)
