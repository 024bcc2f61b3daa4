import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdm.similarity import (
    Classification,
    EmptyBlock,
    SimilarityScore,
    classify_score,
    detection_allowed,
    jaccard,
)

A, N = Classification.ABNORMAL, Classification.NORMAL


def test_identical_blocks():
    assert jaccard({"m1", "m2", "m3"}, {"m1", "m2", "m3"}).value == 1.0


def test_disjoint_blocks():
    assert jaccard({"m1"}, {"m2"}).value == 0.0


def test_partial_overlap():
    s = jaccard({"m1", "m2", "m3"}, {"m2", "m3", "m4"})
    assert (s.z, s.x_only, s.y_only) == (2, 1, 1)
    assert s.value == 0.5


@pytest.mark.parametrize("x, y", [(set(), {"m1"}), ({"m1"}, set()), (set(), set())])
def test_empty_block_rejected(x, y):
    with pytest.raises(EmptyBlock):
        jaccard(x, y)


@pytest.mark.parametrize("value, expected", [(1.0, A), (0.8, A), (0.5, N), (0.0, N)])
def test_classify_table(value, expected):
    assert classify_score(value) is expected


def test_threshold_is_exact():
    assert classify_score(SimilarityScore(4, 1, 0)) is A           # 4/5
    assert classify_score(SimilarityScore(79, 21, 0)) is N         # 0.79
    assert classify_score(SimilarityScore(799, 201, 0)) is N       # 0.799
    assert classify_score(Fraction(4, 5) - Fraction(1, 10**12)) is N
    assert classify_score(0.7999999999999999) is N


def test_threshold_configurable():
    assert classify_score(0.5, threshold=0.5) is A
    assert classify_score(0.49, threshold="0.5") is N
    with pytest.raises(ValueError):
        classify_score(0.5, threshold=0)
    with pytest.raises(ValueError):
        classify_score(0.5, threshold=1.5)


@pytest.mark.parametrize("args, expected", [((3, 4, 10), True), ((0, 4, 10), False), ((3, 0, 10), False),
                                            ((3, 4, 0), False)])
def test_detection_allowed(args, expected):
    assert detection_allowed(*args) is expected


def _naive(a, b):
    inter = 0
    for m in a:
        for n in b:
            if m == n:
                inter += 1
    union = len(a) + len(b) - inter
    return Fraction(inter, union)


def test_oracle_all_subset_pairs():
    universe = [f"aa:bb:cc:00:00:{i:02x}" for i in range(6)]
    subsets = [frozenset(c) for r in range(1, 7) for c in itertools.combinations(universe, r)]
    assert len(subsets) ** 2 == 3969
    for a in subsets:
        for b in subsets:
            assert jaccard(a, b).fraction == _naive(a, b)


blocks = st.frozensets(st.integers(0, 20), min_size=1, max_size=12)


@given(blocks, blocks)
def test_symmetry_and_bounds(a, b):
    s, t = jaccard(a, b), jaccard(b, a)
    assert s.fraction == t.fraction
    assert 0 <= s.value <= 1
    assert jaccard(a, a).value == 1
    if not a & b:
        assert s.value == 0


@given(st.fractions(0, 1), st.fractions(0, 1), st.fractions(Fraction(1, 100), 1))
def test_threshold_monotone(s, s2, t):
    lo, hi = sorted((s, s2))
    if classify_score(lo, t) is A:
        assert classify_score(hi, t) is A
