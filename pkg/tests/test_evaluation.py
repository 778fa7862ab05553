import itertools

import numpy as np
import pytest

from timatch.errors import DataError
from timatch.evaluation import (
    RankedGroup,
    accuracy,
    group_candidates,
    mean_average_precision,
    mean_reciprocal_rank,
)

from oracles import average_precision_bruteforce, reciprocal_rank_bruteforce


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def test_accuracy_all_correct():
    scores = np.eye(3)
    assert accuracy(scores, np.array([0, 1, 2])) == 1.0


def test_accuracy_three_of_four():
    scores = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    assert accuracy(scores, np.array([0, 0, 1, 0])) == 0.75


def test_accuracy_tie_break_lowest_class():
    scores = np.array([[0.5, 0.5]])
    assert accuracy(scores, np.array([0])) == 1.0
    assert accuracy(scores, np.array([1])) == 0.0


def test_accuracy_empty_errors():
    with pytest.raises(DataError):
        accuracy(np.zeros((0, 2)), np.zeros(0))


# ---------------------------------------------------------------------------
# MAP / MRR stated examples
# ---------------------------------------------------------------------------

def g(*cands, gid="q"):
    return RankedGroup(gid, list(cands))


def test_map_relevant_first_is_one():
    value, skipped = mean_average_precision([g((0.9, True), (0.1, False))])
    assert value == 1.0
    assert skipped == 0


def test_map_rank_pattern_0_1_0():
    # ranking by score gives relevance [0, 1, 0] -> AP = 1/2
    value, _ = mean_average_precision([g((0.9, False), (0.5, True), (0.1, False))])
    assert value == 0.5


def test_map_mean_of_group_aps():
    g1 = g((0.9, True), (0.1, False))                 # AP 1.0
    g2 = g((0.9, False), (0.5, True), gid="q2")       # AP 0.5
    value, _ = mean_average_precision([g1, g2])
    assert value == 0.75


def test_mrr_first_ranked():
    value, _ = mean_reciprocal_rank([g((0.9, True), (0.1, False))])
    assert value == 1.0


def test_mrr_rank_three():
    value, _ = mean_reciprocal_rank(
        [g((0.9, False), (0.5, False), (0.2, True), (0.1, False))]
    )
    assert value == pytest.approx(1 / 3)


def test_groups_without_relevant_skipped_and_counted():
    groups = [g((0.9, True)), g((0.5, False), gid="q2")]
    value, skipped = mean_average_precision(groups)
    assert value == 1.0
    assert skipped == 1
    with pytest.raises(DataError):
        mean_average_precision([g((0.5, False))])


def test_ties_break_by_input_order():
    #  equal scores: input order is the ranking
    value, _ = mean_reciprocal_rank([g((0.5, False), (0.5, True), (0.5, False))])
    assert value == 0.5


# ---------------------------------------------------------------------------
# exhaustive oracle: every permutation of <=6 candidates x binary patterns
# ---------------------------------------------------------------------------

def enumerate_cases(max_n=6):
    for n in range(1, max_n + 1):
        patterns = [p for p in itertools.product([False, True], repeat=n) if any(p)]
        for perm in itertools.permutations(range(n)):
            yield n, perm, patterns


def test_metrics_match_bruteforce_on_all_small_rankings():
    checked = 0
    for n, perm, patterns in enumerate_cases(6):
        scores = [float(perm[i]) for i in range(n)]
        ranked_order = sorted(range(n), key=lambda i: -scores[i])
        for pattern in patterns:
            group = RankedGroup("q", [(scores[i], pattern[i]) for i in range(n)])
            ranked_relevance = [pattern[i] for i in ranked_order]
            got_map, _ = mean_average_precision([group])
            got_mrr, _ = mean_reciprocal_rank([group])
            assert got_map == pytest.approx(average_precision_bruteforce(ranked_relevance), abs=1e-12)
            assert got_mrr == pytest.approx(reciprocal_rank_bruteforce(ranked_relevance), abs=1e-12)
            if sum(pattern) == 1:
                assert got_map == got_mrr
            checked += 1
    # sum over n=1..6 of n! * (2^n - 1)
    assert checked == 49_489


# ---------------------------------------------------------------------------
# property checks
# ---------------------------------------------------------------------------

def test_raising_relevant_score_never_decreases_metrics():
    rng = np.random.default_rng(8)
    for _ in range(300):
        n = int(rng.integers(2, 7))
        scores = rng.normal(size=n)
        rel = rng.random(n) < 0.4
        if not rel.any():
            rel[int(rng.integers(n))] = True
        group = RankedGroup("q", list(zip(scores.tolist(), rel.tolist())))
        m0, _ = mean_average_precision([group])
        r0, _ = mean_reciprocal_rank([group])
        i = int(np.flatnonzero(rel)[0])
        scores2 = scores.copy()
        scores2[i] += float(rng.random()) * 2
        group2 = RankedGroup("q", list(zip(scores2.tolist(), rel.tolist())))
        m1, _ = mean_average_precision([group2])
        r1, _ = mean_reciprocal_rank([group2])
        assert m1 >= m0 - 1e-12
        assert r1 >= r0 - 1e-12


def test_invariance_under_monotone_transforms():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        scores = rng.normal(size=n)
        rel = rng.random(n) < 0.5
        if not rel.any():
            rel[0] = True
        base = RankedGroup("q", list(zip(scores.tolist(), rel.tolist())))
        m0, _ = mean_average_precision([base])
        r0, _ = mean_reciprocal_rank([base])
        for f in (np.exp, lambda x: 3 * x + 7, lambda x: x ** 3):
            t = RankedGroup("q", list(zip(f(scores).tolist(), rel.tolist())))
            m1, _ = mean_average_precision([t])
            r1, _ = mean_reciprocal_rank([t])
            assert m1 == pytest.approx(m0, abs=1e-12)
            assert r1 == pytest.approx(r0, abs=1e-12)


def test_group_candidates_requires_ids():
    with pytest.raises(DataError):
        group_candidates([0.5], [True], [None])
    groups = group_candidates([0.5, 0.2, 0.9], [True, False, True], ["a", "a", "b"])
    assert len(groups) == 2
    assert groups[0].group_id == "a"
    assert len(groups[0].candidates) == 2
