"""Synthetic desk-scale tasks and samplers for sanity harnesses."""

from __future__ import annotations

import numpy as np

from .corpus import TextPair


def _word(i: int) -> str:
    return f"w{i:03d}"


def make_overlap_pairs(
    n_pairs: int,
    seed: int = 0,
    vocab_size: int = 120,
    min_len: int = 8,
    max_len: int = 14,
    shared_threshold: int = 3,
) -> list[TextPair]:
    """Pairs labeled 1 iff the two texts share >= shared_threshold tokens.

    Generation aims for a balanced label split, but the label is always
    recomputed from the actual token overlap, never trusted from the
    construction.
    """
    rng = np.random.default_rng(seed)
    words = np.array([_word(i) for i in range(vocab_size)])
    pairs = []
    for i in range(n_pairs):
        want_positive = i % 2 == 0
        la = int(rng.integers(min_len, max_len + 1))
        lb = int(rng.integers(min_len, max_len + 1))
        a_idx = rng.choice(vocab_size, size=la, replace=False)
        if want_positive:
            n_shared = int(rng.integers(shared_threshold, min(la, lb) + 1))
        else:
            n_shared = int(rng.integers(0, shared_threshold))
        shared = rng.choice(a_idx, size=n_shared, replace=False)
        rest_pool = np.setdiff1d(np.arange(vocab_size), a_idx, assume_unique=False)
        rest = rng.choice(rest_pool, size=lb - n_shared, replace=False)
        b_idx = np.concatenate([shared, rest])
        rng.shuffle(b_idx)
        text_a = " ".join(words[a_idx])
        text_b = " ".join(words[b_idx])
        overlap = len(set(a_idx.tolist()) & set(b_idx.tolist()))
        pairs.append(TextPair(text_a, text_b, int(overlap >= shared_threshold)))
    return pairs


def make_longtext_pairs(
    n_pairs: int,
    seed: int = 0,
    vocab_size: int = 400,
    min_len: int = 80,
    max_len: int = 180,
    topic_words: int = 40,
    shared_topics_threshold: int = 3,
) -> list[TextPair]:
    """Long-text matching: label 1 iff the pair shares enough topic tokens.

    Topic tokens come from a small sub-vocabulary, filler from the rest,
    which keeps the signal sparse the way long-document matching is.
    """
    rng = np.random.default_rng(seed)
    words = np.array([_word(i) for i in range(vocab_size)])
    topics = np.arange(topic_words)
    filler = np.arange(topic_words, vocab_size)

    def build(topic_idx, length):
        n_fill = length - topic_idx.size
        body = np.concatenate([topic_idx, rng.choice(filler, size=n_fill, replace=True)])
        rng.shuffle(body)
        return body

    pairs = []
    for i in range(n_pairs):
        want_positive = i % 2 == 0
        la = int(rng.integers(min_len, max_len + 1))
        lb = int(rng.integers(min_len, max_len + 1))
        topics_a = rng.choice(topics, size=6, replace=False)
        if want_positive:
            n_shared = int(rng.integers(shared_topics_threshold, 7))
        else:
            n_shared = int(rng.integers(0, shared_topics_threshold))
        shared = rng.choice(topics_a, size=n_shared, replace=False)
        other_pool = np.setdiff1d(topics, topics_a)
        topics_b = np.concatenate([shared, rng.choice(other_pool, size=6 - n_shared, replace=False)])
        a_idx = build(topics_a, la)
        b_idx = build(topics_b, lb)
        overlap = len(set(topics_a.tolist()) & set(topics_b.tolist()))
        pairs.append(
            TextPair(" ".join(words[a_idx]), " ".join(words[b_idx]),
                     int(overlap >= shared_topics_threshold))
        )
    return pairs


def make_ranking_groups(
    n_groups: int,
    candidates_per_group: int = 5,
    seed: int = 0,
) -> list[TextPair]:
    """Query/candidate pairs with one or more relevant answers per group."""
    base = make_overlap_pairs(n_groups * candidates_per_group, seed=seed)
    out = []
    for g in range(n_groups):
        for c in range(candidates_per_group):
            p = base[g * candidates_per_group + c]
            out.append(TextPair(p.text_a, p.text_b, p.label, group_id=f"q{g}"))
    return out


def correlated_gaussians(rho: float, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Samples of a standard bivariate normal with correlation rho."""
    x = rng.normal(size=(n, 1))
    eps = rng.normal(size=(n, 1))
    y = rho * x + np.sqrt(1.0 - rho * rho) * eps
    return x, y
