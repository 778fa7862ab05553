import numpy as np
import pytest

from timatch.errors import DataError
from timatch.features import (
    FeatureConfig,
    SingleMapWarning,
    extract_segment_mode,
    extract_word_mode,
    flatten_map,
    reconstruct_tokens,
)

from oracles import segment_grouping_bruteforce, word_grouping_bruteforce


def _table(vocab_size=64, dim=5, seed=0):
    t = np.random.default_rng(seed).normal(size=(vocab_size, dim))
    t[0] = 0.0
    return t


# ---------------------------------------------------------------------------
# word mode
# ---------------------------------------------------------------------------

def test_word_mode_seven_tokens_three_slots():
    table = _table()
    tokens = np.arange(2, 9)  # n=7
    fs = extract_word_mode(tokens, table, map_slots=3)
    assert fs.num_maps == 3
    assert fs.pad_mask.sum() == 2
    assert fs.pad_mask[2].tolist() == [False, True, True]
    # agree with the slicing oracle
    oracle = word_grouping_bruteforce(tokens.tolist(), 3)
    for k, omap in enumerate(oracle):
        for m, tok in enumerate(omap):
            if tok is None:
                assert fs.pad_mask[k, m]
                assert np.all(fs.maps[k, m] == 0.0)
            else:
                assert fs.slot_tokens[k, m] == tok
                assert np.array_equal(fs.maps[k, m], table[tok])


def test_word_mode_exact_fit_no_padding():
    fs = extract_word_mode(np.array([2, 3, 4]), _table(), map_slots=3)
    assert fs.num_maps == 1
    assert not fs.pad_mask.any()


def test_word_mode_short_text_warns():
    with pytest.warns(SingleMapWarning):
        fs = extract_word_mode(np.array([2, 3]), _table(), map_slots=3)
    assert fs.num_maps == 1
    assert fs.pad_mask.sum() == 1


def test_word_mode_copies_embeddings():
    table = _table()
    fs = extract_word_mode(np.array([2, 3, 4, 5]), table, map_slots=2)
    before = fs.maps.copy()
    table[:] = 999.0
    assert np.array_equal(fs.maps, before)


def test_word_mode_empty_errors():
    with pytest.raises(DataError):
        extract_word_mode(np.array([], dtype=np.int64), _table(), 3)


# ---------------------------------------------------------------------------
# segment mode
# ---------------------------------------------------------------------------

def test_segment_mode_paper_shape_case():
    # n=25, D=12, M=10: 3 segments (last has 11 zeros), 1 map with 7 padded slots
    tokens = np.arange(2, 27)
    fs = extract_segment_mode(tokens, segment_size=12, map_slots=10)
    assert fs.n_units == 3
    assert fs.num_maps == 1
    assert fs.pad_mask.sum() == 7
    assert (fs.maps[0, 2, 1:] == 0).all() and fs.maps[0, 2, 0] == 26
    oracle = segment_grouping_bruteforce(tokens.tolist(), 12, 10)
    for m, seg in enumerate(oracle[0]):
        if seg is None:
            assert fs.pad_mask[0, m]
        else:
            assert fs.maps[0, m].tolist() == seg


def test_segment_mode_exact_fit():
    tokens = np.arange(2, 2 + 12)  # n = D*M = 12
    fs = extract_segment_mode(tokens, segment_size=4, map_slots=3)
    assert fs.num_maps == 1
    assert not fs.pad_mask.any()
    assert (fs.maps != 0).all()


def test_segment_mode_single_token():
    fs = extract_segment_mode(np.array([5]), segment_size=1, map_slots=1)
    assert fs.num_maps == 1
    assert fs.n_units == 1
    assert not fs.pad_mask.any()


def test_segment_d1_is_isomorphic_to_word_slots():
    tokens = np.arange(2, 13)
    word = extract_word_mode(tokens, _table(), map_slots=4)
    seg = extract_segment_mode(tokens, segment_size=1, map_slots=4)
    assert np.array_equal(seg.maps[:, :, 0], word.slot_tokens)
    assert np.array_equal(seg.pad_mask, word.pad_mask)


# ---------------------------------------------------------------------------
# flatten
# ---------------------------------------------------------------------------

def test_flatten_preserves_slot_order():
    m = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    assert flatten_map(m).tolist() == [1, 2, 3, 4, 5, 6]


def test_flatten_all_padded_map_is_zero():
    fs = extract_word_mode(np.array([2, 3, 4]), _table(), map_slots=2)
    padded_only = fs.maps[1] * ~fs.pad_mask[1][:, None]
    assert flatten_map(fs.maps[1] * 0).sum() == 0
    assert np.array_equal(padded_only[1], np.zeros(5))


def test_flatten_reshape_roundtrip():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 7))
    assert np.array_equal(flatten_map(m).reshape(4, 7), m)


# ---------------------------------------------------------------------------
# reconstruction + map-count formulas (fuzz)
# ---------------------------------------------------------------------------

def test_reconstruction_fuzz_both_modes():
    rng = np.random.default_rng(1234)
    table = _table(vocab_size=600, dim=3)
    for _ in range(2_000):
        n = int(rng.integers(1, 501))
        m = int(rng.integers(1, 33))
        d = int(rng.integers(1, 33))
        tokens = rng.integers(2, 600, size=n)

        with pytest.warns((SingleMapWarning,)) if m >= n else _nullcontext():
            word = extract_word_mode(tokens, table, m)
        assert word.num_maps == -(-n // m)
        assert np.array_equal(reconstruct_tokens(word), tokens)
        stacked = word.maps[~word.pad_mask]
        assert np.array_equal(stacked, table[tokens])

        seg = extract_segment_mode(tokens, d, m)
        s = -(-n // d)
        assert seg.n_units == s
        assert seg.num_maps == -(-s // m)
        assert np.array_equal(reconstruct_tokens(seg), tokens)


class _nullcontext:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False
