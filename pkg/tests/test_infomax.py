import numpy as np
import pytest

from timatch.encoder import EncoderConfig, ParameterStore
from timatch.errors import ConfigError, DataError
from timatch.features import FeatureConfig, extract_segment_mode, extract_word_mode
from timatch.infomax import (
    Discriminator,
    DiscriminatorConfig,
    dv_lower_bound,
    local_mi_objective,
    mi_loss_for_pair,
    sample_negatives,
    score_feature_sets,
)
from timatch.model import build_model
from timatch.tensor import Tensor

from oracles import finite_difference, grad_close

RNG = np.random.default_rng(21)


def tiny_disc(input_width=7, hidden=6, layers=2, seed=0):
    store = ParameterStore()
    cfg = DiscriminatorConfig(input_width=input_width, hidden_units=hidden, hidden_layers=layers)
    return Discriminator(cfg, store, np.random.default_rng(seed)), store


def word_model(seed=0, m=2, **enc_overrides):
    defaults = dict(embed_dim=4, num_blocks=1, conv_layers_per_block=1,
                    hidden_dim=5, output_dim=3, num_classes=2)
    defaults.update(enc_overrides)
    enc_cfg = EncoderConfig(**defaults)
    feat_cfg = FeatureConfig(mode="word", map_slots=m)
    return build_model(enc_cfg, feat_cfg, vocab_size=30, disc_hidden_units=6,
                       disc_hidden_layers=2, seed=seed)


def segment_model(seed=0, m=2, d=3, sed=4):
    enc_cfg = EncoderConfig(embed_dim=4, num_blocks=1, conv_layers_per_block=1,
                            hidden_dim=5, output_dim=3, num_classes=2)
    feat_cfg = FeatureConfig(mode="segment", map_slots=m, segment_size=d, segment_embed_dim=sed)
    return build_model(enc_cfg, feat_cfg, vocab_size=30, disc_hidden_units=6,
                       disc_hidden_layers=2, seed=seed)


# ---------------------------------------------------------------------------
# discriminator scoring
# ---------------------------------------------------------------------------

def test_zero_weights_score_zero():
    disc, store = tiny_disc()
    for n in store.names("discriminator"):
        store[n].data[:] = 0.0
    slot = RNG.normal(size=4)
    rep = RNG.normal(size=3)
    assert disc.score_location(slot, rep).item() == 0.0


def test_score_location_deterministic():
    disc, _ = tiny_disc()
    slot = RNG.normal(size=4)
    rep = RNG.normal(size=3)
    s1 = disc.score_location(slot, rep).item()
    s2 = disc.score_location(slot, rep).item()
    assert s1 == s2


def test_batched_scoring_equals_loop_bitwise():
    disc, _ = tiny_disc(input_width=7)
    rows = RNG.normal(size=(19, 7))
    batched = disc.score(Tensor(rows)).data
    looped = np.array([disc.score_location(rows[i, :4], rows[i, 4:]).item() for i in range(19)])
    assert np.array_equal(batched, looped)


def test_score_width_mismatch_errors():
    disc, _ = tiny_disc(input_width=7)
    with pytest.raises(ConfigError):
        disc.score(Tensor(np.zeros((2, 5))))


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------

def test_negatives_batch_of_two_is_swap():
    assert sample_negatives(2, seed=0).tolist() == [1, 0]


def test_negatives_no_fixed_points():
    for seed in range(50):
        perm = sample_negatives(5, seed=seed)
        assert not np.any(perm == np.arange(5))
        assert sorted(perm.tolist()) == [0, 1, 2, 3, 4]


def test_negatives_deterministic_and_small_batch_errors():
    assert np.array_equal(sample_negatives(8, seed=3), sample_negatives(8, seed=3))
    with pytest.raises(ConfigError):
        sample_negatives(1, seed=0)


# ---------------------------------------------------------------------------
# DV lower bound
# ---------------------------------------------------------------------------

def test_dv_constant_scores_zero():
    c = 1.7
    assert dv_lower_bound(np.full(5, c), np.full(9, c)).item() == pytest.approx(0.0, abs=1e-12)


def test_dv_direct_formula_case():
    # 1 - log((e^0 + e^0) / 2) = 1
    got = dv_lower_bound(np.array([1.0, 1.0]), np.array([0.0, 0.0])).item()
    assert got == pytest.approx(1.0, abs=1e-12)


def test_dv_shift_invariance():
    rng = np.random.default_rng(4)
    joint = rng.normal(size=11)
    marg = rng.normal(size=13)
    base = dv_lower_bound(joint, marg).item()
    for c in (-20.0, -3.3, 0.7, 20.0):
        shifted = dv_lower_bound(joint + c, marg + c).item()
        assert abs(shifted - base) <= 1e-10


def test_dv_empty_errors():
    with pytest.raises(DataError):
        dv_lower_bound(np.array([]), np.array([1.0]))


def test_dv_gradient():
    joint = RNG.normal(size=6)
    marg = RNG.normal(size=6)
    tj = Tensor(joint.copy(), requires_grad=True)
    tm = Tensor(marg.copy(), requires_grad=True)
    dv_lower_bound(tj, tm).backward()
    num_j = finite_difference(lambda: dv_lower_bound(Tensor(tj.data), Tensor(tm.data)).item(), tj.data)
    num_m = finite_difference(lambda: dv_lower_bound(Tensor(tj.data), Tensor(tm.data)).item(), tm.data)
    grad_close(tj.grad, num_j)
    grad_close(tm.grad, num_m)


# ---------------------------------------------------------------------------
# local objective over feature sets
# ---------------------------------------------------------------------------

def _word_sets(model, token_rows):
    table = model.word_table().data
    return [extract_word_mode(np.asarray(r), table, model.feature_config.map_slots)
            for r in token_rows]


def test_single_location_reduction():
    model = word_model(m=1)
    sets = _word_sets(model, [[5], [9]])
    reps = Tensor(RNG.normal(size=(2, 3)))
    perm = np.array([1, 0])
    dv, loss, _ = local_mi_objective(sets, reps, perm, model.discriminator,
                                     word_table=model.word_table())
    # two texts, one slot each: dv = mean(j) - log(mean(exp(m)))
    d = model.discriminator
    j0 = d.score_location(model.word_table().data[5], reps.data[0]).item()
    j1 = d.score_location(model.word_table().data[9], reps.data[1]).item()
    m0 = d.score_location(model.word_table().data[5], reps.data[1]).item()
    m1 = d.score_location(model.word_table().data[9], reps.data[0]).item()
    expected = (j0 + j1) / 2 - np.log((np.exp(m0) + np.exp(m1)) / 2)
    assert dv.item() == pytest.approx(expected, rel=1e-12)
    assert loss.item() == pytest.approx(-expected, rel=1e-12)


def test_identical_real_and_fake_gives_zero():
    model = word_model(m=2)
    sets = _word_sets(model, [[4, 4, 4], [4, 4, 4]])  # identical texts
    rep = RNG.normal(size=3)
    reps = Tensor(np.stack([rep, rep]))  # identical representations
    dv, loss, _ = local_mi_objective(sets, reps, np.array([1, 0]), model.discriminator,
                                     word_table=model.word_table())
    assert dv.item() == pytest.approx(0.0, abs=1e-12)


def test_padded_slots_are_excluded():
    model = word_model(m=2)
    # lengths 3 -> one padded slot each; garbage in the table's pad row
    model.word_table().data[0] = 123.0
    sets = _word_sets(model, [[4, 5, 6], [7, 8, 9]])
    reps = Tensor(RNG.normal(size=(2, 3)))
    scores = score_feature_sets(sets, reps, np.array([1, 0]), model.discriminator,
                                word_table=model.word_table())
    assert scores.joint_scores.data.size == 6  # 3 real slots per text
    assert scores.marginal_scores.data.size == 6


def test_mi_gradients_match_finite_differences_word_mode():
    model = word_model(m=2)
    sets = _word_sets(model, [[4, 5, 6], [7, 8, 9], [10, 11]])
    reps_arr = RNG.normal(size=(3, 3))
    perm = sample_negatives(3, seed=1)

    def loss_value():
        fresh_sets = _word_sets(model, [[4, 5, 6], [7, 8, 9], [10, 11]])
        reps = Tensor(reps_arr)
        _, loss, _ = local_mi_objective(fresh_sets, reps, perm, model.discriminator,
                                        word_table=model.word_table())
        return loss.item()

    reps_t = Tensor(reps_arr, requires_grad=True)
    model.store.zero_grads()
    _, loss, _ = local_mi_objective(sets, reps_t, perm, model.discriminator,
                                    word_table=model.word_table())
    loss.backward()

    grad_close(reps_t.grad, finite_difference(loss_value, reps_arr))
    for pname in ["disc.h0.W", "disc.h1.W", "disc.out.W", "disc.out.b", "embedding"]:
        numeric = finite_difference(loss_value, model.store[pname].data)
        analytic = model.store[pname].grad
        if analytic is None:
            analytic = np.zeros_like(numeric)
        grad_close(analytic, numeric)


def test_mi_gradients_match_finite_differences_segment_mode():
    model = segment_model(m=2, d=3, sed=4)
    rows = [np.arange(4, 12), np.arange(12, 17)]
    sets = [extract_segment_mode(r, 3, 2) for r in rows]
    reps_arr = RNG.normal(size=(2, 3))
    perm = np.array([1, 0])

    def loss_value():
        _, loss, _ = local_mi_objective(sets, Tensor(reps_arr), perm, model.discriminator,
                                        segment_table=model.segment_table())
        return loss.item()

    model.store.zero_grads()
    _, loss, _ = local_mi_objective(sets, Tensor(reps_arr, requires_grad=True), perm,
                                    model.discriminator, segment_table=model.segment_table())
    loss.backward()
    for pname in ["disc.segment_embedding", "disc.h0.W"]:
        numeric = finite_difference(loss_value, model.store[pname].data)
        grad_close(model.store[pname].grad, numeric)


def test_segment_pad_index_stays_zero_vector():
    from timatch.infomax import build_slot_matrix

    model = segment_model(m=1, d=4, sed=3)
    model.store["disc.segment_embedding"].data[0] = 55.0  # poison the pad row
    tokens = np.array([5, 6])  # one segment, padded with two zeros
    fs = extract_segment_mode(tokens, 4, 1)
    slots, _ = build_slot_matrix([fs], segment_table=model.segment_table())
    # slot layout: 4 index positions x 3 embed dims; the last two positions
    # hold pad indices and must embed to exact zeros despite the poison
    assert np.all(slots.data[0, 2 * 3:] == 0.0)
    assert np.any(slots.data[0, : 2 * 3] != 0.0)


def test_all_locations_padded_errors():
    model = word_model(m=2)
    fs = _word_sets(model, [[4], [5]])
    for s in fs:
        s.pad_mask[:] = True
    with pytest.raises(DataError):
        score_feature_sets(fs, Tensor(RNG.normal(size=(2, 3))), np.array([1, 0]),
                           model.discriminator, word_table=model.word_table())


# ---------------------------------------------------------------------------
# pair loss
# ---------------------------------------------------------------------------

def test_pair_loss_sum_and_swap():
    model = word_model(m=2)
    fa = _word_sets(model, [[4, 5, 6], [7, 8]])
    fb = _word_sets(model, [[9, 10], [11, 12, 13]])
    ra = Tensor(RNG.normal(size=(2, 3)))
    rb = Tensor(RNG.normal(size=(2, 3)))
    perm = np.array([1, 0])
    mi, _ = mi_loss_for_pair(fa, ra, fb, rb, perm, model.discriminator,
                             word_table=model.word_table())
    assert mi.loss_m.item() == mi.loss_ts.item() + mi.loss_tt.item()
    swapped, _ = mi_loss_for_pair(fb, rb, fa, ra, perm, model.discriminator,
                                  word_table=model.word_table())
    assert swapped.loss_ts.item() == mi.loss_tt.item()
    assert swapped.loss_tt.item() == mi.loss_ts.item()


def test_pair_loss_zero_weight_discriminator():
    model = word_model(m=2)
    for n in model.store.names("discriminator"):
        model.store[n].data[:] = 0.0
    fa = _word_sets(model, [[4, 5], [6, 7]])
    fb = _word_sets(model, [[8, 9], [10, 11]])
    reps = Tensor(RNG.normal(size=(2, 3)))
    mi, _ = mi_loss_for_pair(fa, reps, fb, reps, np.array([1, 0]), model.discriminator,
                             word_table=model.word_table())
    assert mi.loss_m.item() == 0.0
    assert mi.dv_estimate_ts == 0.0


def test_toy_training_drives_dv_estimate_positive():
    # global rep copies local content: real pairs are (v, v), fakes (v', v);
    # 500 optimizer steps must push the DV estimate above zero
    from timatch.training import Adam

    model = word_model(m=1, output_dim=4, embed_dim=4)
    table = model.word_table()
    rng = np.random.default_rng(0)
    opt = Adam(model.store, lr=1e-3)
    rows = [[int(t)] for t in rng.integers(2, 30, size=16)]
    sets = _word_sets(model, rows)
    final_dv = 0.0
    for step in range(500):
        reps = Tensor(np.stack([table.data[r[0]] for r in rows]))
        perm = sample_negatives(16, seed=step)
        dv, loss, _ = local_mi_objective(sets, reps, perm, model.discriminator,
                                         word_table=table)
        model.store.zero_grads()
        loss.backward()
        opt.step(grad_clip=5.0)
        final_dv = dv.item()
    assert final_dv > 0.0


def test_rejects_permutation_with_fixed_points():
    model = word_model(m=2)
    fa = _word_sets(model, [[4, 5], [6, 7]])
    with pytest.raises(ConfigError):
        score_feature_sets(fa, Tensor(RNG.normal(size=(2, 3))), np.array([0, 1]),
                           model.discriminator, word_table=model.word_table())
