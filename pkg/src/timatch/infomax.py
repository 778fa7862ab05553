"""Donsker-Varadhan mutual-information machinery.

The discriminator scores (local slot, global representation) pairs: the
global vector is concatenated onto every non-padded slot of every feature
map and pushed through a 1x1-conv style MLP, giving one scalar per
location. Real pairings use a text's own representation, fake pairings a
deranged partner from the same batch. The per-side loss is the negated DV
lower bound over all scored locations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .features import LocalFeatureSet
from .tensor import Tensor, concat, embedding, logsumexp


@dataclass
class DiscriminatorConfig:
    input_width: int
    hidden_units: int = 512
    hidden_layers: int = 2

    def __post_init__(self):
        if self.input_width < 1 or self.hidden_units < 1 or self.hidden_layers < 1:
            raise ConfigError("discriminator dimensions must be positive")


@dataclass
class MiBatchScores:
    joint_scores: Tensor     # (n_real,) one per non-padded location
    marginal_scores: Tensor  # (n_fake,)

    def __post_init__(self):
        if self.joint_scores.data.size == 0 or self.marginal_scores.data.size == 0:
            raise DataError("MI scoring produced an empty side (all locations padded)")


@dataclass
class MiLoss:
    loss_ts: Tensor
    loss_tt: Tensor
    loss_m: Tensor
    dv_estimate_ts: float
    dv_estimate_tt: float


class Discriminator:
    """Concat-and-convolve critic: per-location MLP with a scalar head.

    Linear layers run through the order-independent matmul kernel so that
    scoring a batch of locations and scoring them one by one agree bit for
    bit.
    """

    def __init__(self, config: DiscriminatorConfig, store, rng: np.random.Generator,
                 prefix: str = "disc"):
        self.config = config
        self.store = store
        self.prefix = prefix
        width = config.input_width
        for l in range(config.hidden_layers):
            scale = 1.0 / np.sqrt(width)
            store.register(f"{prefix}.h{l}.W",
                           rng.uniform(-scale, scale, size=(width, config.hidden_units)),
                           "discriminator")
            store.register(f"{prefix}.h{l}.b", np.zeros(config.hidden_units), "discriminator")
            width = config.hidden_units
        scale = 1.0 / np.sqrt(width)
        store.register(f"{prefix}.out.W", rng.uniform(-scale, scale, size=(width, 1)),
                       "discriminator")
        store.register(f"{prefix}.out.b", np.zeros(1), "discriminator")

    def score(self, inputs: Tensor) -> Tensor:
        """Score a (N, input_width) stack of [slot, global] rows -> (N,)."""
        if inputs.shape[-1] != self.config.input_width:
            raise ConfigError(
                f"discriminator expects width {self.config.input_width}, got {inputs.shape[-1]}"
            )
        h = inputs
        for l in range(self.config.hidden_layers):
            w = self.store[f"{self.prefix}.h{l}.W"]
            b = self.store[f"{self.prefix}.h{l}.b"]
            h = (h.matmul(w, exact=True) + b).relu()
        w = self.store[f"{self.prefix}.out.W"]
        b = self.store[f"{self.prefix}.out.b"]
        return (h.matmul(w, exact=True) + b).reshape(inputs.shape[0])

    def score_location(self, slot_vector, global_rep) -> Tensor:
        """Score a single (slot, global) location; returns a scalar tensor."""
        slot = slot_vector if isinstance(slot_vector, Tensor) else Tensor(slot_vector)
        rep = global_rep if isinstance(global_rep, Tensor) else Tensor(global_rep)
        row = concat([slot.reshape(1, -1), rep.reshape(1, -1)], axis=1)
        return self.score(row).reshape(())


def sample_negatives(batch_size: int, seed) -> np.ndarray:
    """Deterministic derangement of batch indices (no fixed points)."""
    if batch_size < 2:
        raise ConfigError("negative sampling needs a batch of at least 2 texts")
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(batch_size)
        if not np.any(perm == np.arange(batch_size)):
            return perm


def dv_lower_bound(joint_scores, marginal_scores) -> Tensor:
    """mean(joint) - logmeanexp(marginal), max-shifted for stability."""
    joint = joint_scores if isinstance(joint_scores, Tensor) else Tensor(joint_scores)
    marginal = marginal_scores if isinstance(marginal_scores, Tensor) else Tensor(marginal_scores)
    if joint.data.size == 0 or marginal.data.size == 0:
        raise DataError("DV bound needs at least one score on each side")
    n = marginal.data.size
    return joint.mean() - (logsumexp(marginal.reshape(n)) - float(np.log(n)))


def build_slot_matrix(
    feature_sets: Sequence[LocalFeatureSet],
    word_table: Optional[Tensor] = None,
    segment_table: Optional[Tensor] = None,
) -> tuple[Tensor, np.ndarray]:
    """Stack every non-padded slot of every set into one (N, width) tensor.

    Returns the slot tensor and an owner array mapping each row back to
    its example index. Word slots gather from the (shared) embedding
    table inside the graph, so MI gradients reach it; segment slots embed
    their indices with the dedicated lookup, zeros staying exact zeros.
    """
    if not feature_sets:
        raise DataError("no feature sets to score")
    mode = feature_sets[0].mode
    owners = []
    if mode == "word":
        if word_table is None:
            raise ConfigError("word-mode scoring needs the embedding table")
        tokens = []
        for i, fs in enumerate(feature_sets):
            keep = ~fs.pad_mask.reshape(-1)
            toks = fs.slot_tokens.reshape(-1)[keep]
            tokens.append(toks)
            owners.append(np.full(toks.size, i, dtype=np.intp))
        flat = np.concatenate(tokens)
        if flat.size == 0:
            raise DataError("all locations padded; nothing to score")
        slots = embedding(word_table, flat)
    else:
        if segment_table is None:
            raise ConfigError("segment-mode scoring needs the segment lookup table")
        segs = []
        for i, fs in enumerate(feature_sets):
            keep = ~fs.pad_mask.reshape(-1)
            d = fs.maps.shape[2]
            kept = fs.maps.reshape(-1, d)[keep]
            segs.append(kept)
            owners.append(np.full(kept.shape[0], i, dtype=np.intp))
        flat = np.concatenate(segs, axis=0)
        if flat.size == 0:
            raise DataError("all locations padded; nothing to score")
        emb = embedding(segment_table, flat)  # (N, D, sed)
        emb = emb * (flat != 0)[:, :, None].astype(T.DTYPE)  # index 0 stays a zero vector
        n, d = flat.shape
        slots = emb.reshape(n, d * segment_table.shape[1])
    return slots, np.concatenate(owners)


def score_feature_sets(
    feature_sets: Sequence[LocalFeatureSet],
    reps: Tensor,
    negatives: np.ndarray,
    discriminator: Discriminator,
    word_table: Optional[Tensor] = None,
    segment_table: Optional[Tensor] = None,
) -> MiBatchScores:
    """Real and fake per-location scores for one side of the batch.

    Fake pairings give each text's representation the slots of its
    deranged partner; equivalently, each slot row is scored against the
    representation of the example whose negative it is.
    """
    slots, owner = build_slot_matrix(feature_sets, word_table, segment_table)
    negatives = np.asarray(negatives, dtype=np.intp)
    if negatives.shape[0] != len(feature_sets):
        raise ConfigError("negative permutation size must match the batch")
    if np.any(negatives == np.arange(negatives.size)):
        raise ConfigError("negative permutation must have no fixed points")
    inverse = np.argsort(negatives)
    joint_in = concat([slots, reps.take_rows(owner)], axis=1)
    marginal_in = concat([slots, reps.take_rows(inverse[owner])], axis=1)
    return MiBatchScores(
        joint_scores=discriminator.score(joint_in),
        marginal_scores=discriminator.score(marginal_in),
    )


def local_mi_objective(
    feature_sets: Sequence[LocalFeatureSet],
    reps: Tensor,
    negatives: np.ndarray,
    discriminator: Discriminator,
    word_table: Optional[Tensor] = None,
    segment_table: Optional[Tensor] = None,
    ema: Optional[float] = None,
    ema_decay: float = 0.99,
):
    """DV estimate over all non-padded locations and its training loss.

    Averaging over map locations happens inside the two expectations.
    Returns (dv_estimate, loss, new_ema); with `ema` set, the loss uses
    the moving-average gradient correction for the marginal term while
    the reported estimate stays the plain DV value.
    """
    scores = score_feature_sets(feature_sets, reps, negatives, discriminator,
                                word_table, segment_table)
    dv = dv_lower_bound(scores.joint_scores, scores.marginal_scores)
    new_ema = None
    if ema is None:
        loss = -dv
    else:
        mean_exp = scores.marginal_scores.exp().mean()
        new_ema = float(ema_decay * ema + (1.0 - ema_decay) * mean_exp.item())
        # constant denominator: gradient of this term is E[e^T grad T] / ema
        loss = -(scores.joint_scores.mean() - mean_exp * (1.0 / max(new_ema, 1e-12)))
    return dv, loss, new_ema


def mi_loss_for_pair(
    features_a: Sequence[LocalFeatureSet],
    rep_a: Tensor,
    features_b: Sequence[LocalFeatureSet],
    rep_b: Tensor,
    negatives: np.ndarray,
    discriminator: Discriminator,
    word_table: Optional[Tensor] = None,
    segment_table: Optional[Tensor] = None,
    ema: Optional[tuple] = None,
    ema_decay: float = 0.99,
) -> tuple[MiLoss, Optional[tuple]]:
    """Per-side DV losses for a batch of pairs, summed into loss_m."""
    ema_a, ema_b = ema if ema is not None else (None, None)
    dv_a, loss_a, new_ema_a = local_mi_objective(
        features_a, rep_a, negatives, discriminator, word_table, segment_table,
        ema=ema_a, ema_decay=ema_decay)
    dv_b, loss_b, new_ema_b = local_mi_objective(
        features_b, rep_b, negatives, discriminator, word_table, segment_table,
        ema=ema_b, ema_decay=ema_decay)
    result = MiLoss(
        loss_ts=loss_a,
        loss_tt=loss_b,
        loss_m=loss_a + loss_b,
        dv_estimate_ts=dv_a.item(),
        dv_estimate_tt=dv_b.item(),
    )
    new_ema = (new_ema_a, new_ema_b) if ema is not None else None
    return result, new_ema
