"""Wires encoder, feature extraction and discriminator onto one store."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import Batch
from .encoder import Encoder, EncoderConfig, ParameterStore, _uniform
from .errors import ConfigError
from .features import FeatureConfig, LocalFeatureSet, extract_segment_mode, extract_word_mode
from .infomax import Discriminator, DiscriminatorConfig
from .tensor import Tensor


@dataclass
class Model:
    encoder_config: EncoderConfig
    feature_config: FeatureConfig
    discriminator_config: DiscriminatorConfig
    store: ParameterStore
    encoder: Encoder
    discriminator: Discriminator
    vocab_size: int

    def word_table(self) -> Tensor:
        if "feat.embedding" in self.store:
            return self.store["feat.embedding"]
        return self.store["embedding"]

    def segment_table(self) -> Optional[Tensor]:
        if "disc.segment_embedding" in self.store:
            return self.store["disc.segment_embedding"]
        return None

    def extract_features(self, tokens: np.ndarray, mask: np.ndarray) -> list[LocalFeatureSet]:
        """Per-example local feature sets for one padded batch side."""
        fc = self.feature_config
        sets = []
        for i in range(tokens.shape[0]):
            row = tokens[i][mask[i]]
            if fc.mode == "word":
                sets.append(extract_word_mode(row, self.word_table().data, fc.map_slots))
            else:
                sets.append(extract_segment_mode(row, fc.segment_size, fc.map_slots))
        return sets

    def features_for_batch(self, batch: Batch) -> tuple[list[LocalFeatureSet], list[LocalFeatureSet]]:
        return (
            self.extract_features(batch.tokens_a, batch.mask_a),
            self.extract_features(batch.tokens_b, batch.mask_b),
        )


def build_model(
    encoder_config: EncoderConfig,
    feature_config: FeatureConfig,
    vocab_size: int,
    disc_hidden_units: int = 512,
    disc_hidden_layers: int = 2,
    seed: int = 0,
) -> Model:
    """Construct all parameters deterministically from one seed."""
    if vocab_size < 2:
        raise ConfigError("vocabulary must contain at least padding and unknown entries")
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    encoder = Encoder(encoder_config, vocab_size, store, rng)

    if feature_config.mode == "word" and not feature_config.share_embedding:
        dim = feature_config.embed_dim or encoder_config.embed_dim
        table = _uniform(rng, (vocab_size, dim), dim)
        table[0] = 0.0
        store.register("feat.embedding", table, "encoder")
    if feature_config.mode == "segment":
        sed = feature_config.segment_embed_dim
        table = _uniform(rng, (vocab_size, sed), sed)
        table[0] = 0.0
        store.register("disc.segment_embedding", table, "discriminator")

    slot_width = feature_config.slot_width(encoder_config.embed_dim)
    disc_config = DiscriminatorConfig(
        input_width=slot_width + encoder_config.output_dim,
        hidden_units=disc_hidden_units,
        hidden_layers=disc_hidden_layers,
    )
    discriminator = Discriminator(disc_config, store, rng)
    return Model(encoder_config, feature_config, disc_config, store, encoder, discriminator, vocab_size)
