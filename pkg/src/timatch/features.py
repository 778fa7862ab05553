"""Local feature extraction: word mode for short texts, segment mode for long.

Both modes turn one token-index sequence into K fixed-shape maps of M
slots. Word mode fills slots with embedding vectors, segment mode with
fixed-length runs of raw indices (embedded later, inside the
discriminator path). The final map is zero-padded; padded slots are
flagged so downstream scoring can skip them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError


class SingleMapWarning(UserWarning):
    """M at or above the text length collapses the text to one feature map."""


@dataclass
class FeatureConfig:
    mode: str  # "word" | "segment"
    map_slots: int  # M: slots per feature map
    segment_size: Optional[int] = None  # D: words per segment (segment mode)
    embed_dim: Optional[int] = None  # word-mode slot width
    segment_embed_dim: int = 32  # lookup width for segment indices
    share_embedding: bool = True  # word mode reuses the encoder table

    def __post_init__(self):
        if self.mode not in ("word", "segment"):
            raise ConfigError(f"feature mode must be 'word' or 'segment', got {self.mode!r}")
        if self.map_slots < 1:
            raise ConfigError("map_slots (M) must be >= 1")
        if self.mode == "segment":
            if self.segment_size is None:
                raise ConfigError("segment_size (D) is required in segment mode")
            if self.segment_size < 1:
                raise ConfigError("segment_size (D) must be >= 1")
            if self.segment_embed_dim < 1:
                raise ConfigError("segment_embed_dim must be >= 1")

    def slot_width(self, encoder_embed_dim: int) -> int:
        """Width of one flattened slot as seen by the discriminator."""
        if self.mode == "word":
            return self.embed_dim if (self.embed_dim and not self.share_embedding) else encoder_embed_dim
        return self.segment_size * self.segment_embed_dim


@dataclass
class LocalFeatureSet:
    mode: str
    maps: np.ndarray       # word: (K, M, embed_dim) float copies; segment: (K, M, D) int
    pad_mask: np.ndarray   # (K, M) bool, True where the slot is zero padding
    slot_tokens: Optional[np.ndarray] = None  # word mode: (K, M) source indices
    n_units: int = 0       # real (non-padded) slots in order: n words or S segments

    @property
    def num_maps(self) -> int:
        return self.maps.shape[0]

    @property
    def slots_per_map(self) -> int:
        return self.maps.shape[1]


def extract_word_mode(tokens: np.ndarray, embedding_table: np.ndarray, map_slots: int) -> LocalFeatureSet:
    """Group n word vectors into ceil(n/M) maps of M slots, zero-padding the last.

    Embedding rows are copied, so later table updates never mutate the
    returned set.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    n = tokens.size
    if n == 0:
        raise DataError("cannot extract features from an empty token sequence")
    if map_slots < 1:
        raise ConfigError("map_slots (M) must be >= 1")
    if map_slots >= n:
        warnings.warn(
            f"map_slots M={map_slots} >= sequence length n={n}: the text collapses "
            "to a single feature map and loses structural information",
            SingleMapWarning,
            stacklevel=2,
        )
    k = -(-n // map_slots)  # ceil
    slot_tokens = np.zeros((k, map_slots), dtype=np.int64)
    slot_tokens.reshape(-1)[:n] = tokens
    pad_mask = np.ones((k, map_slots), dtype=bool)
    pad_mask.reshape(-1)[:n] = False
    maps = embedding_table[slot_tokens].astype(embedding_table.dtype, copy=True)
    maps[pad_mask] = 0.0
    return LocalFeatureSet("word", maps, pad_mask, slot_tokens=slot_tokens, n_units=n)


def extract_segment_mode(tokens: np.ndarray, segment_size: int, map_slots: int) -> LocalFeatureSet:
    """Cut the sequence into D-length segments, then group segments into maps.

    The last segment is padded with index zeros; the last map is padded
    with zero-element segments, flagged in pad_mask.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    n = tokens.size
    if n == 0:
        raise DataError("cannot extract features from an empty token sequence")
    if segment_size < 1 or map_slots < 1:
        raise ConfigError("segment_size (D) and map_slots (M) must be >= 1")
    s = -(-n // segment_size)
    segments = np.zeros((s, segment_size), dtype=np.int64)
    segments.reshape(-1)[:n] = tokens
    k = -(-s // map_slots)
    maps = np.zeros((k, map_slots, segment_size), dtype=np.int64)
    maps.reshape(-1, segment_size)[:s] = segments
    pad_mask = np.ones((k, map_slots), dtype=bool)
    pad_mask.reshape(-1)[:s] = False
    return LocalFeatureSet("segment", maps, pad_mask, n_units=s)


def extract(tokens: np.ndarray, config: FeatureConfig, embedding_table: Optional[np.ndarray] = None) -> LocalFeatureSet:
    if config.mode == "word":
        if embedding_table is None:
            raise ConfigError("word mode extraction needs an embedding table")
        return extract_word_mode(tokens, embedding_table, config.map_slots)
    return extract_segment_mode(tokens, config.segment_size, config.map_slots)


def flatten_map(feature_map: np.ndarray) -> np.ndarray:
    """Row-major concatenation of a map's slot vectors."""
    return np.ascontiguousarray(feature_map).reshape(-1)


def reconstruct_tokens(fs: LocalFeatureSet) -> np.ndarray:
    """Invert extraction back to the source index sequence.

    Relies on index 0 being reserved for padding, so trailing zeros inside
    the last segment are unambiguous.
    """
    if fs.mode == "word":
        return fs.slot_tokens[~fs.pad_mask]
    segments = fs.maps[~fs.pad_mask]  # (S, D) in original order
    flat = segments.reshape(-1)
    nonzero = np.nonzero(flat)[0]
    if nonzero.size == 0:
        return flat[:0]
    return flat[: nonzero[-1] + 1]


def feature_set_summary(fs: LocalFeatureSet) -> dict:
    """JSON-friendly dump: one record per slot, padded flag included."""
    slots = []
    for k in range(fs.num_maps):
        for m in range(fs.slots_per_map):
            entry = {
                "map": k,
                "slot": m,
                "padded": bool(fs.pad_mask[k, m]),
            }
            if fs.mode == "word":
                entry["token_index"] = int(fs.slot_tokens[k, m])
                entry["values"] = [float(v) for v in fs.maps[k, m]]
            else:
                entry["values"] = [int(v) for v in fs.maps[k, m]]
            slots.append(entry)
    return {
        "mode": fs.mode,
        "num_maps": fs.num_maps,
        "slots_per_map": fs.slots_per_map,
        "n_units": fs.n_units,
        "slots": slots,
    }
