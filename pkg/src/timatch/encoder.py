"""Block-structured sequence-pair encoder with alignment, fusion and
augmented residual wiring, plus max-pooling into a global representation
and a feed-forward prediction head.

All comparisons run in float64 on the small autodiff engine; padded
positions are re-zeroed after every stage so padding can never leak into
the class scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .tensor import Tensor, concat, embedding, masked_max, masked_softmax


@dataclass
class EncoderConfig:
    embed_dim: int = 300
    num_blocks: int = 2            # tuned 1..3
    conv_layers_per_block: int = 1  # tuned 1..3
    conv_kernel: int = 3
    hidden_dim: int = 150
    output_dim: int = 200          # 150 for the inference-style configs
    num_classes: int = 2
    symmetric_prediction: bool = False
    share_towers: bool = True
    freeze_embeddings: bool = False

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "output_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 1 <= self.num_blocks <= 3:
            raise ConfigError("num_blocks must be in [1, 3]")
        if not 1 <= self.conv_layers_per_block <= 3:
            raise ConfigError("conv_layers_per_block must be in [1, 3]")
        if self.conv_kernel % 2 != 1:
            raise ConfigError("conv_kernel must be odd for same-length convolution")


class ParameterStore:
    """Named dense parameters with gradient slots, grouped by owner.

    Groups split the trainables between the encoder ('encoder') and the
    discriminator ('discriminator'); frozen arrays stay registered but are
    skipped by the optimizer.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}
        self._trainable: dict[str, bool] = {}

    def register(self, name: str, value: np.ndarray, group: str, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        t = Tensor(np.asarray(value, dtype=T.DTYPE), requires_grad=True, name=name)
        self._params[name] = t
        self._groups[name] = group
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self, group: Optional[str] = None) -> list[str]:
        return [n for n in self._params if group is None or self._groups[n] == group]

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_names(self) -> list[str]:
        return [n for n in self._params if self._trainable[n]]

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def count(self, group: Optional[str] = None) -> int:
        return sum(self._params[n].data.size for n in self.names(group))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ConfigError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for n, arr in state.items():
            if tuple(arr.shape) != self._params[n].data.shape:
                raise ConfigError(f"shape mismatch for {n}: {arr.shape} vs {self._params[n].data.shape}")
            self._params[n].data = np.asarray(arr, dtype=T.DTYPE).copy()


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape)


def _strip_padding(tokens: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop trailing all-padded columns so extra padding cannot perturb
    any reduction downstream."""
    cols = mask.any(axis=0)
    if not cols.any():
        raise DataError("a batch side is entirely padding")
    width = int(np.max(np.nonzero(cols)[0])) + 1
    return tokens[:, :width], mask[:, :width]


class Encoder:
    """The two-tower matching network; one tower applied twice when shared."""

    def __init__(self, config: EncoderConfig, vocab_size: int, store: ParameterStore,
                 rng: np.random.Generator):
        self.config = config
        self.vocab_size = vocab_size
        self.store = store
        cfg = config
        ed, hd, od = cfg.embed_dim, cfg.hidden_dim, cfg.output_dim
        k = cfg.conv_kernel

        emb = _uniform(rng, (vocab_size, ed), ed)
        emb[0] = 0.0  # padding row
        store.register("embedding", emb, "encoder", trainable=not cfg.freeze_embeddings)

        towers = ["enc"] if cfg.share_towers else ["enc_a", "enc_b"]
        for pfx in towers:
            for b in range(cfg.num_blocks):
                in_ch = ed if b == 0 else ed + hd
                width = in_ch
                for l in range(cfg.conv_layers_per_block):
                    store.register(f"{pfx}.block{b}.conv{l}.W",
                                   _uniform(rng, (k, width, hd), k * width), "encoder")
                    store.register(f"{pfx}.block{b}.conv{l}.b", np.zeros(hd), "encoder")
                    width = hd
                w_al = in_ch + hd
                for branch in ("cat", "sub", "mul"):
                    store.register(f"{pfx}.block{b}.fuse.{branch}.W",
                                   _uniform(rng, (2 * w_al, hd), 2 * w_al), "encoder")
                    store.register(f"{pfx}.block{b}.fuse.{branch}.b", np.zeros(hd), "encoder")
                store.register(f"{pfx}.block{b}.fuse.out.W", _uniform(rng, (3 * hd, hd), 3 * hd), "encoder")
                store.register(f"{pfx}.block{b}.fuse.out.b", np.zeros(hd), "encoder")
            store.register(f"{pfx}.pool.W", _uniform(rng, (hd, od), hd), "encoder")
            store.register(f"{pfx}.pool.b", np.zeros(od), "encoder")

        # the alignment projection is intrinsically pairwise, so it is
        # shared between towers even when they are otherwise separate
        for b in range(cfg.num_blocks):
            in_ch = ed if b == 0 else ed + hd
            w_al = in_ch + hd
            store.register(f"align.block{b}.W", _uniform(rng, (w_al, hd), w_al), "encoder")
            store.register(f"align.block{b}.b", np.zeros(hd), "encoder")

        feat_w = (3 if cfg.symmetric_prediction else 4) * od
        store.register("predict.W1", _uniform(rng, (feat_w, hd), feat_w), "encoder")
        store.register("predict.b1", np.zeros(hd), "encoder")
        store.register("predict.W2", _uniform(rng, (hd, cfg.num_classes), hd), "encoder")
        store.register("predict.b2", np.zeros(cfg.num_classes), "encoder")

    # ------------------------------------------------------------------
    def _tower(self, side: str) -> str:
        if self.config.share_towers:
            return "enc"
        return "enc_a" if side == "a" else "enc_b"

    def embed(self, tokens: np.ndarray, mask: np.ndarray) -> Tensor:
        tokens = np.asarray(tokens)
        if tokens.max(initial=0) >= self.vocab_size or tokens.min(initial=0) < 0:
            raise DataError(
                f"token index out of range for vocabulary of size {self.vocab_size}"
            )
        emb = embedding(self.store["embedding"], tokens)
        return emb * mask[:, :, None].astype(T.DTYPE)

    def conv_encode(self, x: Tensor, mask: np.ndarray, side: str, block: int) -> Tensor:
        cfg = self.config
        pfx = self._tower(side)
        pad = (cfg.conv_kernel - 1) // 2
        length = x.shape[1]
        mask_f = mask[:, :, None].astype(T.DTYPE)
        h = x
        for l in range(cfg.conv_layers_per_block):
            w = self.store[f"{pfx}.block{block}.conv{l}.W"]
            bias = self.store[f"{pfx}.block{block}.conv{l}.b"]
            padded = h.pad_axis(1, pad, pad)
            taps = []
            for j in range(cfg.conv_kernel):
                win = padded.narrow(1, j, length)
                w_j = w.narrow(0, j, 1).reshape(w.shape[1], w.shape[2])
                taps.append(win @ w_j)
            h = taps[0]
            for t in taps[1:]:
                h = h + t
            h = (h + bias).relu() * mask_f
        return h

    def align(self, seq_a: Tensor, seq_b: Tensor, mask_a: np.ndarray, mask_b: np.ndarray,
              block: int) -> tuple[Tensor, Tensor]:
        if not mask_a.any(axis=1).all() or not mask_b.any(axis=1).all():
            raise DataError("alignment requires at least one unmasked position per side")
        w = self.store[f"align.block{block}.W"]
        bias = self.store[f"align.block{block}.b"]
        fa = seq_a @ w + bias  # single-layer projection; similarity is bilinear
        fb = seq_b @ w + bias
        sim = fa @ fb.swap_last_axes()  # (B, La, Lb)
        attn_a = masked_softmax(sim, mask_b[:, None, :])
        attended_a = attn_a @ seq_b
        attn_b = masked_softmax(sim.swap_last_axes(), mask_a[:, None, :])
        attended_b = attn_b @ seq_a
        return attended_a, attended_b

    def fuse(self, original: Tensor, attended: Tensor, mask: np.ndarray, side: str,
             block: int) -> Tensor:
        pfx = self._tower(side)
        mask_f = mask[:, :, None].astype(T.DTYPE)
        branches = []
        for name, other in (
            ("cat", attended),
            ("sub", original - attended),
            ("mul", original * attended),
        ):
            w = self.store[f"{pfx}.block{block}.fuse.{name}.W"]
            b = self.store[f"{pfx}.block{block}.fuse.{name}.b"]
            branches.append((concat([original, other], axis=-1) @ w + b).relu())
        w = self.store[f"{pfx}.block{block}.fuse.out.W"]
        b = self.store[f"{pfx}.block{block}.fuse.out.b"]
        return (concat(branches, axis=-1) @ w + b).relu() * mask_f

    @staticmethod
    def augmented_residual(block_index: int, embedding_out: Tensor, prev_outputs: list[Tensor]) -> Tensor:
        if block_index == 0:
            return embedding_out
        if block_index == 1:
            return concat([embedding_out, prev_outputs[-1]], axis=-1)
        return concat([embedding_out, prev_outputs[-1] + prev_outputs[-2]], axis=-1)

    def pool(self, seq: Tensor, mask: np.ndarray, side: str) -> Tensor:
        if not mask.any(axis=1).all():
            raise DataError("pooling requires at least one unmasked position")
        pfx = self._tower(side)
        pooled = masked_max(seq, mask[:, :, None], axis=1)
        return pooled @ self.store[f"{pfx}.pool.W"] + self.store[f"{pfx}.pool.b"]

    def predict(self, rep_a: Tensor, rep_b: Tensor) -> Tensor:
        if self.config.symmetric_prediction:
            feats = concat([rep_a + rep_b, (rep_a - rep_b).abs(), rep_a * rep_b], axis=-1)
        else:
            feats = concat([rep_a, rep_b, rep_a - rep_b, rep_a * rep_b], axis=-1)
        h = (feats @ self.store["predict.W1"] + self.store["predict.b1"]).relu()
        return h @ self.store["predict.W2"] + self.store["predict.b2"]

    def forward_pair(self, tokens_a: np.ndarray, mask_a: np.ndarray,
                     tokens_b: np.ndarray, mask_b: np.ndarray):
        """Full pass: returns (rep_a, rep_b, class_scores) as graph tensors."""
        tokens_a, mask_a = _strip_padding(np.asarray(tokens_a), np.asarray(mask_a, dtype=bool))
        tokens_b, mask_b = _strip_padding(np.asarray(tokens_b), np.asarray(mask_b, dtype=bool))
        emb_a = self.embed(tokens_a, mask_a)
        emb_b = self.embed(tokens_b, mask_b)
        prev_a: list[Tensor] = []
        prev_b: list[Tensor] = []
        for b in range(self.config.num_blocks):
            x_a = self.augmented_residual(b, emb_a, prev_a)
            x_b = self.augmented_residual(b, emb_b, prev_b)
            c_a = self.conv_encode(x_a, mask_a, "a", b)
            c_b = self.conv_encode(x_b, mask_b, "b", b)
            s_a = concat([x_a, c_a], axis=-1)
            s_b = concat([x_b, c_b], axis=-1)
            att_a, att_b = self.align(s_a, s_b, mask_a, mask_b, b)
            out_a = self.fuse(s_a, att_a, mask_a, "a", b)
            out_b = self.fuse(s_b, att_b, mask_b, "b", b)
            prev_a.append(out_a)
            prev_b.append(out_b)
        rep_a = self.pool(out_a, mask_a, "a")
        rep_b = self.pool(out_b, mask_b, "b")
        scores = self.predict(rep_a, rep_b)
        return rep_a, rep_b, scores

    def parameter_count(self) -> dict[str, int]:
        """Per-component totals; a pure function of the config."""
        out: dict[str, int] = {}
        for name in self.store.names("encoder"):
            parts = name.split(".")
            if parts[0].startswith("enc") and len(parts) > 1 and parts[1].startswith("block"):
                key = f"blocks.{parts[1]}"
            elif parts[0] == "align":
                key = f"blocks.{parts[1]}"
            elif len(parts) > 1 and parts[1] == "pool":
                key = "pool"
            else:
                key = parts[0]
            out[key] = out.get(key, 0) + self.store[name].data.size
        out["total"] = sum(v for k, v in out.items())
        return out


def load_pretrained_embeddings(path, vocab, dim: int, rng: Optional[np.random.Generator] = None
                               ) -> np.ndarray:
    """Read text-format word vectors (token v1 ... vd per line) for the
    vocabulary; tokens without a pretrained row keep a random init."""
    rng = rng or np.random.default_rng(0)
    table = _uniform(rng, (vocab.size, dim), dim)
    table[0] = 0.0
    found = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            token = parts[0]
            if token in vocab:
                table[vocab.index_of(token)] = [float(v) for v in parts[1:]]
                found += 1
    return table
