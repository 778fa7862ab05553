"""Dataset ingestion, tokenization, vocabulary and padded batching."""

from __future__ import annotations

import hashlib
import json
import queue
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

PAD_INDEX = 0
UNK_INDEX = 1

# Maximal runs of Unicode letters/digits. Lowercasing happens first, so a
# token never contains whitespace, punctuation, emoji or underscores;
# symbol-only and emoji-only fragments simply never match.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; drop symbol-only tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TextPair:
    text_a: str
    text_b: str
    label: int
    group_id: Optional[str] = None


@dataclass(frozen=True)
class TokenizedExample:
    tokens_a: np.ndarray  # 1-d int array of vocabulary indices
    tokens_b: np.ndarray
    label: int
    group_id: Optional[str] = None


class Vocabulary:
    """token -> index map; 0 is padding, 1 is the unknown token."""

    PAD = PAD_INDEX
    UNK = UNK_INDEX

    def __init__(self, tokens: Sequence[str]):
        self._tokens = list(tokens)
        self._index = {t: i + 2 for i, t in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise ConfigError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self._tokens) + 2

    def index_of(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token_of(self, index: int) -> str:
        if index == PAD_INDEX:
            return "<pad>"
        if index == UNK_INDEX:
            return "<unk>"
        return self._tokens[index - 2]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.asarray([self._index.get(t, UNK_INDEX) for t in tokens], dtype=np.int64)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for t in self._tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for t in self._tokens:
            h.update(t.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def build_vocabulary(corpus: Iterable[TextPair], min_count: int = 1) -> Vocabulary:
    """Count tokens over both sides; keep those seen >= min_count times.

    Index order is descending count with lexicographic tie-break, so two
    builds over the same corpus agree exactly.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts: Counter = Counter()
    n_pairs = 0
    for pair in corpus:
        n_pairs += 1
        counts.update(tokenize(pair.text_a))
        counts.update(tokenize(pair.text_b))
    if n_pairs == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(kept)


def load_jsonl(path) -> Iterator[TextPair]:
    """Yield TextPair records from a UTF-8 JSONL file, in file order."""
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read dataset: {e}", path=str(path))
    with f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"malformed JSON ({e.msg})", line=lineno, path=str(path))
            for key in ("text_a", "text_b", "label"):
                if key not in obj:
                    raise DataError(f"missing field {key!r}", line=lineno, path=str(path))
            label = obj["label"]
            if isinstance(label, bool) or not isinstance(label, int):
                raise DataError(
                    f"label must be an integer, got {label!r}", line=lineno, path=str(path)
                )
            if label < 0:
                raise DataError(f"label must be >= 0, got {label}", line=lineno, path=str(path))
            gid = obj.get("group_id")
            yield TextPair(str(obj["text_a"]), str(obj["text_b"]), label, gid)


def save_jsonl(path, pairs: Iterable[TextPair]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            rec = {"text_a": p.text_a, "text_b": p.text_b, "label": p.label}
            if p.group_id is not None:
                rec["group_id"] = p.group_id
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def tokenize_pairs(
    pairs: Iterable[TextPair], vocab: Vocabulary, allow_empty: bool = False
) -> list[TokenizedExample]:
    out = []
    for i, p in enumerate(pairs):
        ta = vocab.encode(tokenize(p.text_a))
        tb = vocab.encode(tokenize(p.text_b))
        if (ta.size == 0 or tb.size == 0) and not allow_empty:
            raise DataError(f"pair {i} is empty after tokenization")
        out.append(TokenizedExample(ta, tb, p.label, p.group_id))
    return out


@dataclass
class Batch:
    tokens_a: np.ndarray  # (B, La) int64, padded with 0
    mask_a: np.ndarray    # (B, La) bool
    tokens_b: np.ndarray
    mask_b: np.ndarray
    labels: np.ndarray    # (B,) int64
    group_ids: list
    size: int = field(init=False)

    def __post_init__(self):
        self.size = self.tokens_a.shape[0]


def _pad_side(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    width = max(int(s.size) for s in seqs)
    tokens = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        tokens[i, : s.size] = s
        mask[i, : s.size] = True
    return tokens, mask


def collate(examples: Sequence[TokenizedExample]) -> Batch:
    tokens_a, mask_a = _pad_side([e.tokens_a for e in examples])
    tokens_b, mask_b = _pad_side([e.tokens_b for e in examples])
    labels = np.asarray([e.label for e in examples], dtype=np.int64)
    return Batch(tokens_a, mask_a, tokens_b, mask_b, labels, [e.group_id for e in examples])


def make_batches(
    examples: Sequence[TokenizedExample],
    batch_size: int,
    shuffle_seed: Optional[int] = None,
    drop_small_tail: bool = False,
) -> Iterator[Batch]:
    """Yield padded batches; order is a pure function of shuffle_seed.

    drop_small_tail discards a trailing batch of fewer than 2 examples
    (in-batch negative sampling needs at least two texts per side).
    """
    if drop_small_tail and batch_size < 2:
        raise ConfigError("batch_size must be >= 2 when MI training is enabled")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    order = np.arange(len(examples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(examples))
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start : start + batch_size]]
        if drop_small_tail and len(chunk) < 2:
            return
        yield collate(chunk)


def prefetch(batches: Iterator[Batch], depth: int = 4) -> Iterator[Batch]:
    """Run the batch iterator on a worker thread, at most `depth` in flight."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    sentinel = object()
    error: list[BaseException] = []

    def worker():
        try:
            for b in batches:
                q.put(b)
        except BaseException as e:  # re-raised on the consumer side
            error.append(e)
        finally:
            q.put(sentinel)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is sentinel:
            if error:
                raise error[0]
            return
        yield item
