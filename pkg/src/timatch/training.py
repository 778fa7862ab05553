"""Joint optimization of encoder, prediction head and discriminator under
the summed objective, with deterministic batching, checkpointing and
bit-exact resumption."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from . import checkpoint as ckpt
from .corpus import Batch, TokenizedExample, make_batches, prefetch
from .errors import ConfigError, DataError, NumericError
from .evaluation import accuracy, group_candidates, mean_average_precision, mean_reciprocal_rank
from .infomax import mi_loss_for_pair, sample_negatives
from .model import Model
from .tensor import Tensor, global_norm, logsumexp

log = logging.getLogger("timatch.training")

WINDOW = 100  # smoothing window for logged losses and DV estimates

METRIC_COLUMNS = ("step", "l_all", "l_t", "l_m", "dv_ts", "dv_tt", "lr")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_steps: int = 1000
    mi_weight: float = 1.0
    seed: int = 0
    eval_every: int = 100
    grad_clip: Optional[float] = 5.0
    discriminator_lr: Optional[float] = None
    patience: Optional[int] = None
    mi_ema_correction: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.mi_weight < 0:
            raise ConfigError("mi_weight must be non-negative")
        if self.batch_size < 1 or self.max_steps < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, max_steps and eval_every must be positive")
        if self.mi_weight > 0 and self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 when MI training is enabled")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive or none")

    @property
    def mi_enabled(self) -> bool:
        return self.mi_weight > 0


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> None:
    """One adaptive-moment update, in place; t is the 1-based step count."""
    if grad.shape != value.shape:
        raise ConfigError(f"gradient shape {grad.shape} does not match parameter {value.shape}")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adaptive-moment optimizer over a parameter store's trainable arrays."""

    def __init__(self, store, lr: float, discriminator_lr: Optional[float] = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.discriminator_lr = discriminator_lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(store[n].data) for n in store.trainable_names()}
        self.v = {n: np.zeros_like(store[n].data) for n in store.trainable_names()}

    def _lr_for(self, name: str) -> float:
        if self.discriminator_lr is not None and self.store.group_of(name) == "discriminator":
            return self.discriminator_lr
        return self.lr

    def step(self, grad_clip: Optional[float] = None) -> float:
        names = list(self.m.keys())
        grads = {}
        for n in names:
            g = self.store[n].grad
            grads[n] = g if g is not None else np.zeros_like(self.store[n].data)
        norm = global_norm(grads.values())
        if grad_clip is not None and norm > grad_clip:
            scale = grad_clip / norm
            for n in names:
                grads[n] = grads[n] * scale
        self.t += 1
        for n in names:
            adam_update(self.store[n].data, grads[n], self.m[n], self.v[n],
                        self.t, self._lr_for(n), self.beta1, self.beta2, self.eps)
        return norm

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for n in self.m:
            out.append((f"m:{n}", self.m[n]))
            out.append((f"v:{n}", self.v[n]))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n in self.m:
            self.m[n] = arrays[f"m:{n}"].copy()
            self.v[n] = arrays[f"v:{n}"].copy()


def cross_entropy(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Softmax cross-entropy, mean over the batch."""
    labels = np.asarray(labels)
    n, c = scores.shape
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label out of range for {c} classes")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    lse = logsumexp(scores, axis=1)
    picked = (scores * onehot).sum(axis=1)
    return (lse - picked).mean()


@dataclass
class TrainState:
    model: Model
    config: TrainConfig
    optimizer: Adam
    step: int = 0
    rng: np.random.Generator = None
    windows: dict = field(default_factory=dict)
    ema: Optional[tuple] = None
    best_metric: Optional[float] = None
    best_step: int = -1
    evals_since_best: int = 0

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.config.seed)
        if not self.windows:
            self.windows = {k: deque(maxlen=WINDOW)
                            for k in ("l_all", "l_t", "l_m", "dv_ts", "dv_tt")}

    def smoothed(self, key: str) -> float:
        w = self.windows[key]
        return float(np.mean(w)) if w else float("nan")


def init_state(model: Model, config: TrainConfig) -> TrainState:
    opt = Adam(model.store, config.learning_rate, config.discriminator_lr)
    ema = (1.0, 1.0) if config.mi_ema_correction else None
    return TrainState(model=model, config=config, optimizer=opt, ema=ema)


def _check_finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise NumericError(term, value)
    return value


def train_step(state: TrainState, batch: Batch) -> dict:
    """One forward/backward/update pass; returns the per-term metrics row."""
    cfg = state.config
    model = state.model
    if cfg.mi_enabled and batch.size < 2:
        raise ConfigError("MI training needs batches of at least 2 examples")

    rep_a, rep_b, scores = model.encoder.forward_pair(
        batch.tokens_a, batch.mask_a, batch.tokens_b, batch.mask_b
    )
    l_t = cross_entropy(scores, batch.labels)
    _check_finite(l_t.item(), "l_t (task loss)")

    dv_ts = dv_tt = 0.0
    if cfg.mi_enabled:
        feats_a, feats_b = model.features_for_batch(batch)
        perm = sample_negatives(batch.size, seed=[cfg.seed, 2, state.step])
        mi, new_ema = mi_loss_for_pair(
            feats_a, rep_a, feats_b, rep_b, perm, model.discriminator,
            word_table=model.word_table() if model.feature_config.mode == "word" else None,
            segment_table=model.segment_table(),
            ema=state.ema,
        )
        state.ema = new_ema if new_ema is not None else state.ema
        _check_finite(mi.loss_ts.item(), "l_ts (source-side MI loss)")
        _check_finite(mi.loss_tt.item(), "l_tt (target-side MI loss)")
        l_m = mi.loss_m
        dv_ts, dv_tt = mi.dv_estimate_ts, mi.dv_estimate_tt
        l_all = l_t + l_m * cfg.mi_weight
    else:
        l_m = Tensor(0.0)
        l_all = l_t
    _check_finite(l_all.item(), "l_all (total loss)")

    model.store.zero_grads()
    l_all.backward()
    state.optimizer.step(cfg.grad_clip)
    state.step += 1

    row = {
        "step": state.step,
        "l_all": l_all.item(),
        "l_t": l_t.item(),
        "l_m": l_m.item(),
        "dv_ts": dv_ts,
        "dv_tt": dv_tt,
        "lr": cfg.learning_rate,
    }
    for key in ("l_all", "l_t", "l_m", "dv_ts", "dv_tt"):
        state.windows[key].append(row[key])
    return row


# ---------------------------------------------------------------------------
# deterministic batch stream
# ---------------------------------------------------------------------------

def batches_per_epoch(n_examples: int, batch_size: int, drop_small_tail: bool) -> int:
    full, rem = divmod(n_examples, batch_size)
    if rem == 0:
        return full
    if drop_small_tail and rem < 2:
        return full
    return full + 1


def batch_stream(examples, config: TrainConfig, start_step: int = 0) -> Iterator[Batch]:
    """Infinite shuffled epochs; position is a pure function of the step
    counter, so a resumed run sees exactly the batches it would have."""
    per_epoch = batches_per_epoch(len(examples), config.batch_size, config.mi_enabled)
    if per_epoch == 0:
        raise DataError("dataset too small for one batch under the MI tail rule")
    epoch, skip = divmod(start_step, per_epoch)
    while True:
        batches = make_batches(
            examples, config.batch_size,
            shuffle_seed=[config.seed, 1, epoch],
            drop_small_tail=config.mi_enabled,
        )
        for i, b in enumerate(batches):
            if i >= skip:
                yield b
        skip = 0
        epoch += 1


# ---------------------------------------------------------------------------
# training-state checkpoints (float64, bit-exact resumption)
# ---------------------------------------------------------------------------

def save_checkpoint(state: TrainState, path) -> None:
    model = state.model
    header = ckpt._config_header(model)
    header["train_config"] = dataclasses.asdict(state.config)
    header["step"] = state.step
    header["adam_t"] = state.optimizer.t
    header["rng_state"] = state.rng.bit_generator.state
    header["windows"] = {k: list(v) for k, v in state.windows.items()}
    header["ema"] = list(state.ema) if state.ema is not None else None
    header["best_metric"] = state.best_metric
    header["best_step"] = state.best_step
    header["evals_since_best"] = state.evals_since_best
    named = [(f"p:{n}", model.store[n].data) for n in model.store.names()]
    named += state.optimizer.state_arrays()
    manifest, blobs = ckpt._pack_arrays(named, "float64")
    header["arrays"] = manifest
    ckpt._write_container(path, ckpt.STATE_MAGIC, ckpt.STATE_VERSION, header, blobs)


def load_checkpoint(path) -> TrainState:
    header, data = ckpt._read_container(path, ckpt.STATE_MAGIC, ckpt.STATE_VERSION)
    model = ckpt._rebuild_model(header)
    config = TrainConfig(**header["train_config"])
    arrays = ckpt._unpack_arrays(header["arrays"], data, "float64")
    model.store.load_state({n[2:]: a for n, a in arrays.items() if n.startswith("p:")})
    opt = Adam(model.store, config.learning_rate, config.discriminator_lr)
    opt.t = header["adam_t"]
    opt.load_state_arrays({n: a for n, a in arrays.items() if not n.startswith("p:")})
    rng = np.random.default_rng(config.seed)
    rng.bit_generator.state = header["rng_state"]
    windows = {k: deque(v, maxlen=WINDOW) for k, v in header["windows"].items()}
    ema = tuple(header["ema"]) if header["ema"] is not None else None
    return TrainState(
        model=model, config=config, optimizer=opt, step=header["step"], rng=rng,
        windows=windows, ema=ema, best_metric=header["best_metric"],
        best_step=header["best_step"], evals_since_best=header["evals_since_best"],
    )


# ---------------------------------------------------------------------------
# evaluation passes and the outer loop
# ---------------------------------------------------------------------------

def predict_scores(model: Model, examples, batch_size: int = 64) -> np.ndarray:
    """Class scores for a list of tokenized examples, evaluation order."""
    rows = []
    for b in make_batches(examples, batch_size):
        _, _, scores = model.encoder.forward_pair(b.tokens_a, b.mask_a, b.tokens_b, b.mask_b)
        rows.append(scores.data)
    return np.concatenate(rows, axis=0)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def evaluate_model(model: Model, examples, task: str, batch_size: int = 64) -> dict:
    """Accuracy for classification; MAP/MRR over group_id for ranking."""
    if not examples:
        raise DataError("evaluation needs at least one example")
    scores = predict_scores(model, examples, batch_size)
    labels = np.asarray([e.label for e in examples])
    if task == "classify":
        return {"accuracy": accuracy(scores, labels)}
    if task != "rank":
        raise ConfigError(f"unknown task {task!r}")
    probs = _softmax_rows(scores)[:, 1]
    groups = group_candidates(probs, labels.astype(bool), [e.group_id for e in examples])
    map_value, skipped = mean_average_precision(groups)
    mrr_value, _ = mean_reciprocal_rank(groups)
    return {"map": map_value, "mrr": mrr_value, "n_groups_skipped": skipped}


def primary_metric(task: str, metrics: dict) -> float:
    return metrics["accuracy"] if task == "classify" else metrics["map"]


class MetricsWriter:
    """Append-only CSV; floats are written with round-trip precision."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = columns
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(columns)

    def write(self, row: dict) -> None:
        out = []
        for c in self.columns:
            v = row[c]
            out.append(repr(float(v)) if isinstance(v, float) else v)
        self._writer.writerow(out)
        self._fh.flush()

    def close(self):
        self._fh.close()


def run_training(
    model: Model,
    train_examples: list[TokenizedExample],
    config: TrainConfig,
    dev_examples: Optional[list[TokenizedExample]] = None,
    task: str = "classify",
    out_dir=None,
    vocab_hash: str = "",
    state: Optional[TrainState] = None,
    use_prefetch: bool = True,
    on_eval: Optional[Callable[[int, dict], None]] = None,
) -> tuple[TrainState, list[dict]]:
    """Drive train_step to max_steps with periodic dev evaluation.

    Writes metrics.csv / eval.csv and best/final model containers when
    out_dir is given. Returns the final state and the metric rows.
    """
    state = state or init_state(model, config)
    history: list[dict] = []
    writer = eval_writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = MetricsWriter(out_dir / "metrics.csv", METRIC_COLUMNS)
        eval_writer = MetricsWriter(out_dir / "eval.csv", ("step", "metric", "value"))

    stream = batch_stream(train_examples, config, start_step=state.step)
    if use_prefetch:
        stream = prefetch(stream, depth=4)

    started = time.perf_counter()
    stopped_early = False
    try:
        for batch in stream:
            if state.step >= config.max_steps or stopped_early:
                break
            row = train_step(state, batch)
            history.append(row)
            if writer:
                writer.write(row)

            if state.step % config.eval_every == 0 or state.step == config.max_steps:
                if dev_examples:
                    metrics = evaluate_model(model, dev_examples, task)
                    metric = primary_metric(task, metrics)
                    improved = state.best_metric is None or metric > state.best_metric
                    if improved:
                        state.best_metric = metric
                        state.best_step = state.step
                        state.evals_since_best = 0
                        if out_dir is not None:
                            ckpt.save_model(out_dir / "best.tmk", model, vocab_hash)
                    else:
                        state.evals_since_best += 1
                    if eval_writer:
                        for k, v in metrics.items():
                            eval_writer.write({"step": state.step, "metric": k, "value": v})
                    if on_eval:
                        on_eval(state.step, metrics)
                    log.info(
                        "step %d  l_all=%.4f  l_t=%.4f  l_m=%.4f  dev=%s",
                        state.step, state.smoothed("l_all"), state.smoothed("l_t"),
                        state.smoothed("l_m"), metrics,
                    )
                    if config.patience is not None and state.evals_since_best > config.patience:
                        log.info("early stop at step %d (no improvement for %d evals)",
                                 state.step, state.evals_since_best)
                        stopped_early = True
                else:
                    log.info(
                        "step %d  l_all=%.4f  l_t=%.4f  l_m=%.4f",
                        state.step, state.smoothed("l_all"), state.smoothed("l_t"),
                        state.smoothed("l_m"),
                    )
    finally:
        if writer:
            writer.close()
        if eval_writer:
            eval_writer.close()

    if out_dir is not None:
        ckpt.save_model(out_dir / "final.tmk", model, vocab_hash)
        if not (out_dir / "best.tmk").exists():
            ckpt.save_model(out_dir / "best.tmk", model, vocab_hash)
    log.info("trained %d steps in %.1fs", state.step, time.perf_counter() - started)
    return state, history
