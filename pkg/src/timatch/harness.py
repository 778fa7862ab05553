"""Verification harnesses: the Gaussian DV sanity check and the segment
shape (D, M) sensitivity sweep."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import build_vocabulary, tokenize_pairs
from .encoder import EncoderConfig, ParameterStore
from .errors import ConfigError
from .features import FeatureConfig
from .infomax import Discriminator, DiscriminatorConfig, dv_lower_bound, sample_negatives
from .model import build_model
from .synth import correlated_gaussians, make_longtext_pairs
from .tensor import Tensor, concat
from .training import Adam, TrainConfig, evaluate_model, run_training

log = logging.getLogger("timatch.harness")

SMOOTHING_WINDOW = 100


def true_gaussian_mi(rho: float) -> float:
    """Analytic MI of a correlated bivariate normal, in nats."""
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"|rho| must be < 1, got {rho}")
    return -0.5 * math.log(1.0 - rho * rho)


def tolerance_band(true_mi: float) -> tuple[float, float]:
    """Accepted range for the smoothed estimate after training.

    The DV value is a lower bound, so more slack is allowed below the
    target than above it; the upper slack matches the validity margin
    used for the bound check.
    """
    return true_mi - (0.05 + 0.1 * true_mi), true_mi + 0.05


@dataclass
class MiSanityResult:
    rho: float
    true_mi: float
    estimate: float  # smoothed over the last SMOOTHING_WINDOW steps
    band: tuple[float, float]
    passed: bool
    rows: list = field(default_factory=list)  # (step, dv_estimate, true_mi)
    seconds: float = 0.0

    def smoothed_series(self) -> np.ndarray:
        """Rolling window mean of the per-step estimates."""
        values = np.array([r[1] for r in self.rows])
        out = np.empty_like(values)
        csum = np.cumsum(np.concatenate([[0.0], values]))
        for i in range(values.size):
            lo = max(0, i + 1 - SMOOTHING_WINDOW)
            out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
        return out


def run_mi_sanity(
    rho: float,
    steps: int = 5000,
    seed: int = 0,
    batch_size: int = 512,
    hidden_units: int = 64,
    learning_rate: float = 5e-4,
    grad_clip: float = 5.0,
) -> MiSanityResult:
    """Train the location discriminator on correlated Gaussian samples and
    track the DV estimate against the analytic value."""
    true_mi = true_gaussian_mi(rho)
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    disc = Discriminator(
        DiscriminatorConfig(input_width=2, hidden_units=hidden_units, hidden_layers=2),
        store, rng,
    )
    opt = Adam(store, lr=learning_rate)
    rows = []
    start = time.perf_counter()
    for step in range(1, steps + 1):
        x, y = correlated_gaussians(rho, batch_size, rng)
        perm = sample_negatives(batch_size, seed=rng)
        joint = disc.score(concat([Tensor(x), Tensor(y)], axis=1))
        marginal = disc.score(concat([Tensor(x), Tensor(y[perm])], axis=1))
        dv = dv_lower_bound(joint, marginal)
        loss = -dv
        store.zero_grads()
        loss.backward()
        opt.step(grad_clip)
        rows.append((step, dv.item(), true_mi))
    seconds = time.perf_counter() - start
    estimate = float(np.mean([r[1] for r in rows[-SMOOTHING_WINDOW:]]))
    lo, hi = tolerance_band(true_mi)
    result = MiSanityResult(
        rho=rho, true_mi=true_mi, estimate=estimate, band=(lo, hi),
        passed=lo <= estimate <= hi, rows=rows, seconds=seconds,
    )
    log.info("mi-sanity rho=%.2f: estimate %.4f vs true %.4f (band [%.4f, %.4f]) in %.1fs",
             rho, estimate, true_mi, lo, hi, seconds)
    return result


DEFAULT_SWEEP_GRID: tuple[tuple[int, int], ...] = ((6, 5), (6, 10), (12, 10), (20, 10), (20, 20))


def run_sensitivity_sweep(
    grid: Sequence[tuple[int, int]] = DEFAULT_SWEEP_GRID,
    steps: int = 300,
    seed: int = 0,
    n_pairs: int = 240,
    on_result=None,
) -> list[dict]:
    """Train a segment-mode model per (D, M) on a long-text task and
    collect comparable metrics for each shape."""
    pairs = make_longtext_pairs(n_pairs, seed=seed)
    vocab = build_vocabulary(pairs)
    examples = tokenize_pairs(pairs, vocab)
    n_dev = max(len(examples) // 5, 10)
    dev, train = examples[:n_dev], examples[n_dev:]
    rows = []
    for d, m in grid:
        enc_cfg = EncoderConfig(embed_dim=24, num_blocks=1, conv_layers_per_block=1,
                                hidden_dim=24, output_dim=16, num_classes=2)
        feat_cfg = FeatureConfig(mode="segment", map_slots=m, segment_size=d,
                                 segment_embed_dim=8)
        model = build_model(enc_cfg, feat_cfg, vocab.size, disc_hidden_units=32,
                            disc_hidden_layers=2, seed=seed)
        config = TrainConfig(learning_rate=2e-3, batch_size=16, max_steps=steps,
                             mi_weight=1.0, seed=seed, eval_every=max(steps // 2, 1))
        started = time.perf_counter()
        state, history = run_training(model, train, config, dev_examples=None,
                                      use_prefetch=True)
        metrics = evaluate_model(model, dev, "classify")
        row = {
            "segment_size": d,
            "map_slots": m,
            "accuracy": metrics["accuracy"],
            "final_l_all": state.smoothed("l_all"),
            "final_dv_ts": state.smoothed("dv_ts"),
            "final_dv_tt": state.smoothed("dv_tt"),
            "steps": state.step,
            "seconds": time.perf_counter() - started,
        }
        rows.append(row)
        if on_result:
            on_result(row)
        log.info("sweep D=%d M=%d: accuracy %.3f, l_all %.4f", d, m,
                 row["accuracy"], row["final_l_all"])
    return rows


def format_sweep_table(rows: list[dict]) -> str:
    header = f"{'D':>4} {'M':>4} {'accuracy':>9} {'l_all':>9} {'dv_ts':>8} {'dv_tt':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['segment_size']:>4} {r['map_slots']:>4} {r['accuracy']:>9.4f} "
            f"{r['final_l_all']:>9.4f} {r['final_dv_ts']:>8.4f} {r['final_dv_tt']:>8.4f}"
        )
    return "\n".join(lines)
