"""Command-line entry point.

Subcommands: train, eval, predict, features, mi-sanity, sweep. Exit
codes: 0 success, 1 failed acceptance band, 2 configuration error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import RunConfig, load_run_config, save_run_config
from .corpus import Vocabulary, build_vocabulary, load_jsonl, tokenize, tokenize_pairs
from .encoder import load_pretrained_embeddings
from .errors import (
    CheckpointCorruptError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    NumericError,
    TimatchError,
)
from .features import FeatureConfig, extract, feature_set_summary
from .harness import (
    DEFAULT_SWEEP_GRID,
    format_sweep_table,
    run_mi_sanity,
    run_sensitivity_sweep,
)
from .model import build_model
from .report import render_mi_sanity, render_sweep, render_training_curves, write_csv
from .training import evaluate_model, run_training

log = logging.getLogger("timatch")

EXIT_OK = 0
EXIT_BAND = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_examples(path, vocab, num_classes=None, require_group=False):
    pairs = list(load_jsonl(path))
    if num_classes is not None:
        for i, p in enumerate(pairs):
            if p.label >= num_classes:
                raise DataError(f"label {p.label} out of range for {num_classes} classes",
                                line=i + 1, path=str(path))
    if require_group:
        for i, p in enumerate(pairs):
            if p.group_id is None:
                raise DataError("ranking task needs group_id on every example",
                                line=i + 1, path=str(path))
    return tokenize_pairs(pairs, vocab)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    config: RunConfig = load_run_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_pairs = list(load_jsonl(config.train_path))
    vocab = build_vocabulary(train_pairs, config.min_count)
    vocab.save(out_dir / "vocab.txt")
    vocab_hash = vocab.content_hash()

    train_examples = tokenize_pairs(train_pairs, vocab)
    for i, e in enumerate(train_examples):
        if e.label >= config.encoder_config.num_classes:
            raise DataError(
                f"label {e.label} out of range for {config.encoder_config.num_classes} classes",
                line=i + 1, path=str(config.train_path),
            )
    dev_examples = None
    if config.dev_path is not None:
        dev_examples = _load_examples(
            config.dev_path, vocab, config.encoder_config.num_classes,
            require_group=config.task == "rank",
        )

    model = build_model(
        config.encoder_config, config.feature_config, vocab.size,
        disc_hidden_units=config.disc_hidden_units,
        disc_hidden_layers=config.disc_hidden_layers,
        seed=config.train_config.seed,
    )
    if config.pretrained_embeddings is not None:
        table = load_pretrained_embeddings(
            config.pretrained_embeddings, vocab, config.encoder_config.embed_dim,
            rng=np.random.default_rng(config.train_config.seed),
        )
        model.store["embedding"].data = table.astype(np.float64)

    save_run_config(config, out_dir / "config.ini")
    counts = model.encoder.parameter_count()
    log.info("parameters: %s (+ %d discriminator)",
             {k: v for k, v in sorted(counts.items())},
             model.store.count("discriminator"))
    log.info("training %d pairs (%s task, %s mode) for %d steps",
             len(train_examples), config.task, config.mode, config.train_config.max_steps)
    state, history = run_training(
        model, train_examples, config.train_config,
        dev_examples=dev_examples, task=config.task,
        out_dir=out_dir, vocab_hash=vocab_hash,
    )
    render_training_curves(history, out_dir / "training_curves.png")
    log.info("done: best %s at step %d", state.best_metric, state.best_step)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / predict
# ---------------------------------------------------------------------------

def _load_model_and_vocab(checkpoint_path, vocab_path=None):
    checkpoint_path = Path(checkpoint_path)
    model, vocab_hash = ckpt.load_model(checkpoint_path)
    vocab_path = Path(vocab_path) if vocab_path else checkpoint_path.parent / "vocab.txt"
    if not vocab_path.exists():
        raise ConfigError(f"vocabulary file not found: {vocab_path}")
    vocab = Vocabulary.load(vocab_path)
    ckpt.verify_vocab_hash(vocab_hash, vocab.content_hash())
    return model, vocab


def cmd_eval(args) -> int:
    model, vocab = _load_model_and_vocab(args.checkpoint, args.vocab)
    examples = _load_examples(
        args.data, vocab,
        num_classes=model.encoder_config.num_classes,
        require_group=args.task == "rank",
    )
    metrics = evaluate_model(model, examples, args.task, batch_size=args.batch_size)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    model, vocab = _load_model_and_vocab(args.checkpoint, args.vocab)
    rows = []
    for name, text in (("text_a", args.text_a), ("text_b", args.text_b)):
        toks = tokenize(text)
        if not toks:
            raise DataError(f"{name} is empty after tokenization: {text!r}")
        rows.append(vocab.encode(toks))
    tokens_a = rows[0][None, :]
    tokens_b = rows[1][None, :]
    _, _, scores = model.encoder.forward_pair(
        tokens_a, np.ones_like(tokens_a, dtype=bool),
        tokens_b, np.ones_like(tokens_b, dtype=bool),
    )
    z = scores.data[0] - scores.data[0].max()
    probs = np.exp(z) / np.exp(z).sum()
    print(json.dumps({
        "probabilities": [float(p) for p in probs],
        "predicted_class": int(np.argmax(probs)),
    }))
    return EXIT_OK


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def cmd_features(args) -> int:
    vocab = Vocabulary.load(Path(args.vocab))
    toks = tokenize(args.text)
    if not toks:
        raise DataError(f"text is empty after tokenization: {args.text!r}")
    indices = vocab.encode(toks)
    if args.mode == "segment" and args.segment_size is None:
        raise ConfigError("--segment-size (D) is required in segment mode")
    fc = FeatureConfig(
        mode=args.mode, map_slots=args.map_slots, segment_size=args.segment_size,
        embed_dim=args.embed_dim, share_embedding=False,
    )
    table = None
    if args.mode == "word":
        if args.checkpoint:
            model, _ = ckpt.load_model(Path(args.checkpoint))
            table = model.word_table().data
        else:
            rng = np.random.default_rng(args.seed)
            scale = 1.0 / np.sqrt(args.embed_dim)
            table = rng.uniform(-scale, scale, size=(vocab.size, args.embed_dim))
            table[0] = 0.0
    fs = extract(indices, fc, table)
    print(json.dumps(feature_set_summary(fs)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# mi-sanity / sweep
# ---------------------------------------------------------------------------

def cmd_mi_sanity(args) -> int:
    if not -1.0 < args.rho < 1.0:
        raise ConfigError(f"--rho must satisfy |rho| < 1, got {args.rho}")
    result = run_mi_sanity(
        args.rho, steps=args.steps, seed=args.seed, batch_size=args.batch_size,
        hidden_units=args.hidden_units, learning_rate=args.lr,
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "mi_sanity.csv", ("step", "dv_estimate", "true_mi"),
                  [{"step": s, "dv_estimate": dv, "true_mi": tm} for s, dv, tm in result.rows])
        render_mi_sanity(result.rows, result.true_mi, out_dir / "mi_sanity.png")
    print(json.dumps({
        "rho": result.rho,
        "true_mi": result.true_mi,
        "smoothed_estimate": result.estimate,
        "band": list(result.band),
        "passed": result.passed,
        "steps": args.steps,
        "seconds": round(result.seconds, 2),
    }, sort_keys=True))
    return EXIT_OK if result.passed else EXIT_BAND


def _parse_grid(text: str) -> tuple:
    grid = []
    for part in text.split(","):
        d, _, m = part.strip().partition(":")
        try:
            grid.append((int(d), int(m)))
        except ValueError:
            raise ConfigError(f"bad grid entry {part!r}; expected D:M")
    if not grid:
        raise ConfigError("empty sweep grid")
    return tuple(grid)


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid) if args.grid else DEFAULT_SWEEP_GRID
    rows = run_sensitivity_sweep(grid, steps=args.steps, seed=args.seed, n_pairs=args.pairs)
    print(format_sweep_table(rows))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "sweep.csv",
                  ("segment_size", "map_slots", "accuracy", "final_l_all",
                   "final_dv_ts", "final_dv_tt", "steps", "seconds"), rows)
        render_sweep(rows, out_dir / "sweep.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="timatch",
        description="Text matching with local mutual-information regularization.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True, help="INI run configuration")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="JSONL dataset")
    e.add_argument("--task", choices=("classify", "rank"), default="classify")
    e.add_argument("--vocab", default=None, help="vocabulary file (default: next to checkpoint)")
    e.add_argument("--batch-size", type=int, default=64)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="class probabilities for one text pair")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--vocab", default=None)
    pr.add_argument("--text-a", required=True)
    pr.add_argument("--text-b", required=True)
    pr.set_defaults(func=cmd_predict)

    f = sub.add_parser("features", help="dump local feature maps for one text")
    f.add_argument("--text", required=True)
    f.add_argument("--vocab", required=True)
    f.add_argument("--mode", choices=("word", "segment"), default="word")
    f.add_argument("--map-slots", type=int, default=3, help="slots per map (M)")
    f.add_argument("--segment-size", type=int, default=None, help="words per segment (D)")
    f.add_argument("--embed-dim", type=int, default=8, help="word-mode vector width")
    f.add_argument("--checkpoint", default=None, help="use this model's embedding table")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_features)

    m = sub.add_parser("mi-sanity", help="Gaussian DV-bound sanity harness")
    m.add_argument("--rho", type=float, required=True)
    m.add_argument("--steps", type=int, default=5000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--batch-size", type=int, default=512)
    m.add_argument("--hidden-units", type=int, default=64)
    m.add_argument("--lr", type=float, default=5e-4)
    m.add_argument("--out", default=None, help="write mi_sanity.csv and mi_sanity.png here")
    m.set_defaults(func=cmd_mi_sanity)

    s = sub.add_parser("sweep", help="segment-shape (D, M) sensitivity harness")
    s.add_argument("--grid", default=None, help="comma list of D:M (default 6:5,6:10,12:10,20:10,20:20)")
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pairs", type=int, default=240)
    s.add_argument("--out", default=None, help="write sweep.csv and sweep.png here")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (DataError, CheckpointVersionError, CheckpointCorruptError) as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except NumericError as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except TimatchError as e:
        log.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
