"""Binary containers for model weights and full training state.

Two formats share one layout (magic, version, JSON header, raw blobs,
sha256 trailer) but differ in purpose:

* model container: every named parameter as row-major 32-bit
  little-endian floats plus configs and the vocabulary hash; the
  interchange format consumed by eval/predict.
* training state: float64 parameters, optimizer moments, rng state, step
  counter and loss windows; resuming from it reproduces the uninterrupted
  trajectory bit for bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from typing import Optional

import numpy as np

from .encoder import EncoderConfig
from .errors import CheckpointCorruptError, CheckpointVersionError, ConfigError
from .features import FeatureConfig
from .model import Model, build_model

MODEL_MAGIC = b"TMKP"
STATE_MAGIC = b"TMTS"
MODEL_VERSION = 1
STATE_VERSION = 1


def _write_container(path, magic: bytes, version: int, header: dict, blobs: list[bytes]) -> None:
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bytearray()
    payload += magic
    payload += struct.pack("<I", version)
    payload += struct.pack("<Q", len(header_bytes))
    payload += header_bytes
    for b in blobs:
        payload += b
    digest = hashlib.sha256(bytes(payload)).digest()
    with open(path, "wb") as f:
        f.write(payload)
        f.write(digest)


def _read_container(path, magic: bytes, version: int) -> tuple[dict, memoryview]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(magic) + 4 + 8 + 32:
        raise CheckpointCorruptError(f"{path}: file truncated")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointCorruptError(f"{path}: checksum mismatch, file is corrupt")
    if payload[: len(magic)] != magic:
        raise CheckpointCorruptError(f"{path}: bad magic, not a {magic.decode()} file")
    off = len(magic)
    (got_version,) = struct.unpack_from("<I", payload, off)
    off += 4
    if got_version != version:
        raise CheckpointVersionError(
            f"{path}: format version {got_version}, this build reads version {version}"
        )
    (hlen,) = struct.unpack_from("<Q", payload, off)
    off += 8
    header = json.loads(payload[off : off + hlen].decode("utf-8"))
    return header, memoryview(payload)[off + hlen :]


def _pack_arrays(named: list[tuple[str, np.ndarray]], dtype: str) -> tuple[list[dict], list[bytes]]:
    manifest = []
    blobs = []
    dt = np.dtype(dtype).newbyteorder("<")
    for name, arr in named:
        manifest.append({"name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return manifest, blobs


def _unpack_arrays(manifest: list[dict], data: memoryview, dtype: str) -> dict[str, np.ndarray]:
    dt = np.dtype(dtype).newbyteorder("<")
    out = {}
    off = 0
    for entry in manifest:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * dt.itemsize
        chunk = np.frombuffer(data[off : off + nbytes], dtype=dt).reshape(shape)
        out[entry["name"]] = chunk.astype(np.float64)
        off += nbytes
    if off != len(data):
        raise CheckpointCorruptError("trailing bytes after the declared arrays")
    return out


def _config_header(model: Model) -> dict:
    return {
        "encoder_config": dataclasses.asdict(model.encoder_config),
        "feature_config": dataclasses.asdict(model.feature_config),
        "disc_hidden_units": model.discriminator_config.hidden_units,
        "disc_hidden_layers": model.discriminator_config.hidden_layers,
        "vocab_size": model.vocab_size,
    }


def _rebuild_model(header: dict) -> Model:
    enc_cfg = EncoderConfig(**header["encoder_config"])
    feat_cfg = FeatureConfig(**header["feature_config"])
    return build_model(
        enc_cfg,
        feat_cfg,
        vocab_size=header["vocab_size"],
        disc_hidden_units=header["disc_hidden_units"],
        disc_hidden_layers=header["disc_hidden_layers"],
        seed=0,
    )


def save_model(path, model: Model, vocab_hash: str) -> None:
    names = model.store.names()
    manifest, blobs = _pack_arrays(
        [(n, model.store[n].data) for n in names], "float32"
    )
    header = _config_header(model)
    header["vocab_hash"] = vocab_hash
    header["params"] = manifest
    _write_container(path, MODEL_MAGIC, MODEL_VERSION, header, blobs)


def load_model(path) -> tuple[Model, str]:
    header, data = _read_container(path, MODEL_MAGIC, MODEL_VERSION)
    model = _rebuild_model(header)
    arrays = _unpack_arrays(header["params"], data, "float32")
    model.store.load_state(arrays)
    return model, header["vocab_hash"]


def verify_vocab_hash(expected: str, actual: str) -> None:
    if expected != actual:
        raise ConfigError(
            "vocabulary hash mismatch: the checkpoint was trained with a different "
            f"vocabulary (checkpoint {expected[:12]}..., provided {actual[:12]}...)"
        )
