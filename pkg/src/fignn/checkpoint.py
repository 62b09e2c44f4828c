"""Single-file checkpoint container: JSON manifest + raw float64 blobs.

Layout: 8-byte magic, little-endian u64 manifest length, the manifest JSON
(sorted keys), then each tensor's bytes ('<f8', C order) concatenated in
manifest order.  Writing is fully deterministic, so save -> load -> save is
byte-identical, and the format stays readable from any language.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore
from .errors import DataError
from .training import TrainingConfig, create_model

MAGIC = b"FIGNNCP1"
FORMAT_VERSION = 1


def file_sha256(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise DataError(f"cannot hash {path}: {exc}") from exc


@dataclass
class Checkpoint:
    model_kind: str
    config: dict  # TrainingConfig fields plus the field schema
    vocab_hash: str
    tensors: dict[str, np.ndarray]

    def training_config(self) -> TrainingConfig:
        return TrainingConfig.from_dict(self.config["training"])

    def schema_fields(self) -> list[dict]:
        return self.config["schema"]

    def build_model(self):
        """Reconstruct the model and load the stored tensors into it."""
        model = create_model(self.training_config(), rng=0)
        model.store.load_snapshot(self.tensors)
        return model


def save_checkpoint(
    path: str | Path,
    model_kind: str,
    config: dict,
    vocab_hash: str,
    store: ParameterStore,
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, tensor in store.items():
        raw = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        entries.append(
            {"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "config": config,
        "vocab_hash": vocab_hash,
        "tensors": entries,
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<Q", len(payload)))
        handle.write(payload)
        for blob in blobs:
            handle.write(blob)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint file (bad magic)")
    (manifest_len,) = struct.unpack("<Q", raw[8:16])
    try:
        manifest = json.loads(raw[16 : 16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"checkpoint manifest is corrupt: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"unsupported checkpoint format_version {manifest.get('format_version')!r}"
        )
    base = 16 + manifest_len
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start = base + entry["offset"]
        stop = start + entry["nbytes"]
        if stop > len(raw):
            raise DataError(f"checkpoint truncated reading tensor {entry['name']!r}")
        arr = np.frombuffer(raw[start:stop], dtype="<f8").reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(np.float64)
    return Checkpoint(
        model_kind=manifest["model_kind"],
        config=manifest["config"],
        vocab_hash=manifest["vocab_hash"],
        tensors=tensors,
    )
