"""
Checkpoint container
====================
Self-describing single file:

    magic line  b"TRACECKPT\\n"
    uint64 LE   manifest length in bytes
    manifest    UTF-8 JSON: format_version, config, vocab, metadata, tensors
    payload     raw little-endian float64 tensors, concatenated in manifest order

Each tensor entry carries name, dtype, shape, offset and nbytes, so a reader
needs nothing beyond numpy. Files are written atomically.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from config import Config, TrainConfig
from ehr.vocab import Vocabulary
from model.trace import TraceModel, create_model
from utils.errors import CheckpointError
from utils.io import atomic_write_bytes

logger = logging.getLogger(__name__)

TENSOR_DTYPE = "<f8"
_LENGTH = struct.Struct("<Q")


@dataclass
class Checkpoint:
    model: TraceModel
    vocab: Vocabulary
    config: TrainConfig
    best_val: Optional[float] = None
    median_gap: Optional[float] = None
    rng_state: Optional[Dict[str, Any]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, tensor in checkpoint.model.parameters().items():
        raw = np.ascontiguousarray(tensor.data, dtype=TENSOR_DTYPE).tobytes()
        entries.append(
            {"name": name, "dtype": TENSOR_DTYPE, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format_version": Config.CHECKPOINT_FORMAT_VERSION,
        "config": checkpoint.config.model_dump(),
        "vocab": checkpoint.vocab.to_dict(),
        "best_val": checkpoint.best_val,
        "median_gap": checkpoint.median_gap,
        "rng_state": checkpoint.rng_state,
        "metadata": checkpoint.metadata,
        "tensors": entries,
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    atomic_write_bytes(path, Config.CHECKPOINT_MAGIC + _LENGTH.pack(len(header)) + header + b"".join(chunks))
    logger.info("Saved checkpoint %s (%d tensors, %d bytes)", path, len(entries), offset)


def read_manifest(blob: bytes) -> Dict[str, Any]:
    magic = Config.CHECKPOINT_MAGIC
    if not blob.startswith(magic) or len(blob) < len(magic) + _LENGTH.size:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (length,) = _LENGTH.unpack_from(blob, len(magic))
    start = len(magic) + _LENGTH.size
    if start + length > len(blob):
        raise CheckpointError("truncated checkpoint manifest")
    try:
        manifest = json.loads(blob[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint manifest: {e}") from e

    version = manifest.get("format_version")
    if version != Config.CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (expected {Config.CHECKPOINT_FORMAT_VERSION})"
        )
    manifest["_payload_start"] = start + length
    return manifest


def load_checkpoint(path: str) -> Checkpoint:
    """
    Raises:
        OSError: file cannot be read
        CheckpointError: bad magic, version mismatch, missing or mis-shaped tensors
    """
    with open(path, "rb") as f:
        blob = f.read()
    manifest = read_manifest(blob)
    payload = memoryview(blob)[manifest["_payload_start"]:]

    config = TrainConfig.model_validate(manifest["config"])
    vocab = Vocabulary.from_dict(manifest["vocab"])
    model = create_model(config, vocab.size, vocab.num_labels)
    params = model.parameters()

    stored = {entry["name"]: entry for entry in manifest["tensors"]}
    if set(stored) != set(params):
        missing = sorted(set(params) - set(stored))
        extra = sorted(set(stored) - set(params))
        raise CheckpointError(f"tensor set mismatch: missing={missing} unexpected={extra}")

    for name, tensor in params.items():
        entry = stored[name]
        if entry["dtype"] != TENSOR_DTYPE or tuple(entry["shape"]) != tensor.shape:
            raise CheckpointError(
                f"tensor {name}: stored {entry['dtype']}{tuple(entry['shape'])}, model expects {tensor.shape}"
            )
        expected = int(np.prod(tensor.shape, dtype=np.int64)) * np.dtype(TENSOR_DTYPE).itemsize
        if entry["nbytes"] != expected:
            raise CheckpointError(
                f"tensor {name}: {entry['nbytes']} bytes stored, shape {tensor.shape} needs {expected}"
            )
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"tensor {name}: payload truncated")
        values = np.frombuffer(payload[entry["offset"]:end], dtype=TENSOR_DTYPE)
        tensor.data = values.reshape(tensor.shape).astype(np.float64)

    logger.info("Loaded checkpoint %s (%d tensors)", path, len(params))
    return Checkpoint(
        model=model,
        vocab=vocab,
        config=config,
        best_val=manifest.get("best_val"),
        median_gap=manifest.get("median_gap"),
        rng_state=manifest.get("rng_state"),
        metadata=manifest.get("metadata") or {},
    )
