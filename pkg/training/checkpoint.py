"""
SPIXREG1 checkpoint files.

Layout: the 8-byte magic, a little-endian uint32 manifest length, the
UTF-8 JSON manifest, then every tensor as little-endian float32 in
manifest order. Manifest offsets are relative to the start of the data
block.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from engine.errors import DataError
from engine.tensor import DTYPE
from .encoder import EncoderConfig, ToyEncoder

logger = logging.getLogger(__name__)

MAGIC = b"SPIXREG1"
FORMAT_VERSION = 1
_STORAGE = np.dtype('<f4')


@dataclass
class Checkpoint:
    """Encoder parameters plus the configuration needed to rebuild it"""
    encoder: EncoderConfig
    params: Dict[str, np.ndarray]
    best_epoch: int = 0
    val_accuracy: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    def model(self) -> ToyEncoder:
        return ToyEncoder(self.encoder, self.params)

    def stored(self) -> "Checkpoint":
        """Copy with parameters rounded to the float32 file precision"""
        params = {name: value.astype(_STORAGE).astype(DTYPE) for name, value in self.params.items()}
        return Checkpoint(self.encoder, params, self.best_epoch, self.val_accuracy, dict(self.extra))


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    tensors, blobs, offset = [], [], 0
    for name in sorted(checkpoint.params):
        data = np.ascontiguousarray(checkpoint.params[name], dtype=_STORAGE).tobytes()
        tensors.append({"name": name, "shape": list(checkpoint.params[name].shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    manifest = {
        "format": FORMAT_VERSION,
        "tensors": tensors,
        "encoder": checkpoint.encoder.model_dump(mode='json'),
        "best_epoch": checkpoint.best_epoch,
        "val_accuracy": checkpoint.val_accuracy,
        "extra": checkpoint.extra,
    }
    header = json.dumps(manifest, sort_keys=True).encode('utf-8')
    return MAGIC + struct.pack('<I', len(header)) + header + b"".join(blobs)


def decode_checkpoint(payload: bytes) -> Checkpoint:
    if payload[:len(MAGIC)] != MAGIC:
        raise DataError("Not a checkpoint file (bad magic)")
    start = len(MAGIC) + 4
    if len(payload) < start:
        raise DataError("Truncated checkpoint header")
    (length,) = struct.unpack('<I', payload[len(MAGIC):start])
    try:
        manifest = json.loads(payload[start:start + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"Corrupt checkpoint manifest: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise DataError(f"Unsupported checkpoint format {manifest.get('format')}")

    data = payload[start + length:]
    params = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = entry["offset"]
        end = begin + count * _STORAGE.itemsize
        if end > len(data):
            raise DataError(f"Tensor '{entry['name']}' runs past the end of the file")
        params[entry["name"]] = np.frombuffer(data[begin:end], dtype=_STORAGE).reshape(shape).astype(DTYPE)

    return Checkpoint(
        encoder=EncoderConfig(**manifest["encoder"]),
        params=params,
        best_epoch=int(manifest.get("best_epoch", 0)),
        val_accuracy=float(manifest.get("val_accuracy", 0.0)),
        extra=dict(manifest.get("extra", {})),
    )


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """Write atomically (temp file, then rename)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = path.with_name(path.name + ".tmp")
    temp.write_bytes(encode_checkpoint(checkpoint))
    os.replace(temp, path)
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    checkpoint = decode_checkpoint(path.read_bytes())
    checkpoint.model()
    logger.debug(f"Loaded checkpoint {path} ({len(checkpoint.params)} tensors)")
    return checkpoint
