"""
Binary netpbm I/O: P6 (RGB) images and P5 (gray) label maps.
"""

import logging
import os
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from engine.errors import DataError
from engine.tensor import DTYPE, UNLABELED, FeatureMap, LabelMap
from evaluation.metrics import boundary_pixels

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
OVERLAY_COLOR = (1.0, 0.0, 0.0)


class NetpbmError(DataError):
    """Malformed or unsupported netpbm file"""


def _read_token(payload: bytes, position: int) -> Tuple[bytes, int]:
    length = len(payload)
    while position < length:
        char = payload[position:position + 1]
        if char == b'#':
            while position < length and payload[position:position + 1] not in (b'\n', b'\r'):
                position += 1
        elif char.isspace():
            position += 1
        else:
            break
    start = position
    while position < length and not payload[position:position + 1].isspace() and payload[position:position + 1] != b'#':
        position += 1
    if start == position:
        raise NetpbmError("Unexpected end of netpbm header")
    return payload[start:position], position


def parse_netpbm(payload: bytes) -> Tuple[str, np.ndarray, int]:
    """Decode a P5/P6 payload into (magic, integer array, maxval)"""
    magic, position = _read_token(payload, 0)
    if magic not in (b'P5', b'P6'):
        raise NetpbmError(f"Unsupported netpbm magic {magic!r} (expected P5 or P6)")
    fields = []
    for _ in range(3):
        token, position = _read_token(payload, position)
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise NetpbmError(f"Invalid netpbm header field {token!r}") from exc
    width, height, maxval = fields
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise NetpbmError(f"Invalid netpbm dimensions {width}x{height} / maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    position += 1

    channels = 3 if magic == b'P6' else 1
    dtype = np.dtype('>u2') if maxval > 255 else np.dtype('u1')
    expected = width * height * channels * dtype.itemsize
    raster = payload[position:position + expected]
    if len(raster) < expected:
        raise NetpbmError(f"Truncated raster: {len(raster)} of {expected} bytes")
    data = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    shape = (height, width, channels) if channels == 3 else (height, width)
    return magic.decode('ascii'), data.reshape(shape), maxval


def _read(path: PathLike) -> Tuple[str, np.ndarray, int]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"No such file: {path}")
    return parse_netpbm(path.read_bytes())


def read_image(path: PathLike) -> FeatureMap:
    """P6 file as an sRGB FeatureMap in [0, 1]"""
    magic, data, maxval = _read(path)
    if magic != 'P6':
        raise NetpbmError(f"{path} is not a P6 color image")
    return FeatureMap(data.astype(DTYPE) / maxval)


def read_labels(path: PathLike) -> LabelMap:
    """P5 file as raw integer label ids"""
    magic, data, _ = _read(path)
    if magic != 'P5':
        raise NetpbmError(f"{path} is not a P5 label map")
    return LabelMap(data)


def _atomic_write(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    temp = path.with_name(path.name + ".tmp")
    temp.write_bytes(payload)
    os.replace(temp, path)
    return path


def encode_image(image: FeatureMap) -> bytes:
    if image.channels != 3:
        raise NetpbmError(f"P6 output needs 3 channels, got {image.channels}")
    raster = np.clip(np.rint(image.data * 255.0), 0, 255).astype(np.uint8)
    header = f"P6\n{image.width} {image.height}\n255\n".encode('ascii')
    return header + raster.tobytes()


def encode_labels(labels: LabelMap, sentinel: bool = True) -> bytes:
    """8-bit P5 unless an id exceeds 255, then 16-bit big-endian.

    Superpixel maps pass sentinel=False: 255 is then a real id and forces 16 bits
    so it does not read back as unlabeled.
    """
    highest = int(labels.ids.max()) if labels.ids.size else 0
    if highest > 65535:
        raise NetpbmError(f"Label id {highest} does not fit a 16-bit PGM")
    if highest > UNLABELED or (not sentinel and highest == UNLABELED):
        maxval, raster = 65535, labels.ids.astype('>u2')
    else:
        maxval, raster = 255, labels.ids.astype(np.uint8)
    header = f"P5\n{labels.width} {labels.height}\n{maxval}\n".encode('ascii')
    return header + raster.tobytes()


def write_image(path: PathLike, image: FeatureMap) -> Path:
    return _atomic_write(path, encode_image(image))


def write_labels(path: PathLike, labels: LabelMap, sentinel: bool = True) -> Path:
    return _atomic_write(path, encode_labels(labels, sentinel))


def boundary_overlay(image: FeatureMap, labels: LabelMap, color: Sequence[float] = OVERLAY_COLOR) -> FeatureMap:
    """Copy of the image with every label-boundary pixel painted in `color`"""
    if (image.height, image.width) != labels.shape:
        raise DataError(f"Image {image.height}x{image.width} and labels {labels.shape} differ in size")
    painted = np.array(image.data, copy=True)
    painted[boundary_pixels(labels)] = np.asarray(color, dtype=DTYPE)
    return FeatureMap(painted)
