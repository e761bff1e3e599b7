"""Activation-map extraction and the on-disk dump format.

A dump is two files so other tooling can diff them without a parser:

    maps file    header of 4 little-endian uint32 (n, c, h, w), then
                 n*c*h*w little-endian float32 values in C (row-major) order
    labels file  n little-endian uint32, same sample order

By default the labels file sits next to the maps file with a ".labels"
suffix appended.
"""

from dataclasses import dataclass

import numpy as np

from .engine import forward_layers
from .exceptions import FormatError, ShapeError
from .model import LEVELS
from .validation import check_labels, check_maps

_HEADER_BYTES = 16


@dataclass
class ActivationMaps:
    """Post-ReLU maps captured at a split level, with their labels."""

    maps: np.ndarray
    labels: np.ndarray
    level: str = None


def extract_activations(lower, level, data, batch_size=512):
    """Run `data` through the lower part and capture its output maps.

    The lower layers are read, never written; the input images are handed
    through in dataset order, in chunks of `batch_size`, so the result for
    a given (lower, data) pair is bitwise reproducible.
    """
    if level is not None and level not in LEVELS:
        raise ShapeError(f"unknown level {level!r}, expected one of {LEVELS}")
    if not lower:
        raise ShapeError("lower part is empty; nothing to extract from")
    images = data.images
    n = len(images)
    if n == 0:
        raise ShapeError("cannot extract activations from an empty dataset")
    chunks = [forward_layers(lower, images[s:s + batch_size]) for s in range(0, n, batch_size)]
    maps = chunks[0] if len(chunks) == 1 else np.concatenate(chunks, axis=0)
    return ActivationMaps(maps, np.array(data.labels, dtype=np.int64), level)


def _labels_path(maps_path, labels_path):
    return str(maps_path) + ".labels" if labels_path is None else str(labels_path)


def save_activation_dump(acts, maps_path, labels_path=None):
    """Write an ActivationMaps to the binary dump layout. Returns the paths."""
    maps = check_maps(acts.maps, "maps")
    labels = check_labels(acts.labels, len(maps), "labels")
    n, c, h, w = maps.shape
    lp = _labels_path(maps_path, labels_path)
    with open(maps_path, "wb") as f:
        f.write(np.array([n, c, h, w], dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(maps, dtype="<f4").tobytes())
    with open(lp, "wb") as f:
        f.write(labels.astype("<u4").tobytes())
    return str(maps_path), lp


def load_activation_dump(maps_path, labels_path=None, level=None):
    """Read a dump back. Maps come back float32, labels int64."""
    with open(maps_path, "rb") as f:
        buf = f.read()
    if len(buf) < _HEADER_BYTES:
        raise FormatError(f"{maps_path}: header needs 16 bytes, file has {len(buf)}")
    n, c, h, w = (int(v) for v in np.frombuffer(buf[:_HEADER_BYTES], dtype="<u4"))
    expected = _HEADER_BYTES + n * c * h * w * 4
    if len(buf) != expected:
        raise FormatError(
            f"{maps_path}: expected {expected} bytes for shape ({n}, {c}, {h}, {w}), "
            f"found {len(buf)} (mismatch at byte offset {min(len(buf), expected)})"
        )
    maps = np.frombuffer(buf, dtype="<f4", offset=_HEADER_BYTES).reshape(n, c, h, w).copy()

    lp = _labels_path(maps_path, labels_path)
    with open(lp, "rb") as f:
        lbuf = f.read()
    if len(lbuf) != 4 * n:
        raise FormatError(
            f"{lp}: expected {4 * n} bytes for {n} labels, found {len(lbuf)} "
            f"(mismatch at byte offset {min(len(lbuf), 4 * n)})"
        )
    labels = np.frombuffer(lbuf, dtype="<u4").astype(np.int64)
    return ActivationMaps(maps, labels, level)
