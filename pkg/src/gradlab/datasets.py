"""Dataset ingestion (IDX, CSV) and the synthetic bright-quadrant task."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .tensor import Rng
from .trainer import Dataset

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


def _read_idx(path, magic, ndim):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise DataFormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims))
    if len(raw) - header < need:
        raise DataFormatError(f"{path}: truncated, expected {need} data bytes, "
                              f"found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None) -> Dataset:
    """MNIST-style IDX pair; pixels scaled to [0, 1], one input map per image."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    k = num_classes if num_classes is not None else max(2, int(labels.max(initial=0)) + 1)
    samples = [(img[None].astype(np.float64) / 255.0, int(lab))
               for img, lab in zip(images, labels)]
    return Dataset(samples, k)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``[n, rows, cols]`` and labels ``[n]`` as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


def load_csv(path, side, num_classes=None) -> Dataset:
    """Rows ``label,p1,...,p_{side*side}`` with pixel values 0-255."""
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != side * side + 1:
                raise DataFormatError(
                    f"{path}: row {row_no} has {len(row) - 1} pixels, expected {side * side}")
            try:
                label = int(row[0])
                pix = np.array([float(c) for c in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {row_no}: non-numeric cell ({exc})") from None
            if np.any(pix < 0) or np.any(pix > 255):
                raise DataFormatError(f"{path}: row {row_no}: pixel outside 0-255")
            samples.append((pix.reshape(1, side, side) / 255.0, label))
    if not samples:
        raise DataFormatError(f"{path}: no rows")
    k = num_classes if num_classes is not None else max(2, max(y for _, y in samples) + 1)
    return Dataset(samples, k)


def quadrant_task(n=1000, side=8, seed=0, noise=0.05) -> Dataset:
    """Two-class images with one bright axis-aligned quadrant.

    Per sample, drawn from ``Rng(seed).stream("data")``: a quadrant index
    q in {0: top-left, 1: top-right, 2: bottom-left, 3: bottom-right};
    background pixels uniform in [0, 0.2]; the chosen quadrant set to a
    brightness uniform in [0.6, 1.0]; Gaussian pixel noise of std ``noise``;
    clipped to [0, 1].  Label 0 for the main diagonal (q = 0 or 3) and 1 for
    the anti-diagonal (q = 1 or 2).
    """
    if side % 2:
        raise ValueError("side must be even")
    rng = Rng(seed).stream("data")
    h = side // 2
    samples = []
    for _ in range(n):
        q = int(rng.integers(0, 4))
        img = rng.uniform(0.0, 0.2, (side, side))
        r0, c0 = (q // 2) * h, (q % 2) * h
        img[r0:r0 + h, c0:c0 + h] = rng.uniform(0.6, 1.0)
        img = np.clip(img + rng.normal(0.0, noise, (side, side)), 0.0, 1.0)
        samples.append((img[None], 0 if q in (0, 3) else 1))
    return Dataset(samples, 2)
