"""Minimal IDX reader for the training side (gzip transparent)."""

from __future__ import annotations

import gzip
import struct

import numpy as np


def _read(path: str) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as g:
                return g.read()
        return f.read()


def load_idx(images_path: str, labels_path: str) -> tuple[np.ndarray, np.ndarray]:
    """(N, 1, 28, 28) float32 images in [0, 1] and int64 labels."""
    data = _read(images_path)
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != 0x00000803:
        raise ValueError(f"{images_path}: bad images magic 0x{magic:08x}")
    images = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, 1, rows, cols)
    data = _read(labels_path)
    magic, m = struct.unpack(">II", data[:8])
    if magic != 0x00000801:
        raise ValueError(f"{labels_path}: bad labels magic 0x{magic:08x}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)
    if m != n:
        raise ValueError(f"{n} images but {m} labels")
    return images.astype(np.float32) / 255.0, labels
