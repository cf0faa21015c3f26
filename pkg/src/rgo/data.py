"""Dataset ingestion: IDX (MNIST-format) files and the bundled 8x8 digits."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bench import Dataset
from .dense import DetRng, rng_permutation

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass
class IdxDataset:
    images: np.ndarray  # (n, pixels), scaled to [0, 1]
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(f"{len(self.images)} images but {len(self.labels)} labels")


def _read_header(raw: bytes, path, magic: int, ndim: int) -> tuple[int, ...]:
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxFormatError(f"{path}: truncated header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) < expected:
        raise IdxFormatError(f"{path}: truncated, {len(raw)} bytes < {expected}")
    return dims


def downsample2(images: np.ndarray, rows: int, cols: int) -> tuple[np.ndarray, int, int]:
    """Average non-overlapping 2x2 blocks (odd trailing rows/cols are dropped)."""
    r2, c2 = rows // 2, cols // 2
    grid = images.reshape(-1, rows, cols)[:, :2 * r2, :2 * c2]
    pooled = grid.reshape(-1, r2, 2, c2, 2).mean(axis=(2, 4))
    return pooled.reshape(len(images), r2 * c2), r2, c2


def load_idx(images_path, labels_path, limit: int | None = None,
             downsample: bool = False) -> IdxDataset:
    images_raw = Path(images_path).read_bytes()
    labels_raw = Path(labels_path).read_bytes()
    n_img, rows, cols = _read_header(images_raw, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,) = _read_header(labels_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise IdxFormatError(f"{n_img} images but {n_lab} labels")
    n = n_img if limit is None else min(limit, n_img)
    pixels = np.frombuffer(images_raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(labels_raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    if downsample:
        images, rows, cols = downsample2(images, rows, cols)
    return IdxDataset(images, labels)


def write_idx(images_path, labels_path, images: np.ndarray, labels) -> None:
    """Write uint8 images of shape (n, rows, cols) and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def split_dataset(images: np.ndarray, labels: np.ndarray, test_fraction: float, seed: int,
                  n_classes: int | None = None) -> Dataset:
    """Shuffle with DetRng(seed) and hold out the last `test_fraction` as test data."""
    n = len(labels)
    order = rng_permutation(DetRng(seed), n)
    n_test = max(1, int(round(n * test_fraction)))
    train, test = order[:n - n_test], order[n - n_test:]
    classes = n_classes if n_classes is not None else int(labels.max()) + 1
    return Dataset(images[train], labels[train], images[test], labels[test], classes)


def load_digits_base(test_fraction: float = 0.2, seed: int = 0,
                     limit: int | None = None) -> Dataset:
    """The 1797-sample 8x8 handwritten digits shipped with scikit-learn, pixels in [0, 1]."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = digits.data.astype(np.float64) / 16.0
    labels = digits.target.astype(np.int64)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return split_dataset(images, labels, test_fraction, seed, n_classes=10)
