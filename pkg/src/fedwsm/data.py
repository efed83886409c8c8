"""Dataset container, synthetic data generation, and IDX/CSV ingestion."""

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ParseError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Class means sit on a sphere of this radius before per-dimension
# standardization; `spread` is the within-class standard deviation, so
# spread alone tunes separability.
MEAN_RADIUS = 3.0


@dataclass
class Dataset:
    features: np.ndarray        # [N, D] float64
    labels: np.ndarray          # [N] int64
    num_classes: int
    test_features: np.ndarray   # held-out split, may be empty
    test_labels: np.ndarray

    @property
    def num_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def make_synthetic(num_classes, dim, per_class, spread, seed):
    """Gaussian class clusters with means on a sphere; 20% held out for test.

    Features are standardized per dimension over the full sample. Separability
    is controlled by `spread` relative to MEAN_RADIUS.
    """
    if num_classes < 2 or dim < 2:
        raise ConfigurationError("synthetic dataset needs num_classes >= 2 and dim >= 2")
    if per_class < 5:
        raise ConfigurationError("need at least 5 samples per class for the test split")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    means = rng.standard_normal((num_classes, dim))
    means *= MEAN_RADIUS / np.linalg.norm(means, axis=1, keepdims=True)

    x = np.empty((num_classes * per_class, dim))
    y = np.empty(num_classes * per_class, dtype=np.int64)
    for c in range(num_classes):
        sl = slice(c * per_class, (c + 1) * per_class)
        x[sl] = means[c] + spread * rng.standard_normal((per_class, dim))
        y[sl] = c
    x -= x.mean(axis=0)
    x /= x.std(axis=0)

    # stratified 20% test split
    n_test_pc = per_class // 5
    test_mask = np.zeros(x.shape[0], dtype=bool)
    for c in range(num_classes):
        idx = np.arange(c * per_class, (c + 1) * per_class)
        test_mask[rng.permutation(idx)[:n_test_pc]] = True
    return Dataset(x[~test_mask], y[~test_mask], num_classes,
                   x[test_mask], y[test_mask])


def _read_be_u32(data, off, path):
    if off + 4 > len(data):
        raise ParseError(f"truncated IDX file {path}", location=f"byte {off}")
    return struct.unpack_from(">I", data, off)[0]


def load_idx(images_path, labels_path):
    """Parse an IDX image/label file pair (big-endian); pixels scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        img = f.read()
    with open(labels_path, "rb") as f:
        lab = f.read()

    magic = _read_be_u32(img, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(f"bad image magic 0x{magic:08x} in {images_path}", location="byte 0")
    n = _read_be_u32(img, 4, images_path)
    rows = _read_be_u32(img, 8, images_path)
    cols = _read_be_u32(img, 12, images_path)
    if len(img) != 16 + n * rows * cols:
        raise ParseError(
            f"image file {images_path} declares {n}x{rows}x{cols} pixels "
            f"but holds {len(img) - 16} bytes", location=f"byte {len(img)}")

    magic = _read_be_u32(lab, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise ParseError(f"bad label magic 0x{magic:08x} in {labels_path}", location="byte 0")
    n_lab = _read_be_u32(lab, 4, labels_path)
    if len(lab) != 8 + n_lab:
        raise ParseError(f"label file {labels_path} declares {n_lab} labels "
                         f"but holds {len(lab) - 8} bytes", location=f"byte {len(lab)}")
    if n_lab != n:
        raise ParseError(
            f"count mismatch: {n} images vs {n_lab} labels", location="byte 4")

    x = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n, rows * cols)
    y = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(x.astype(np.float64) / 255.0, y, int(y.max()) + 1 if n else 0,
                   np.empty((0, rows * cols)), np.empty(0, dtype=np.int64))


def load_csv(path, label_column):
    """Rectangular numeric CSV with a header; labels re-indexed densely to [0, C)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"empty CSV file {path}", location="line 1") from None
        if label_column not in header:
            raise ConfigurationError(
                f"label column {label_column!r} not in CSV header {header}")
        label_idx = header.index(label_column)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"ragged row with {len(row)} fields, expected {len(header)}",
                                 location=f"line {lineno}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError("non-numeric cell", location=f"line {lineno}") from None
            labels.append(vals.pop(label_idx))
            feats.append(vals)
    if not feats:
        raise ParseError(f"CSV file {path} has no data rows", location="line 2")
    x = np.asarray(feats)
    raw = np.asarray(labels)
    classes = np.unique(raw)
    y = np.searchsorted(classes, raw).astype(np.int64)
    return Dataset(x, y, len(classes), np.empty((0, x.shape[1])), np.empty(0, dtype=np.int64))
