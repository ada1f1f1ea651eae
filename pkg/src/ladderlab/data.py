"""Datasets: IDX ingestion, synthetic blobs, per-class subsetting.

All pixel/coordinate values live in [0,1]; labels are integers below the
dataset's class count. Images use NCHW layout, vector data is (N, D).
"""

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import rng
from .errors import (
    BudgetError,
    ConsistencyError,
    ContractError,
    FormatError,
    LengthError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    class_count: int
    split: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float32)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if len(self.x) == 0:
            raise ContractError("dataset must be non-empty")
        if len(self.x) != len(self.y):
            raise ConsistencyError(f"{len(self.x)} samples vs {len(self.y)} labels")
        if self.y.min() < 0 or self.y.max() >= self.class_count:
            raise ConsistencyError(
                f"labels outside [0, {self.class_count}): {self.y.min()}..{self.y.max()}"
            )

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i) -> LabeledSample:
        return LabeledSample(self.x[i], int(self.y[i]))

    @property
    def input_shape(self):
        return tuple(self.x.shape[1:])

    def select(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.x[idx].copy(), self.y[idx].copy(), self.class_count, self.split, dict(self.meta))

    def restrict_classes(self, classes) -> "Dataset":
        mask = np.isin(self.y, list(classes))
        return self.select(np.nonzero(mask)[0])


def _read_be_u32(blob, off, what):
    if off + 4 > len(blob):
        raise LengthError(f"truncated {what}")
    return struct.unpack_from(">I", blob, off)[0], off + 4


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair, scaling bytes into [0,1]."""
    with open(images_path, "rb") as f:
        img_blob = f.read()
    with open(labels_path, "rb") as f:
        lab_blob = f.read()

    magic, off = _read_be_u32(img_blob, 0, "image header")
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    n, off = _read_be_u32(img_blob, off, "image count")
    h, off = _read_be_u32(img_blob, off, "image rows")
    w, off = _read_be_u32(img_blob, off, "image cols")
    payload = img_blob[off:]
    if len(payload) != n * h * w:
        raise LengthError(f"image payload {len(payload)} bytes, expected {n * h * w}")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n, 1, h, w)

    magic, off = _read_be_u32(lab_blob, 0, "label header")
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    m, off = _read_be_u32(lab_blob, off, "label count")
    lab_payload = lab_blob[off:]
    if len(lab_payload) != m:
        raise LengthError(f"label payload {len(lab_payload)} bytes, expected {m}")
    if n != m:
        raise ConsistencyError(f"{n} images vs {m} labels")
    labels = np.frombuffer(lab_payload, dtype=np.uint8).astype(np.int64)

    x = images.astype(np.float32) / np.float32(255.0)
    return Dataset(x, labels, class_count=int(labels.max()) + 1 if m else 0)


def write_idx(images_path, labels_path, images_u8, labels_u8):
    """Inverse of load_idx for raw uint8 payloads (testing and export)."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    n, h, w = images_u8.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(images_u8.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels_u8)))
        f.write(labels_u8.tobytes())


def synth_blobs(class_count, per_class, dim, separation, seed) -> Dataset:
    """Gaussian clusters (sigma=1) at mutually separated means, mapped into [0,1]."""
    if class_count < 2:
        raise ContractError(f"class_count must be >= 2, got {class_count}")
    if per_class < 1:
        raise ContractError(f"per_class must be >= 1, got {per_class}")
    if not separation > 0:
        raise ContractError(f"separation must be positive, got {separation}")

    stream = rng.named_stream(seed, "data.blobs")
    box = separation * class_count
    means = []
    attempts = 0
    while len(means) < class_count:
        cand = stream.uniform(0.0, box, size=dim)
        if all(np.linalg.norm(cand - m) >= separation for m in means):
            means.append(cand)
        attempts += 1
        if attempts > 100_000:
            raise ContractError("could not place mutually separated blob means")

    xs, ys = [], []
    for c, mean in enumerate(means):
        pts = mean[None, :] + stream.normal(0.0, 1.0, size=(per_class, dim))
        xs.append(pts)
        ys.append(np.full(per_class, c, dtype=np.int64))
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys, axis=0)

    lo, hi = x.min(), x.max()
    x = (x - lo) / max(hi - lo, 1e-12)
    x = np.clip(x, 0.0, 1.0).astype(np.float32)
    return Dataset(x, y, class_count, meta={"kind": "blobs", "separation": separation})


def per_class_subset(ds: Dataset, per_class, seed) -> Dataset:
    """Uniform without-replacement draw of per_class samples from each class."""
    stream = rng.named_stream(seed, "data.subset")
    chosen = []
    for c in range(ds.class_count):
        pool = np.nonzero(ds.y == c)[0]
        if len(pool) < per_class:
            raise BudgetError(
                f"class {c} has {len(pool)} samples, needs {per_class}"
            )
        pick = stream.choice(pool, size=per_class, replace=False)
        chosen.append(np.sort(pick))
    return ds.select(np.concatenate(chosen))


def split_dataset(ds: Dataset, test_fraction, seed):
    """Disjoint train/test split, stratified per class."""
    if not 0.0 < test_fraction < 1.0:
        raise ContractError(f"test_fraction must be in (0,1), got {test_fraction}")
    stream = rng.named_stream(seed, "data.split")
    train_idx, test_idx = [], []
    for c in range(ds.class_count):
        pool = stream.permutation(np.nonzero(ds.y == c)[0])
        n_test = max(1, int(round(test_fraction * len(pool))))
        if n_test >= len(pool):
            raise BudgetError(f"class {c} too small to split: {len(pool)} samples")
        test_idx.append(np.sort(pool[:n_test]))
        train_idx.append(np.sort(pool[n_test:]))
    train = ds.select(np.concatenate(train_idx))
    test = ds.select(np.concatenate(test_idx))
    train.split, test.split = "train", "test"
    return train, test


def avg_pool_2x2(images: np.ndarray) -> np.ndarray:
    """Deterministic 2x2 average pooling over NCHW images."""
    n, c, h, w = images.shape
    if h % 2 or w % 2:
        raise ContractError(f"avg_pool_2x2 needs even spatial dims, got {h}x{w}")
    return images.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5), dtype=np.float32)


def downsample_28_to_8(images: np.ndarray) -> np.ndarray:
    """28x28 -> zero-pad to 32x32 -> two 2x2 average pooling blocks -> 8x8."""
    n, c, h, w = images.shape
    if (h, w) != (28, 28):
        raise ContractError(f"expected 28x28 images, got {h}x{w}")
    padded = np.pad(images, ((0, 0), (0, 0), (2, 2), (2, 2)))
    return avg_pool_2x2(avg_pool_2x2(padded))


def load_digits8(seed, train_per_class=50, test_per_class=20):
    """Bundled 8x8 handwritten-digit images as disjoint train/test datasets.

    Serves as the fast desk-scale stand-in for full 28x28 digit data, which
    stays behind the IDX loader and the slow profile.
    """
    from sklearn.datasets import load_digits

    raw = load_digits()
    x = (raw.images.astype(np.float32) / 16.0)[:, None, :, :]
    y = raw.target.astype(np.int64)
    stream = rng.named_stream(seed, "data.digits8")

    train_idx, test_idx = [], []
    for c in range(10):
        pool = np.nonzero(y == c)[0]
        if len(pool) < train_per_class + test_per_class:
            raise BudgetError(
                f"class {c}: {len(pool)} available, "
                f"{train_per_class + test_per_class} requested"
            )
        perm = stream.permutation(pool)
        train_idx.append(np.sort(perm[:train_per_class]))
        test_idx.append(np.sort(perm[train_per_class : train_per_class + test_per_class]))

    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    train = Dataset(x[tr], y[tr], 10, split="train", meta={"kind": "digits8"})
    test = Dataset(x[te], y[te], 10, split="test", meta={"kind": "digits8"})
    return train, test


def write_manifest(path, entries: dict):
    """Plain-text key=value manifest, keys sorted for stable bytes."""
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(entries):
            f.write(f"{key}={entries[key]}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"manifest line without '=': {line!r}")
            key, value = line.split("=", 1)
            out[key] = value
    return out
