"""Dataset loading (IDX, CSV), normalisation, noise augmentation, splits and batching.

Every input produced here lies in [-1, 1], the range the membership circuits expect.
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError, InvalidArgument

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    kind: str = "feature"  # "image" (N, 1, 28, 28) or "feature" (N, d)
    num_classes: int | None = None
    scaling: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=float))
        if len(self.inputs) != len(labels):
            raise ConsistencyError(
                f"{len(self.inputs)} inputs but {len(labels)} labels"
            )
        if self.num_classes is None:
            object.__setattr__(self, "num_classes", int(labels.max()) + 1 if labels.size else 0)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, inputs=self.inputs[idx], labels=self.labels[idx])

    @property
    def flat(self) -> np.ndarray:
        return self.inputs.reshape(len(self), -1)


def _read(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    body = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if body.size != int(np.prod(dims)):
        raise FormatError(f"{path}: expected {int(np.prod(dims))} data bytes, found {body.size}")
    return body.reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels map to v/127.5 - 1."""
    images = _parse_idx(_read(images_path), IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read(labels_path), LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise ConsistencyError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    x = images.astype(float)[:, None, :, :] / 127.5 - 1.0
    return Dataset(x, labels.astype(np.int64), kind="image", num_classes=10)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (N, rows, cols) and labels (N,) as raw IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def add_gaussian_noise(ds: Dataset, stddev: float = 0.05, seed: int = 0) -> Dataset:
    if stddev == 0:
        return ds
    rng = np.random.default_rng(seed)
    noisy = np.clip(ds.inputs + rng.normal(0.0, stddev, size=ds.inputs.shape), -1.0, 1.0)
    return replace(ds, inputs=noisy)


def load_csv_features(path, k: int, scaling=None) -> Dataset:
    """CSV with header ``label,f0,f1,...``. Columns are min-max scaled to [-1, 1].

    Pass the ``scaling`` of a training set to reuse its statistics on held-out data.
    """
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise FormatError(f"{path}: header must start with 'label'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(f"{path}: line {lineno} has {len(row)} cells, expected {width}")
            try:
                label = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
            if not 0 <= label < k:
                raise InvalidArgument(f"{path}: line {lineno}: label {label} outside [0, {k})")
            labels.append(label)
            rows.append(values)
    x = np.array(rows, dtype=float).reshape(len(rows), width - 1)
    if scaling is None:
        if not len(rows):
            raise InvalidArgument(f"{path}: no data rows")
        scaling = (x.min(axis=0), x.max(axis=0))
    lo, hi = scaling
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, 2 * (x - lo) / safe - 1, 0.0)
    return Dataset(np.clip(scaled, -1, 1), labels, kind="feature", num_classes=k,
                   scaling=(lo, hi))


def split(ds: Dataset, fraction: float | None = None, seed: int = 0,
          per_class: int | None = None) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split into (train, held_out).

    ``fraction`` sends round(fraction * N) shuffled samples to train; ``per_class``
    sends the first ``per_class`` shuffled samples of each class instead.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    if per_class is not None:
        train = []
        for c in range(ds.num_classes):
            members = order[ds.labels[order] == c]
            if len(members) < per_class:
                raise InvalidArgument(f"class {c} has {len(members)} samples, need {per_class}")
            train.extend(members[:per_class])
        train = np.sort(np.array(train, dtype=np.int64))
        held = np.setdiff1d(np.arange(len(ds)), train)
        return ds.subset(train), ds.subset(held)
    if fraction is None or not 0 < fraction < 1:
        raise InvalidArgument("fraction must lie in (0, 1)")
    n_train = int(round(fraction * len(ds)))
    return ds.subset(np.sort(order[:n_train])), ds.subset(np.sort(order[n_train:]))


@dataclass(frozen=True)
class BatchPlan:
    seed: int
    batch_size: int
    shuffle: bool = True

    def permutation(self, n: int, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(n)
        return np.random.default_rng([self.seed, epoch]).permutation(n)


def batches(ds: Dataset, plan: BatchPlan, epoch: int = 0, one_hot_labels: bool = True):
    """Yield (inputs, labels) for one epoch; the last batch may be short."""
    from .nn import one_hot

    if plan.batch_size < 1:
        raise InvalidArgument("batch size must be >= 1")
    order = plan.permutation(len(ds), epoch)
    for lo in range(0, len(ds), plan.batch_size):
        idx = order[lo:lo + plan.batch_size]
        y = ds.labels[idx]
        yield ds.inputs[idx], one_hot(y, ds.num_classes) if one_hot_labels else y
