"""Datasets: synthetic generators, delimited text and IDX loaders, batching."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .mixup import LabeledBatch, check_one_hot

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    pass


def one_hot(indices, n_classes: int):
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((len(indices), n_classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    image_shape: tuple | None = None  # (height, width, channels)

    def __post_init__(self):
        if len(self.inputs) < 1:
            raise DataError("dataset is empty")
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels):
            raise DataError("inputs must be (N, d) with one label row per sample")
        check_one_hot(self.labels)
        if self.labels.shape[1] != self.class_count:
            raise DataError("label width does not match class_count")
        if self.image_shape is not None and int(np.prod(self.image_shape)) != self.inputs.shape[1]:
            raise DataError(f"image shape {self.image_shape} does not match input width")

    @classmethod
    def from_indices(cls, inputs, targets, class_count=None, image_shape=None):
        targets = np.asarray(targets, dtype=np.int64)
        if class_count is None:
            class_count = int(targets.max()) + 1
        return cls(np.asarray(inputs, dtype=np.float64), one_hot(targets, class_count),
                   class_count, image_shape)

    def __len__(self):
        return len(self.inputs)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def targets(self):
        return np.argmax(self.labels, axis=1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count, self.image_shape)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "gaussian_blobs"  # or "concentric_rings"
    class_count: int = 3
    samples_per_class: int = 100
    input_dim: int = 2
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if min(self.class_count, self.samples_per_class, self.input_dim) < 1:
            raise ValueError("synthetic counts must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.kind == "concentric_rings" and self.input_dim < 2:
            raise ValueError("concentric rings need input_dim >= 2")


SYNTHETIC_KINDS = ("gaussian_blobs", "concentric_rings")


def blob_means(n_classes: int, dim: int, rng: np.random.Generator):
    """Class centres: evenly spaced on the unit circle in the first two
    coordinates, standard-normal draws in any further ones."""
    if dim == 1:
        return np.arange(n_classes, dtype=np.float64)[:, None]
    theta = 2 * np.pi * np.arange(n_classes) / n_classes
    means = np.zeros((n_classes, dim))
    means[:, 0] = np.cos(theta)
    means[:, 1] = np.sin(theta)
    if dim > 2:
        means[:, 2:] = rng.standard_normal((n_classes, dim - 2))
    return means


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    k, m, d = spec.class_count, spec.samples_per_class, spec.input_dim
    targets = np.repeat(np.arange(k), m)
    if spec.kind == "gaussian_blobs":
        means = blob_means(k, d, rng)
        x = means[targets] + spec.noise_sigma * rng.standard_normal((k * m, d))
    else:
        angle = rng.uniform(0, 2 * np.pi, size=k * m)
        radius = 1.0 + targets
        x = spec.noise_sigma * rng.standard_normal((k * m, d))
        x[:, 0] += radius * np.cos(angle)
        x[:, 1] += radius * np.sin(angle)
    return Dataset.from_indices(x, targets, k)


def train_test_split(ds: Dataset, test_fraction: float, seed: int):
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(round(len(ds) * test_fraction))
    if not 0 < n_test < len(ds):
        raise DataError(f"split leaves an empty side ({n_test} of {len(ds)} for test)")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def load_delimited(path, label_column=0, delimiter=",", has_header=False, class_count=None) -> Dataset:
    """Parse one sample per row: an integer label column plus float features."""
    rows, targets = [], []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f, delimiter=delimiter), start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if not -width <= label_column < width:
                    raise DataError(f"row {lineno}: label column {label_column} out of range")
            elif len(row) != width:
                raise DataError(f"row {lineno}: expected {width} fields, found {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise DataError(f"row {lineno}: unparsable numeric field") from None
            label = values.pop(label_column)
            if not label.is_integer() or label < 0 or (class_count is not None and label >= class_count):
                raise DataError(f"row {lineno}: invalid class label {row[label_column]!r}")
            targets.append(int(label))
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_indices(np.array(rows, dtype=np.float64), targets, class_count)


def write_delimited(ds: Dataset, path, delimiter=",") -> None:
    """Label first, then features; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        for t, x in zip(ds.targets, ds.inputs):
            w.writerow([int(t), *(repr(float(v)) for v in x)])


def _read_idx(path, magic, what):
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 8:
        raise DataError(f"{path}: truncated {what} header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataError(f"{path}: bad magic 0x{got:08x} for {what} (want 0x{magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise DataError(f"{path}: truncated {what} header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    need = int(np.prod(dims))
    if len(buf) - header < need:
        raise DataError(f"{path}: truncated payload ({len(buf) - header} of {need} bytes)")
    if len(buf) - header > need:
        raise DataError(f"{path}: {len(buf) - header - need} trailing bytes")
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, class_count=None) -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if len(images) != len(labels):
        raise DataError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    if class_count is not None and labels.max() >= class_count:
        raise DataError(f"label {labels.max()} out of range for {class_count} classes")
    n, h, w = images.shape
    x = images.reshape(n, h * w).astype(np.float64) / 255.0
    return Dataset.from_indices(x, labels, class_count, image_shape=(h, w, 1))


def write_idx(images, labels, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">I", IDX_IMAGES_MAGIC) + struct.pack(">3I", *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int):
    """Shuffle with a generator keyed on (seed, epoch) and cut into batches.

    The last, possibly smaller, batch is kept.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = np.random.default_rng([seed, epoch]).permutation(len(ds))
    return [
        LabeledBatch(ds.inputs[idx], ds.labels[idx])
        for idx in (perm[i : i + batch_size] for i in range(0, len(ds), batch_size))
    ]


def horizontal_flip(batch: LabeledBatch, probability: float, rng: np.random.Generator, image_shape):
    """Mirror each image left-right with the given probability."""
    if image_shape is None:
        raise DataError("horizontal flip needs image-shaped data")
    h, w, c = image_shape
    flip = rng.random(len(batch)) < probability
    if not flip.any():
        return batch
    imgs = batch.inputs.reshape(len(batch), h, w, c).copy()
    imgs[flip] = imgs[flip][:, :, ::-1, :]
    return LabeledBatch(imgs.reshape(len(batch), -1), batch.labels)
