"""Dataset container, CSV schemas for the benchmark tables, IDX images.

The CSV layouts mirror the classic UCI distributions so files fetched from
there (or exported by ``scripts/fetch_datasets.py``) load unchanged:

* iris: 4 numeric columns then the class name (``Iris-setosa``, ...), no header
* wine: class label 1/2/3 in the first column, 13 numeric columns after
* wbc:  sample id (dropped), ``B``/``M`` diagnosis, then 30 numeric columns

Labels are always re-encoded to 0..n_classes-1 in lexicographic order of the
raw label strings.
"""

from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801

DATA_ROOT_ENV = "LEHMERNET_DATA_ROOT"

TABULAR_FILES = {"iris": "iris.csv", "wine": "wine.csv", "wbc": "wdbc.csv"}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DataFormatError(ValueError):
    """A data file does not match its declared schema."""


@dataclass
class Dataset:
    """Features plus integer labels, with the label vocabulary attached."""

    name: str
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.features.ndim < 2:
            raise DataFormatError("features must be at least 2-d (samples first)")
        if self.labels.shape != (self.features.shape[0],):
            raise DataFormatError(
                f"{self.labels.shape[0] if self.labels.ndim else 0} labels for "
                f"{self.features.shape[0]} samples"
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise DataFormatError("labels must be integer-encoded")
        if self.n_samples and self.class_names:
            if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
                raise DataFormatError("label outside the class vocabulary")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        if self.class_names:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if self.n_samples else 0


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of one benchmark CSV (indices refer to the raw row)."""

    name: str
    n_columns: int
    label_column: int
    label_map: dict
    drop_columns: tuple = ()
    has_header: bool = False
    feature_names: tuple = ()

    @property
    def class_names(self):
        """Raw label strings ordered by their encoded value."""
        return tuple(sorted(self.label_map, key=self.label_map.get))

    @property
    def n_features(self):
        return self.n_columns - 1 - len(self.drop_columns)


SCHEMAS = {
    "iris": CsvSchema(
        name="iris",
        n_columns=5,
        label_column=4,
        label_map={"Iris-setosa": 0, "Iris-versicolor": 1, "Iris-virginica": 2},
    ),
    "wine": CsvSchema(
        name="wine",
        n_columns=14,
        label_column=0,
        label_map={"1": 0, "2": 1, "3": 2},
    ),
    "wbc": CsvSchema(
        name="wbc",
        n_columns=32,
        label_column=1,
        label_map={"B": 0, "M": 1},
        drop_columns=(0,),
    ),
}


def load_tabular_csv(path, schema):
    """Parse a CSV against a schema, reporting row/column on any mismatch."""
    features = []
    labels = []
    feature_cols = [
        i
        for i in range(schema.n_columns)
        if i != schema.label_column and i not in schema.drop_columns
    ]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if schema.has_header and line_no == 1:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # blank/trailing line
            if len(row) != schema.n_columns:
                raise DataFormatError(
                    f"{path}: line {line_no}: expected {schema.n_columns} "
                    f"columns, got {len(row)}"
                )
            raw_label = row[schema.label_column].strip()
            if raw_label not in schema.label_map:
                known = ", ".join(sorted(schema.label_map))
                raise DataFormatError(
                    f"{path}: line {line_no}: unknown label {raw_label!r} "
                    f"(expected one of: {known})"
                )
            values = []
            for col in feature_cols:
                cell = row[col].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: line {line_no}, column {col + 1}: "
                        f"not a number: {cell!r}"
                    ) from None
            features.append(values)
            labels.append(schema.label_map[raw_label])
    if not features:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(
        name=schema.name,
        features=np.array(features, dtype=float),
        labels=np.array(labels, dtype=np.int64),
        class_names=schema.class_names,
        feature_names=schema.feature_names,
    )


def save_tabular_csv(dataset, path, schema):
    """Write a dataset back out in the schema's raw column layout.

    Dropped columns (e.g. the wbc sample id) are filled with the 1-based row
    number; they carry no information and the loader discards them.
    """
    class_names = schema.class_names
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(dataset.n_samples):
            row = [None] * schema.n_columns
            for col in schema.drop_columns:
                row[col] = str(i + 1)
            row[schema.label_column] = class_names[int(dataset.labels[i])]
            values = iter(dataset.features[i])
            for col in range(schema.n_columns):
                if row[col] is None:
                    row[col] = repr(float(next(values)))
            writer.writerow(row)


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic, what):
    with _open_maybe_gzip(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic, = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{magic:08x} for {what} "
            f"(expected 0x{expected_magic:08x})"
        )
    n_dims = magic & 0xFF
    header_end = 4 + 4 * n_dims
    if len(data) < header_end:
        raise DataFormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{n_dims}I", data[4:header_end])
    count = int(np.prod(dims))
    body = data[header_end:]
    if len(body) != count:
        raise DataFormatError(
            f"{path}: expected {count} data bytes for dims {dims}, "
            f"got {len(body)}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path):
    """Load an IDX image/label pair (gzipped or raw) as a Dataset.

    Pixels are scaled to [0, 1] floats; shapes and the big-endian magic
    numbers are validated, as is the image/label count agreement.
    """
    images = _read_idx(images_path, IDX_MAGIC_IMAGES, "images")
    labels = _read_idx(labels_path, IDX_MAGIC_LABELS, "labels")
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected 3-d image tensor")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: expected 1-d label vector")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image/label count mismatch: {images.shape[0]} images vs "
            f"{labels.shape[0]} labels"
        )
    return Dataset(
        name="mnist",
        features=images.astype(float) / 255.0,
        labels=labels.astype(np.int64),
        class_names=tuple(str(d) for d in range(10)),
    )


def get_data_root(override=None):
    """Resolve the dataset directory: flag > environment > ./data."""
    if override:
        return override
    return os.environ.get(DATA_ROOT_ENV, "data")


def find_mnist_pair(data_root, split):
    """Locate the (images, labels) files for a split, or None if absent."""
    images_name, labels_name = MNIST_FILES[split]
    base = os.path.join(data_root, "mnist")
    pair = []
    for name in (images_name, labels_name):
        for candidate in (os.path.join(base, name + ".gz"),
                          os.path.join(base, name)):
            if os.path.exists(candidate):
                pair.append(candidate)
                break
        else:
            return None
    return tuple(pair)


def load_named_tabular(name, data_root):
    """Load one of the benchmark CSVs from the data root by short name."""
    if name not in SCHEMAS:
        known = ", ".join(sorted(SCHEMAS))
        raise DataFormatError(f"unknown dataset {name!r} (expected: {known})")
    path = os.path.join(data_root, TABULAR_FILES[name])
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"{path} not found; run scripts/fetch_datasets.py or set "
            f"{DATA_ROOT_ENV}"
        )
    return load_tabular_csv(path, SCHEMAS[name])


def make_synthetic_blobs(n_samples, n_features, n_classes, seed, spread=0.5):
    """Deterministic Gaussian blobs with near-balanced classes.

    Class centers are drawn once from U(-5, 5) per coordinate and samples are
    centers plus isotropic noise, so small ``spread`` gives an easily
    separable problem for smoke tests.
    """
    if n_samples < n_classes or n_classes < 2 or n_features < 1:
        raise ValueError("need n_samples >= n_classes >= 2 and n_features >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-5.0, 5.0, (n_classes, n_features))
    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    features = centers[labels] + rng.normal(0.0, spread, (n_samples, n_features))
    order = rng.permutation(n_samples)
    return Dataset(
        name="blobs",
        features=features[order],
        labels=labels[order],
        class_names=tuple(f"class_{c}" for c in range(n_classes)),
    )
