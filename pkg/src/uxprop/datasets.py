"""Loaders for MNIST (IDX files) and Auto MPG (UCI whitespace or CSV).

MNIST pixels are scaled to [0, 1] and the gray channel is replicated into
three channels, giving 28*28*3 = 2352 features per image (row-major H, W, C).
Auto MPG is reduced to the usual 9 features with a one-hot origin and
z-scored numeric columns (train-split statistics).
"""

import csv
import gzip
import io
import struct
from dataclasses import dataclass, field

import numpy as np

MNIST = "MNIST"
AUTO_MPG = "AutoMPG"
MNIST_SHAPE = (28, 28, 3)
MNIST_FEATURES = 28 * 28 * 3

AUTO_MPG_NUMERIC = ["cylinders", "displacement", "horsepower", "weight", "acceleration",
                    "model_year"]
AUTO_MPG_FEATURES = AUTO_MPG_NUMERIC + ["origin_USA", "origin_Europe", "origin_Japan"]
_RAW_COLUMNS = ["mpg", "cylinders", "displacement", "horsepower", "weight", "acceleration",
                "model_year", "origin"]


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    targets: np.ndarray
    split: str
    feature_names: list
    normalization: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.targets)

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def input_shape(self):
        return MNIST_SHAPE if self.name == MNIST else (self.n_features,)

    def standardized_targets(self):
        norm = self.normalization
        if "target_mean" not in norm:
            return self.targets
        return (self.targets - norm["target_mean"]) / norm["target_std"]

    def destandardize_targets(self, y):
        norm = self.normalization
        if "target_mean" not in norm:
            return np.asarray(y)
        return np.asarray(y) * norm["target_std"] + norm["target_mean"]


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path, expected_magic):
    """Read an unsigned-byte IDX file (optionally gzipped) into a uint8 array."""
    with _open(path) as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise DataFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise DataFormatError(f"{path}: magic number {magic}, expected {expected_magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise DataFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    count = int(np.prod(dims))
    if len(blob) - header != count:
        raise DataFormatError(
            f"{path}: header declares {count} bytes of data, file has {len(blob) - header}"
        )
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist(images_path, labels_path, split="train"):
    images = read_idx(images_path, 2051)
    labels = read_idx(labels_path, 2049)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels"
        )
    if images.shape[1:] != (28, 28):
        raise DataFormatError(f"expected 28x28 images, got {images.shape[1:]}")
    gray = images.astype(np.float64) / 255.0
    rgb = np.repeat(gray[..., None], 3, axis=-1).reshape(len(gray), -1)
    assert rgb.shape[1] == MNIST_FEATURES
    names = [f"px_{r}_{c}_{ch}" for r in range(28) for c in range(28) for ch in range(3)]
    return Dataset(MNIST, rgb, labels.astype(np.int64), split, names, {"scale": 1 / 255})


def _parse_float(token, lineno, column):
    if token.strip() == "?":
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: cannot parse {column}={token!r}") from None


def _read_auto_mpg_rows(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), "")
    rows = []
    if "," in first:
        reader = csv.reader(io.StringIO(text))
        header = [h.strip().lower().replace(" ", "_") for h in next(reader)]
        header = ["model_year" if h in ("year", "model_year") else h for h in header]
        missing = [c for c in _RAW_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"line 1: CSV header lacks columns {missing}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"line {lineno}: expected {len(header)} fields")
            d = dict(zip(header, rec))
            rows.append([_parse_float(d[c], lineno, c) for c in _RAW_COLUMNS])
    else:
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            numeric = line.split('"')[0].split()
            if len(numeric) != len(_RAW_COLUMNS):
                raise DataFormatError(
                    f"line {lineno}: expected {len(_RAW_COLUMNS)} numeric fields, "
                    f"got {len(numeric)}"
                )
            rows.append([_parse_float(t, lineno, c) for t, c in zip(numeric, _RAW_COLUMNS)])
    return np.array(rows, dtype=np.float64).reshape(-1, len(_RAW_COLUMNS))


def load_auto_mpg(path, seed=0, test_fraction=0.2):
    """Return ``(train, test)`` Auto MPG datasets with 9 features each."""
    raw = _read_auto_mpg_rows(path)
    keep = ~np.isnan(raw[:, 0]) & ~np.isnan(raw[:, 3])
    raw = raw[keep]
    if np.isnan(raw).any():
        raise DataFormatError("missing values outside the horsepower column")
    origin = raw[:, 7].astype(int)
    if not set(origin) <= {1, 2, 3}:
        raise DataFormatError(f"origin codes must be 1, 2 or 3, got {sorted(set(origin))}")
    onehot = np.eye(3)[origin - 1]
    X = np.hstack([raw[:, 1:7], onehot])
    y = raw[:, 0]
    if X.shape[1] != len(AUTO_MPG_FEATURES):
        raise AssertionError(f"Auto MPG preprocessing produced {X.shape[1]} features, not 9")

    order = np.random.default_rng(seed).permutation(len(X))
    n_test = int(round(test_fraction * len(X)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    mean = X[train_idx, :6].mean(axis=0)
    std = X[train_idx, :6].std(axis=0)
    std[std == 0] = 1.0  # a constant column stays constant (at zero)
    X = X.copy()
    X[:, :6] = (X[:, :6] - mean) / std
    norm = {
        "feature_mean": mean, "feature_std": std,
        "target_mean": float(y[train_idx].mean()), "target_std": float(y[train_idx].std()),
        # Occlusion fill: training mean of each processed feature.
        "fill": X[train_idx].mean(axis=0),
    }
    make = lambda idx, split: Dataset(AUTO_MPG, X[idx], y[idx], split,
                                      list(AUTO_MPG_FEATURES), norm)
    return make(train_idx, "train"), make(test_idx, "test")


@dataclass(frozen=True)
class SampleSelection:
    dataset: str
    seed: int
    count: int
    indices: tuple


def select_samples(dataset, seed, count):
    if count < 0 or count > len(dataset):
        raise ValueError(f"cannot select {count} samples from {len(dataset)} rows")
    idx = np.random.default_rng(seed).choice(len(dataset), size=count, replace=False)
    return SampleSelection(dataset.name, seed, count, tuple(int(i) for i in idx))
