"""Fetch the benchmark datasets and write them in their canonical raw formats.

The sandbox this project was built in only reaches the package registries, so
both datasets come from packages that bundle them:

* MNIST: the ``mnist`` npm package ships 10000 digits as JSON arrays of
  ``byte / 255`` rounded to 3 decimals; ``round(v * 255)`` recovers the bytes
  exactly. They are shuffled with a fixed seed and written as gzipped IDX
  files (8000 train / 2000 test).
* Auto MPG: the ``vega_datasets`` wheel ships ``cars.json`` (406 rows). Rows
  without mpg are dropped (they are not part of ``auto-mpg.data``) and the
  rest are written in the UCI whitespace layout with ``?`` for missing
  horsepower, giving the usual 398 rows.

Usage: python scripts/prepare_data.py [--out data]
"""

import argparse
import gzip
import io
import json
import struct
import tarfile
import urllib.request
import zipfile
from pathlib import Path

import numpy as np

NPM_MNIST = "https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz"
VEGA_WHEEL = (
    "https://files.pythonhosted.org/packages/e6/9f/"
    "ca52771fe972e0dcc5167fedb609940e01516066938ff2ee28b273ae4f29/"
    "vega_datasets-0.9.0-py3-none-any.whl"
)
ORIGIN_CODE = {"USA": 1, "Europe": 2, "Japan": 3}


def _get(url):
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with gzip.open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as fh:
        fh.write(struct.pack(">II", 2049, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def prepare_mnist(out, seed=0, n_test=2000):
    tar = tarfile.open(fileobj=io.BytesIO(_get(NPM_MNIST)), mode="r:gz")
    images, labels = [], []
    for digit in range(10):
        raw = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
        arr = np.rint(np.asarray(raw, dtype=np.float64) * 255).reshape(-1, 28, 28)
        images.append(arr)
        labels.append(np.full(len(arr), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(seed).permutation(len(labels))
    images, labels = images[order], labels[order]
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte.gz", images[n_test:])
    write_idx_labels(out / "train-labels-idx1-ubyte.gz", labels[n_test:])
    write_idx_images(out / "t10k-images-idx3-ubyte.gz", images[:n_test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte.gz", labels[:n_test])
    print(f"mnist: {len(labels) - n_test} train / {n_test} test -> {out}")


def prepare_auto_mpg(path):
    wheel = zipfile.ZipFile(io.BytesIO(_get(VEGA_WHEEL)))
    rows = json.loads(wheel.read("vega_datasets/_data/cars.json"))
    lines = []
    for r in rows:
        if r["Miles_per_Gallon"] is None:
            continue
        hp = "?" if r["Horsepower"] is None else f"{float(r['Horsepower']):.1f}"
        lines.append(
            f"{float(r['Miles_per_Gallon']):<7.1f}{r['Cylinders']:<4d}"
            f"{float(r['Displacement']):<11.1f}{hp:<11}"
            f"{float(r['Weight_in_lbs']):<11.1f}{float(r['Acceleration']):<11.1f}"
            f"{int(r['Year'][2:4]):<3d}{ORIGIN_CODE[r['Origin']]}\t\"{r['Name']}\""
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    print(f"auto-mpg: {len(lines)} rows -> {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data", type=Path)
    args = parser.parse_args()
    prepare_mnist(args.out / "mnist")
    prepare_auto_mpg(args.out / "auto-mpg.data")


if __name__ == "__main__":
    main()
