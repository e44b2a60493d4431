#!/usr/bin/env python
"""Populate the data root with the benchmark datasets.

Tabular sets (iris, wine, breast-cancer diagnostic) are exported from
scikit-learn's bundled copies into the classic UCI column layouts that
``lehmernet.datasets`` expects, so no network is needed for them.  MNIST is
downloaded (with MD5 verification) unless the four IDX files already exist.

Usage:
    python scripts/fetch_datasets.py [--data-root DIR] [--mnist] [--tabular]

With no selection flags, both groups are fetched.
"""

import argparse
import hashlib
import os
import sys
import urllib.error
import urllib.request

import numpy as np
from sklearn.datasets import load_breast_cancer, load_iris, load_wine

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from lehmernet.datasets import (  # noqa: E402
    DATA_ROOT_ENV,
    SCHEMAS,
    TABULAR_FILES,
    Dataset,
    save_tabular_csv,
)

MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "http://yann.lecun.com/exdb/mnist/",
)

MNIST_MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}


def export_tabular(data_root):
    """Write iris.csv / wine.csv / wdbc.csv in their UCI layouts."""
    bundles = {
        "iris": load_iris(),
        "wine": load_wine(),
        "wbc": load_breast_cancer(),
    }
    # sklearn's breast-cancer targets are 0=malignant, 1=benign; our encoding
    # is lexicographic on the raw labels (B=0, M=1), so flip. sklearn's wine
    # classes 0/1/2 correspond to raw labels 1/2/3 in order, and iris classes
    # to the Iris-* names in order; both match the schema encodings directly.
    relabel = {"iris": None, "wine": None, "wbc": lambda y: 1 - y}
    for name, bundle in bundles.items():
        schema = SCHEMAS[name]
        labels = bundle.target.astype(np.int64)
        if relabel[name]:
            labels = relabel[name](labels)
        dataset = Dataset(
            name=name,
            features=bundle.data.astype(float),
            labels=labels,
            class_names=schema.class_names,
        )
        path = os.path.join(data_root, TABULAR_FILES[name])
        save_tabular_csv(dataset, path, schema)
        print(f"wrote {path} ({dataset.n_samples} rows, "
              f"{dataset.features.shape[1]} features)")


def _md5(path):
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_mnist(data_root):
    """Download and verify the four MNIST IDX files; returns True on success."""
    target = os.path.join(data_root, "mnist")
    os.makedirs(target, exist_ok=True)
    ok = True
    for filename, want_md5 in MNIST_MD5.items():
        path = os.path.join(target, filename)
        if os.path.exists(path) and _md5(path) == want_md5:
            print(f"{path} already present and verified")
            continue
        fetched = False
        for mirror in MNIST_MIRRORS:
            url = mirror + filename
            try:
                print(f"downloading {url} ...")
                urllib.request.urlretrieve(url, path)
            except (urllib.error.URLError, OSError) as exc:
                print(f"  failed: {exc}")
                continue
            if _md5(path) == want_md5:
                print(f"  ok, md5 verified: {path}")
                fetched = True
                break
            print(f"  md5 mismatch for {path}, trying next mirror")
            os.remove(path)
        if not fetched:
            ok = False
            print(f"could not fetch {filename} from any mirror", file=sys.stderr)
    return ok


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-root",
                        default=os.environ.get(DATA_ROOT_ENV, "data"))
    parser.add_argument("--tabular", action="store_true",
                        help="only export the tabular CSVs")
    parser.add_argument("--mnist", action="store_true",
                        help="only fetch MNIST")
    args = parser.parse_args(argv)
    both = not (args.tabular or args.mnist)

    os.makedirs(args.data_root, exist_ok=True)
    status = 0
    if args.tabular or both:
        export_tabular(args.data_root)
    if args.mnist or both:
        if not fetch_mnist(args.data_root):
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
