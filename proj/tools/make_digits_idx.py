#!/usr/bin/env python3
"""Build the desk-scale digits subset (2,000 train / 1,000 test) as IDX files.

Source: the 5,000-sample MNIST extract shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 images per digit, 28x28, 0..255).

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 -m zipfile -e /tmp/mlx/mlxtend-*.whl /tmp/mlx/ex
    python3 tools/make_digits_idx.py /tmp/mlx/ex/mlxtend/data/data/mnist_5k.csv.gz data/digits
"""
import argparse
import gzip
import pathlib
import struct

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("out")
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20190501)
    args = ap.parse_args()

    with gzip.open(args.csv, "rt") as f:
        table = np.loadtxt(f, delimiter=",")
    pixels = table[:, :-1].reshape(-1, 28, 28).round().clip(0, 255)
    labels = table[:, -1].astype(int)

    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train_idx.extend(idx[: args.train_per_class])
        test_idx.extend(idx[args.train_per_class : args.train_per_class + args.test_per_class])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte", pixels[train_idx])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[train_idx])
    write_idx_images(out / "test-images-idx3-ubyte", pixels[test_idx])
    write_idx_labels(out / "test-labels-idx1-ubyte", labels[test_idx])
    print(f"train={len(train_idx)} test={len(test_idx)} -> {out}")


if __name__ == "__main__":
    main()
