#!/usr/bin/env python3
"""Rebuild the bundled MNIST subset as IDX files.

Source: the `mnist` npm package (https://github.com/cazala/mnist), which ships
10,000 MNIST digits as per-class JSON arrays of 784 floats in [0, 1] rounded to
three decimals. Pixels are mapped back to bytes with round(v * 255) and samples
are interleaved with a fixed permutation so the file is not sorted by class.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import os
import struct
import sys

import numpy as np


def main(src: str, dst: str) -> None:
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        rows = flat.reshape(-1, 784)
        images.append(np.clip(np.rint(rows * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(len(rows), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(20190101).permutation(len(labels))
    images, labels = images[perm], labels[perm]

    os.makedirs(dst, exist_ok=True)
    n = len(labels)
    with gzip.GzipFile(os.path.join(dst, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(os.path.join(dst, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} samples; per-class counts {np.bincount(labels).tolist()}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
