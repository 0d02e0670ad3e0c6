#!/usr/bin/env python3
"""Build a 28x28 handwritten-digit corpus in IDX format.

Source images are the 8x8 UCI optical digits bundled with scikit-learn,
upscaled to 28x28 and expanded with small deterministic rotations and
shifts. Source digits are split into train/test pools *before*
augmentation so no source image leaks across the split.
"""
import argparse
import os
import struct

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def augment(img, rng):
    angle = rng.uniform(-15.0, 15.0)
    out = ndimage.rotate(img, angle, reshape=False, order=1, mode="constant")
    dy, dx = rng.integers(-2, 3, size=2)
    out = ndimage.shift(out, (dy, dx), order=0, mode="constant")
    return np.clip(out, 0.0, 1.0)


def build_pool(images, labels, count, rng):
    out_images = np.empty((count, 28, 28), dtype=np.float64)
    out_labels = np.empty(count, dtype=np.int64)
    n = len(images)
    for i in range(count):
        j = int(rng.integers(0, n))
        base = ndimage.zoom(images[j], 28 / 8, order=1)
        out_images[i] = augment(base, rng)
        out_labels[i] = labels[j]
    return np.rint(out_images * 255.0), out_labels


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--train-count", type=int, default=5000)
    parser.add_argument("--test-count", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    digits = load_digits()
    images = digits.images / 16.0  # source range is 0..16
    labels = digits.target

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(images))
    split = int(len(images) * 0.8)
    train_src, test_src = order[:split], order[split:]

    train_images, train_labels = build_pool(
        images[train_src], labels[train_src], args.train_count, rng)
    test_images, test_labels = build_pool(
        images[test_src], labels[test_src], args.test_count, rng)

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "train-images-idx3-ubyte"), train_images)
    write_idx_labels(os.path.join(args.out_dir, "train-labels-idx1-ubyte"), train_labels)
    write_idx_images(os.path.join(args.out_dir, "test-images-idx3-ubyte"), test_images)
    write_idx_labels(os.path.join(args.out_dir, "test-labels-idx1-ubyte"), test_labels)
    print(f"wrote {args.train_count} train / {args.test_count} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
