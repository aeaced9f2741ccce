#!/usr/bin/env python3
"""Convert the 10k MNIST digits bundled with the npm `mnist` package to IDX.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/digits_to_idx.py package/src/digits data/

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (first 80% after a
seeded shuffle) and t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte.
"""
import argparse
import json
import pathlib
import struct

import numpy as np


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train-fraction", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        data = json.loads((pathlib.Path(args.digits_dir) / f"{digit}.json").read_text())["data"]
        pix = np.asarray(data, dtype=np.float64).reshape(-1, 784)
        images.append(np.rint(pix * 255.0))
        labels.append(np.full(len(pix), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(images))
    images, labels = images[order], labels[order]

    n_train = int(round(args.train_fraction * len(images)))
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", images[:n_train])
    write_labels(out / "train-labels-idx1-ubyte", labels[:n_train])
    write_images(out / "t10k-images-idx3-ubyte", images[n_train:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[n_train:])
    print(f"{n_train} train / {len(images) - n_train} test images written to {out}")


if __name__ == "__main__":
    main()
