#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

The package stores 10000 MNIST digits as pixel/255 values rounded to three
decimals; multiplying by 255 and rounding recovers the original bytes exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_json_to_idx.py package/src/digits data/mnist

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (8000 samples) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (2000 samples). The split is a
fixed-seed shuffle, so reruns produce identical files.
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_COUNT = 8000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(0, len(data), 784):
            pixels = [int(round(v * 255.0)) for v in data[i : i + 784]]
            assert all(0 <= p <= 255 for p in pixels)
            samples.append((pixels, digit))
    random.Random(20170831).shuffle(samples)
    train, test = samples[:TRAIN_COUNT], samples[TRAIN_COUNT:]
    write_images(dst / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(dst / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(dst / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(dst / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train and {len(test)} test samples to {dst}")


if __name__ == "__main__":
    main()
