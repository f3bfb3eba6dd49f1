#!/usr/bin/env python3
"""Builds a small MNIST corpus in IDX format from the npm `mnist` package.

The package ships 10,000 digits as JSON (784 floats in [0, 1] per image,
grouped by class). All of them are written, shuffled with a fixed seed, as
train-images-idx3-ubyte / train-labels-idx1-ubyte. The desk preset then
carves its 8,000 / 2,000 split out of that file.

    npm pack mnist@1.1.0
    python3 tools/prepare_mnist_subset.py mnist-1.1.0.tgz data/mnist_subset
"""

import argparse
import hashlib
import io
import json
import random
import struct
import sys
import tarfile
from pathlib import Path


def read_digits(source: Path):
    """Yields (label, pixel list) for every digit in a package dir or tarball."""
    if source.is_dir():
        root = source / "src" / "digits"
        if not root.is_dir():
            root = source / "package" / "src" / "digits"
        for label in range(10):
            with open(root / f"{label}.json") as f:
                yield label, json.load(f)["data"]
        return
    with tarfile.open(source) as tar:
        for label in range(10):
            member = tar.getmember(f"package/src/digits/{label}.json")
            yield label, json.load(io.TextIOWrapper(tar.extractfile(member)))["data"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path, help="mnist-1.1.0.tgz or its unpacked directory")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=20190101)
    args = ap.parse_args()

    samples = []
    for label, flat in read_digits(args.source):
        if len(flat) % 784:
            print(f"digit {label}: {len(flat)} values is not a multiple of 784", file=sys.stderr)
            return 3
        for k in range(0, len(flat), 784):
            pixels = bytes(max(0, min(255, round(v * 255))) for v in flat[k:k + 784])
            samples.append((label, pixels))
    random.Random(args.seed).shuffle(samples)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    images = args.out_dir / "train-images-idx3-ubyte"
    labels = args.out_dir / "train-labels-idx1-ubyte"
    with open(images, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for _, px in samples:
            f.write(px)
    with open(labels, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for label, _ in samples))

    for path in (images, labels):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{digest}  {path.name}")
    print(f"{len(samples)} images written to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
