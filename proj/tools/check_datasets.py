#!/usr/bin/env python3
"""Checks a data directory against the official dataset distributions.

Raw files are checked by size and header. Archives, when present next to
them, are checked by MD5. Nothing is downloaded.

    python3 tools/check_datasets.py --dataset mnist data/mnist
    python3 tools/check_datasets.py --dataset cifar10 data/cifar-10-batches-bin
"""

import argparse
import hashlib
import struct
import sys
from pathlib import Path

# file name -> (byte size, header magic or None, record count)
RAW = {
    "mnist": {
        "train-images-idx3-ubyte": (47_040_016, 0x803, 60_000),
        "train-labels-idx1-ubyte": (60_008, 0x801, 60_000),
        "t10k-images-idx3-ubyte": (7_840_016, 0x803, 10_000),
        "t10k-labels-idx1-ubyte": (10_008, 0x801, 10_000),
    },
    "cifar10": {
        **{f"data_batch_{i}.bin": (30_730_000, None, 10_000) for i in range(1, 6)},
        "test_batch.bin": (30_730_000, None, 10_000),
    },
}
RAW["fashion_mnist"] = RAW["mnist"]

ARCHIVE_MD5 = {
    "mnist": {
        "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
        "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
        "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
        "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
    },
    "fashion_mnist": {
        "train-images-idx3-ubyte.gz": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
        "train-labels-idx1-ubyte.gz": "25c81989df183df01b3e8a0aad5dffbe",
        "t10k-images-idx3-ubyte.gz": "bef4ecab320f06d8554ea6380940ec79",
        "t10k-labels-idx1-ubyte.gz": "bb300cfdad3c16e7a12a480ee83cd310",
    },
    "cifar10": {
        "cifar-10-binary.tar.gz": "c32a1d4ab5d03f1284b67883e8d87530",
    },
}


def md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", choices=sorted(RAW), required=True)
    ap.add_argument("directory", type=Path)
    args = ap.parse_args()

    bad = 0
    for name, (size, magic, count) in RAW[args.dataset].items():
        path = args.directory / name
        if not path.exists():
            print(f"MISSING  {name}")
            bad += 1
            continue
        actual = path.stat().st_size
        status = "ok"
        if actual != size:
            status = f"size {actual}, expected {size}"
        elif magic is not None:
            with open(path, "rb") as f:
                m, n = struct.unpack(">II", f.read(8))
            if (m, n) != (magic, count):
                status = f"header ({m:#x}, {n}), expected ({magic:#x}, {count})"
        print(f"{'OK' if status == 'ok' else 'BAD':8} {name}  {count} records  {status}")
        bad += status != "ok"

    for name, digest in ARCHIVE_MD5[args.dataset].items():
        path = args.directory / name
        if path.exists():
            actual = md5(path)
            ok = actual == digest
            print(f"{'OK' if ok else 'BAD':8} {name}  md5 {actual}")
            bad += not ok
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
