"""Build gzipped IDX files from the 5000-sample MNIST subset bundled in mlxtend.

The sandbox cannot reach the usual MNIST mirrors, but PyPI is reachable and the
mlxtend wheel ships ``mnist_5k.csv.gz`` (rows of 784 pixels followed by the label).

    python tools/make_mnist_subset.py path/to/mlxtend-*.whl data/mnist
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

N_TRAIN = 4000


def main(wheel, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    order = np.random.default_rng(20240607).permutation(len(labels))
    pixels, labels = pixels[order], labels[order]

    for name, sl in (("train", slice(0, N_TRAIN)), ("t10k", slice(N_TRAIN, None))):
        img, lab = pixels[sl], labels[sl]
        with gzip.GzipFile(out / f"{name}-images-idx3-ubyte.gz", "wb", mtime=0) as fh:
            fh.write(struct.pack(">IIII", 0x803, len(img), 28, 28))
            fh.write(img.tobytes())
        with gzip.GzipFile(out / f"{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as fh:
            fh.write(struct.pack(">II", 0x801, len(lab)))
            fh.write(lab.tobytes())
        print(name, len(lab), np.bincount(lab, minlength=10))


if __name__ == "__main__":
    main(*sys.argv[1:3])
