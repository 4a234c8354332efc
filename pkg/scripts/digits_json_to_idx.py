"""Convert the per-digit JSON files of the ``mnist`` npm package to IDX.

The package ships 10000 MNIST digits as ``src/digits/<d>.json`` with
``{"data": [...]}`` holding 784 grey levels in [0, 1] per image, rounded to
three decimals.  Grey levels are mapped back to bytes, classes are
interleaved with a fixed shuffle, and a class-balanced test split is held
out.

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/digits_json_to_idx.py package/src/digits data/mnist
"""

import argparse
import json
from pathlib import Path

import numpy as np

from bayeslrp.harness.idx import write_idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    for digit in range(10):
        values = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        images = np.rint(values.reshape(-1, 28, 28) * 255).clip(0, 255).astype(np.uint8)
        images = images[rng.permutation(len(images))]
        n_test = args.test_per_class
        test_x.append(images[:n_test])
        train_x.append(images[n_test:])
        test_y.append(np.full(n_test, digit))
        train_y.append(np.full(len(images) - n_test, digit))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, xs, ys in (("train", train_x, train_y), ("t10k", test_x, test_y)):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        write_idx(args.out_dir / f"{prefix}-images-idx3-ubyte.gz", x[order])
        write_idx(args.out_dir / f"{prefix}-labels-idx1-ubyte.gz", y[order].astype(np.uint8))
        print(f"{prefix}: {len(y)} images")


if __name__ == "__main__":
    main()
