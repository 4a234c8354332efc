"""IDX container reader/writer (the MNIST distribution format).

Gzip-compressed files are detected by their magic bytes and read
transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError, TruncatedFileError
from ..nn import LabeledDataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, expect_magic: int) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFileError("file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError("truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise TruncatedFileError(f"IDX payload holds {len(raw) - header} bytes, header promises {count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, class_count: int = 10) -> LabeledDataset:
    """Images scaled to [0, 1] and flattened, paired with their labels."""
    images = parse_idx(_read_bytes(images_path), IMAGE_MAGIC)
    labels = parse_idx(_read_bytes(labels_path), LABEL_MAGIC)
    if len(images) != len(labels):
        raise ShapeError(f"{len(images)} images but {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return LabeledDataset(x, labels.astype(np.int64), class_count)


def write_idx(path, array: np.ndarray, compress: bool | None = None) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    payload = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    path.write_bytes(gzip.compress(payload, mtime=0) if compress else payload)


def find_split(data_dir, split: str) -> tuple[Path, Path]:
    """Locate the standard ``train``/``t10k`` file pair, compressed or not."""
    prefix = "train" if split == "train" else "t10k"
    root = Path(data_dir)
    pair = []
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        for name in (f"{prefix}-{kind}", f"{prefix}-{kind}.gz"):
            if (root / name).exists():
                pair.append(root / name)
                break
        else:
            raise FileNotFoundError(f"no {prefix}-{kind}[.gz] under {root}")
    return pair[0], pair[1]
