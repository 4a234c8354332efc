"""Binary checkpoints for a single weight vector or a posterior ensemble.

Layout (integers little-endian)::

    b"BSLB"  u32 version  u8 payload (0 weights, 1 ensemble)
    u32 class_count  u32 n_layers
    n_layers x (u32 input_width, u32 output_width, u8 has_bias, u8 activation)
    u32 len + utf-8 method     u32 len + utf-8 JSON metadata
    u64 sample_count
    sample_count x (u64 length, length x f64)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..bayes import PosteriorEnsemble
from ..errors import FormatError, TruncatedFileError
from ..nn import ACTIVATIONS, Layer, NetworkSpec

MAGIC = b"BSLB"
VERSION = 1


def _text(s: str) -> bytes:
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def save_checkpoint(path, spec: NetworkSpec, weights) -> None:
    """Write ``weights`` (a flat vector or a :class:`PosteriorEnsemble`)."""
    if isinstance(weights, PosteriorEnsemble):
        kind, samples, method, meta = 1, weights.samples, weights.method, weights.meta
    else:
        kind, samples, method, meta = 0, np.asarray(weights, dtype=np.float64)[None], "", {}
    out = [MAGIC, struct.pack("<IB", VERSION, kind), struct.pack("<II", spec.class_count, spec.depth)]
    for layer in spec.layers:
        out.append(struct.pack("<IIBB", layer.input_width, layer.output_width, layer.has_bias,
                               ACTIVATIONS.index(layer.activation)))
    out.append(_text(method))
    out.append(_text(json.dumps(meta, sort_keys=True, default=float)))
    out.append(struct.pack("<Q", len(samples)))
    for w in samples:
        out.append(struct.pack("<Q", w.size))
        out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise TruncatedFileError("checkpoint ends early")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode()


def load_checkpoint(path):
    """Return ``(spec, weights)``; ``weights`` mirrors what was saved."""
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"not a BSLB checkpoint (magic {magic!r})")
    version, kind = r.unpack("<IB")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    class_count, depth = r.unpack("<II")
    layers = []
    for _ in range(depth):
        i, o, bias, act = r.unpack("<IIBB")
        layers.append(Layer(i, o, bool(bias), ACTIVATIONS[act]))
    spec = NetworkSpec(tuple(layers), class_count)
    method = r.text()
    meta = json.loads(r.text())
    (count,) = r.unpack("<Q")
    samples = []
    for _ in range(count):
        (n,) = r.unpack("<Q")
        samples.append(np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64))
    if any(s.size != spec.n_params for s in samples):
        raise FormatError("stored weight length does not match the architecture")
    if kind == 0:
        return spec, samples[0]
    return spec, PosteriorEnsemble(np.array(samples), method, meta)
