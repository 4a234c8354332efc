"""Fully connected ReLU networks on a flat float64 parameter vector.

Weights of a layer are stored row-major with shape ``(input_width,
output_width)`` followed by the bias, so a layer computes ``a @ W + b``.
All functions accept a single input of shape ``(d,)`` or a batch of shape
``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError
from .rng import substream

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class Layer:
    input_width: int
    output_width: int
    has_bias: bool = True
    activation: str = "relu"

    @property
    def size(self) -> int:
        return self.input_width * self.output_width + (self.output_width if self.has_bias else 0)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]
    class_count: int = 10

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ParameterError("a network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.input_width < 1 or layer.output_width < 1:
                raise ParameterError(f"layer {i}: widths must be positive")
            if layer.activation not in ACTIVATIONS:
                raise ParameterError(f"layer {i}: unknown activation {layer.activation!r}")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.output_width != b.input_width:
                raise ParameterError(
                    f"layer {i} outputs {a.output_width} units but layer {i + 1} expects {b.input_width}"
                )
        if self.layers[-1].activation != "identity":
            raise ParameterError("the final layer must produce identity (pre-softmax) logits")
        if self.layers[-1].output_width != self.class_count:
            raise ParameterError("final layer width must equal class_count")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_width

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return sum(layer.size for layer in self.layers)

    def offsets(self) -> list[int]:
        out = [0]
        for layer in self.layers:
            out.append(out[-1] + layer.size)
        return out

    def unflatten(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray | None]]:
        """Per-layer ``(W, b)`` views into ``w``; ``b`` is None for bias-free layers."""
        w = np.asarray(w)
        if w.shape != (self.n_params,):
            raise ShapeError(f"weight vector has shape {w.shape}, expected ({self.n_params},)")
        views = []
        pos = 0
        for layer in self.layers:
            n = layer.input_width * layer.output_width
            W = w[pos:pos + n].reshape(layer.input_width, layer.output_width)
            pos += n
            b = None
            if layer.has_bias:
                b = w[pos:pos + layer.output_width]
                pos += layer.output_width
            views.append((W, b))
        return views

    def flatten(self, params: Sequence[tuple[np.ndarray, np.ndarray | None]]) -> np.ndarray:
        parts = []
        for layer, (W, b) in zip(self.layers, params):
            parts.append(np.asarray(W, dtype=np.float64).reshape(-1))
            if layer.has_bias:
                parts.append(np.asarray(b, dtype=np.float64).reshape(-1))
        w = np.concatenate(parts) if parts else np.zeros(0)
        if w.shape != (self.n_params,):
            raise ShapeError("parameter list does not match the architecture")
        return w


def mlp(input_dim: int, hidden: Sequence[int], class_count: int, bias: bool = True) -> NetworkSpec:
    """ReLU multilayer perceptron with identity logits."""
    widths = [input_dim, *hidden, class_count]
    layers = [
        Layer(widths[i], widths[i + 1], bias, "relu" if i < len(widths) - 2 else "identity")
        for i in range(len(widths) - 1)
    ]
    return NetworkSpec(tuple(layers), class_count)


def init_weights(spec: NetworkSpec, seed: int | np.random.Generator) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases included."""
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "init")
    parts = []
    for layer in spec.layers:
        bound = 1.0 / np.sqrt(layer.input_width)
        parts.append(rng.uniform(-bound, bound, size=layer.input_width * layer.output_width))
        if layer.has_bias:
            parts.append(rng.uniform(-bound, bound, size=layer.output_width))
    return np.concatenate(parts)


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int = 10

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            self.inputs = self.inputs.reshape(len(self.inputs), -1)
        if len(self.inputs) != len(self.labels):
            raise ShapeError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ParameterError("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.class_count)


@dataclass
class ActivationTrace:
    input: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    post_activations: list[np.ndarray] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.post_activations[-1]

    def layer_input(self, l: int) -> np.ndarray:
        return self.input if l == 0 else self.post_activations[l - 1]


def _check_input(spec: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.input_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects trailing dimension {spec.input_dim}")
    return x


def forward(spec: NetworkSpec, w: np.ndarray, x) -> ActivationTrace:
    x = _check_input(spec, x)
    trace = ActivationTrace(input=x)
    a = x
    for layer, (W, b) in zip(spec.layers, spec.unflatten(w)):
        z = a @ W
        if b is not None:
            z = z + b
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        trace.pre_activations.append(z)
        trace.post_activations.append(a)
    return trace


def logits(spec: NetworkSpec, w: np.ndarray, x) -> np.ndarray:
    return forward(spec, w, x).logits


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict_softmax(spec: NetworkSpec, w: np.ndarray, x) -> np.ndarray:
    return softmax(logits(spec, w, x))


def predict(spec: NetworkSpec, w: np.ndarray, x) -> np.ndarray:
    return np.argmax(logits(spec, w, x), axis=-1)


def backward(spec: NetworkSpec, w: np.ndarray, trace: ActivationTrace, dlogits,
             need_weights: bool = True) -> tuple[np.ndarray | None, np.ndarray]:
    """Reverse-mode pass for a given cotangent on the logits.

    Returns ``(grad_w, grad_x)``.  For a batch the weight gradient is summed
    over examples while the input gradient keeps one row per example.
    """
    params = spec.unflatten(w)
    delta = np.asarray(dlogits, dtype=np.float64)
    batched = delta.ndim == 2
    grads = [None] * spec.depth
    for l in range(spec.depth - 1, -1, -1):
        layer = spec.layers[l]
        W, b = params[l]
        if layer.activation == "relu":
            delta = delta * (trace.pre_activations[l] > 0)
        if need_weights:
            a_in = trace.layer_input(l)
            gW = a_in.T @ delta if batched else np.outer(a_in, delta)
            gb = (delta.sum(axis=0) if batched else delta) if b is not None else None
            grads[l] = (gW, gb)
        delta = delta @ W.T
    grad_w = spec.flatten(grads) if need_weights else None
    return grad_w, delta


def _onehot(y, n):
    y = np.asarray(y)
    out = np.zeros(y.shape + (n,))
    np.put_along_axis(out, y[..., None], 1.0, axis=-1)
    return out


def cross_entropy(spec: NetworkSpec, w: np.ndarray, x, y) -> float | np.ndarray:
    lp = log_softmax(logits(spec, w, x))
    y = np.asarray(y)
    return -np.take_along_axis(lp, y[..., None], axis=-1)[..., 0]


def loss_and_grads(spec: NetworkSpec, w: np.ndarray, x, y, need_weights=True, need_input=True):
    """Summed cross-entropy with its weight and input gradients."""
    trace = forward(spec, w, x)
    z = trace.logits
    lp = log_softmax(z)
    y = np.asarray(y)
    loss = -np.take_along_axis(lp, y[..., None], axis=-1)[..., 0]
    dz = np.exp(lp) - _onehot(y, spec.class_count)
    gw, gx = backward(spec, w, trace, dz, need_weights=need_weights)
    return float(np.sum(loss)), gw, (gx if need_input else None)


def grad_loss_weights(spec: NetworkSpec, w: np.ndarray, x, y) -> np.ndarray:
    return loss_and_grads(spec, w, x, y, need_input=False)[1]


def grad_loss_input(spec: NetworkSpec, w: np.ndarray, x, y) -> np.ndarray:
    return loss_and_grads(spec, w, x, y, need_weights=False)[2]


def grad_logit_input(spec: NetworkSpec, w: np.ndarray, x, cls) -> np.ndarray:
    """Input gradient of the pre-softmax logit ``cls`` (scalar or per-row)."""
    trace = forward(spec, w, x)
    dz = _onehot(np.broadcast_to(cls, trace.logits.shape[:-1]), spec.class_count)
    return backward(spec, w, trace, dz, need_weights=False)[1]


def accuracy(spec: NetworkSpec, w: np.ndarray, data: LabeledDataset) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(predict(spec, w, data.inputs) == data.labels))


@dataclass
class SGDConfig:
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0


def train_sgd(spec: NetworkSpec, data: LabeledDataset, hyper: SGDConfig,
              init: np.ndarray | None = None) -> np.ndarray:
    """Minibatch SGD on the mean cross-entropy.

    Initialization and shuffling draw from independent named streams of
    ``hyper.seed`` so that two runs with the same seed agree bit for bit.
    """
    if len(data) == 0:
        raise ParameterError("cannot train on an empty dataset")
    if data.dim != spec.input_dim:
        raise ShapeError("dataset dimension does not match the network input")
    w = init_weights(spec, hyper.seed) if init is None else np.array(init, dtype=np.float64)
    rng = substream(hyper.seed, "shuffle")
    n = len(data)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            # overflow surfaces as a divergence error below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, _ = loss_and_grads(spec, w, data.inputs[idx], data.labels[idx], need_input=False)
                total += loss
                if hyper.learning_rate:
                    w -= hyper.learning_rate * gw / len(idx)
        if not np.isfinite(total) or not np.all(np.isfinite(w)):
            raise DivergenceError(f"training diverged in epoch {epoch}", epoch=epoch)
    return w
