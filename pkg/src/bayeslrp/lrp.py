"""Epsilon-rule relevance propagation and first-order Taylor attribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivisionHazardError, LayerIndexError, ParameterError, ShapeError
from .nn import NetworkSpec, _check_input, _onehot, backward, forward

ALL_UNITS = "all-units"
STABILIZERS = ("sign-matched", "literal")
RANKINGS = ("signed-descending", "absolute-descending")


@dataclass
class Heatmap:
    relevances: np.ndarray
    seed_layer: int
    seed_class: int | str
    lrp_epsilon: float

    def __post_init__(self):
        self.relevances = np.asarray(self.relevances, dtype=np.float64)
        if not np.all(np.isfinite(self.relevances)):
            raise ParameterError("heatmap contains non-finite relevances")

    @property
    def size(self) -> int:
        return self.relevances.shape[-1]


@dataclass(frozen=True)
class TopKSet:
    indices: frozenset
    k: int
    P: int


def _denominator(z, eps, stabilizer):
    if stabilizer == "sign-matched":
        return z + eps * np.where(z >= 0, 1.0, -1.0)
    if stabilizer == "literal":
        return z + eps
    raise ParameterError(f"unknown stabilizer {stabilizer!r}")


def propagate(spec: NetworkSpec, w: np.ndarray, trace, relevance, layer: int,
              eps: float = 0.1, stabilizer: str = "sign-matched") -> np.ndarray:
    """Push relevance sitting on the output of ``layer`` down to the input.

    Bias contributions take part in each denominator but their share of
    relevance is dropped.  Units with an exactly zero denominator pass no
    relevance under the sign-matched rule; the literal rule refuses them.
    """
    params = spec.unflatten(w)
    R = np.asarray(relevance, dtype=np.float64)
    for l in range(layer, -1, -1):
        W, _ = params[l]
        z = trace.pre_activations[l]
        a = trace.layer_input(l)
        den = _denominator(z, eps, stabilizer)
        zero = den == 0
        if np.any(zero):
            if stabilizer == "literal":
                raise DivisionHazardError(l, int(np.argwhere(zero)[0][-1]))
            den = np.where(zero, 1.0, den)
            R = np.where(zero, 0.0, R)
        R = a * ((R / den) @ W.T)
    return R


def seed_relevance(spec: NetworkSpec, trace, layer: int, seed_class) -> np.ndarray:
    out = trace.post_activations[layer]
    if isinstance(seed_class, str):
        if seed_class != ALL_UNITS:
            raise ParameterError(f"unknown seed {seed_class!r}")
        return out.copy()
    if layer != spec.depth - 1:
        raise ParameterError("class seeding is only defined on the final (logit) layer")
    cls = np.broadcast_to(np.asarray(seed_class), out.shape[:-1])
    if np.any((cls < 0) | (cls >= spec.class_count)):
        raise ParameterError("seed class outside [0, class_count)")
    return out * _onehot(cls, spec.class_count)


def _check_layer(spec, layer):
    if layer is None:
        return spec.depth - 1
    if not -spec.depth <= layer < spec.depth:
        raise LayerIndexError(f"seed layer {layer} out of range for a {spec.depth}-layer network")
    return layer % spec.depth


def lrp_relevances(spec: NetworkSpec, w: np.ndarray, trace, layer: int | None = None,
                   seed_class=None, eps: float = 0.1, stabilizer: str = "sign-matched",
                   seed_scale: float = 1.0) -> np.ndarray:
    """Raw relevance array; batched when ``trace`` was computed on a batch.

    ``seed_class`` may be a class index, a per-row array of indices, or
    ``"all-units"``.  ``None`` picks the arg-max logit of each row on the
    final layer and all units on inner layers.
    """
    layer = _check_layer(spec, layer)
    if eps < 0:
        raise ParameterError("epsilon must be non-negative")
    if seed_class is None:
        seed_class = np.argmax(trace.logits, axis=-1) if layer == spec.depth - 1 else ALL_UNITS
    R = seed_relevance(spec, trace, layer, seed_class) * seed_scale
    return propagate(spec, w, trace, R, layer, eps, stabilizer)


def lrp_epsilon(spec: NetworkSpec, w: np.ndarray, trace, layer: int | None = None,
                seed_class=None, eps: float = 0.1, stabilizer: str = "sign-matched") -> Heatmap:
    """Heatmap of one input under one weight setting."""
    if trace.input.ndim != 1:
        raise ShapeError("lrp_epsilon takes the trace of a single input; use lrp_relevances for batches")
    layer = _check_layer(spec, layer)
    if seed_class is None:
        seed_class = int(np.argmax(trace.logits)) if layer == spec.depth - 1 else ALL_UNITS
    R = lrp_relevances(spec, w, trace, layer, seed_class, eps, stabilizer)
    return Heatmap(R, layer, seed_class, eps)


def explain(spec: NetworkSpec, w: np.ndarray, x, **kwargs) -> Heatmap:
    return lrp_epsilon(spec, w, forward(spec, w, x), **kwargs)


def _order(values: np.ndarray, ranking: str) -> np.ndarray:
    if ranking == "signed-descending":
        key = -values
    elif ranking == "absolute-descending":
        key = -np.abs(values)
    else:
        raise ParameterError(f"unknown ranking {ranking!r}")
    # stable sort: equal scores keep ascending pixel order
    return np.argsort(key, axis=-1, kind="stable")


def top_k_indices(values, k: int, ranking: str = "signed-descending") -> np.ndarray:
    """Top-k pixel indices per row, in rank order."""
    values = np.asarray(values, dtype=np.float64)
    P = values.shape[-1]
    if not 1 <= k <= P:
        raise ParameterError(f"k={k} must lie in [1, {P}]")
    return _order(values, ranking)[..., :k]


def top_k(hm: Heatmap | np.ndarray, k: int, ranking: str = "signed-descending") -> TopKSet:
    values = hm.relevances if isinstance(hm, Heatmap) else np.asarray(hm, dtype=np.float64)
    idx = top_k_indices(values, k, ranking)
    return TopKSet(frozenset(int(i) for i in idx), k, values.shape[-1])


@dataclass
class TaylorAttribution:
    per_pixel_terms: np.ndarray
    root_point: np.ndarray
    root_value: float
    residual: float


def taylor_attribution(spec: NetworkSpec, w: np.ndarray, x, root, seed_class=None) -> TaylorAttribution:
    """First-order expansion of a logit around ``root``.

    ``residual`` collects everything the linear terms and ``f(root)`` miss,
    so ``f(x) == terms.sum() + root_value + residual``.
    """
    x = _check_input(spec, x)
    root = _check_input(spec, root)
    if x.shape != root.shape or x.ndim != 1:
        raise ShapeError("x and root must be single inputs of equal shape")
    fx_all = forward(spec, w, x).logits
    cls = int(np.argmax(fx_all)) if seed_class is None else int(seed_class)
    trace = forward(spec, w, root)
    grad = backward(spec, w, trace, _onehot(cls, spec.class_count), need_weights=False)[1]
    terms = grad * (x - root)
    f_root = float(trace.logits[cls])
    residual = float(fx_all[cls]) - f_root - float(terms.sum())
    return TaylorAttribution(terms, root.copy(), f_root, residual)
