"""Explanation and prediction robustness under attack."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bayes import _samples, bayes_relevances, posterior_predictive
from .errors import DegenerateInputError, ParameterError, ShapeError, ValidationError
from .lrp import ALL_UNITS, Heatmap, _check_layer, lrp_relevances, top_k_indices
from .nn import forward

MODES = ("averaged-heatmap", "expected-robustness")


@dataclass
class RobustnessRecord:
    point_id: int
    true_label: int
    clean_prediction: int
    adversarial_prediction: int
    softmax_robustness: float
    klrp: dict = field(default_factory=dict)
    # the Bayesian mode not selected as primary; equals klrp for one sample
    klrp_alt: dict = field(default_factory=dict)
    model_kind: str = "deterministic"
    sample_count: int = 1

    @property
    def attack_succeeded(self) -> bool:
        return self.clean_prediction != self.adversarial_prediction


def _values(hm):
    return hm.relevances if isinstance(hm, Heatmap) else np.asarray(hm, dtype=np.float64)


def klrp_batch(R_x, R_adv, k: int, ranking: str = "signed-descending") -> np.ndarray:
    """Row-wise top-k overlap fraction for stacked relevance arrays."""
    R_x = np.asarray(R_x, dtype=np.float64)
    R_adv = np.asarray(R_adv, dtype=np.float64)
    if R_x.shape != R_adv.shape:
        raise ShapeError(f"heatmap shapes differ: {R_x.shape} vs {R_adv.shape}")
    a = top_k_indices(R_x, k, ranking)
    b = top_k_indices(R_adv, k, ranking)
    mask_a = np.zeros(R_x.shape, dtype=bool)
    mask_b = np.zeros(R_x.shape, dtype=bool)
    np.put_along_axis(mask_a, a, True, axis=-1)
    np.put_along_axis(mask_b, b, True, axis=-1)
    return (mask_a & mask_b).sum(axis=-1) / k


def klrp_robustness(hm_x, hm_adv, k: int, ranking: str = "signed-descending") -> float:
    """Fraction of the k most relevant pixels shared by two heatmaps."""
    a, b = _values(hm_x), _values(hm_adv)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError("klrp_robustness compares two single heatmaps")
    return float(klrp_batch(a, b, k, ranking))


def _check_simplex(p, tol):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValidationError("probability vector is off the simplex")
    return p


def softmax_robustness(p, p_adv, tol: float = 1e-9):
    """``1 - max_c |p_c - p_adv_c|``; rows of a batch are scored separately."""
    p = _check_simplex(p, tol)
    q = _check_simplex(p_adv, tol)
    if p.shape != q.shape:
        raise ShapeError("probability vectors differ in length")
    r = np.clip(1.0 - np.max(np.abs(p - q), axis=-1), 0.0, 1.0)
    return float(r) if r.ndim == 0 else r


def bayes_klrp_batch(spec, ensemble, x, x_adv, ks, layer=None, mode="averaged-heatmap",
                     seed_class=None, eps=0.1, stabilizer="sign-matched",
                     ranking="signed-descending") -> dict:
    """Bayesian k-LRP robustness for every k in ``ks`` and every row of ``x``.

    ``seed_class=None`` seeds both clean and adversarial heatmaps with the
    posterior predictive class of the clean input.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}")
    samples = _samples(ensemble)
    layer = _check_layer(spec, layer)
    if seed_class is None:
        seed_class = (np.argmax(posterior_predictive(spec, samples, x), axis=-1)
                      if layer == spec.depth - 1 else ALL_UNITS)
    keep = mode == "expected-robustness"
    hx = bayes_relevances(spec, samples, x, layer, seed_class, eps, stabilizer, keep_samples=keep)
    ha = bayes_relevances(spec, samples, x_adv, layer, seed_class, eps, stabilizer, keep_samples=keep)
    out = {}
    for k in ks:
        if keep:
            out[k] = np.mean(klrp_batch(hx[1], ha[1], k, ranking), axis=0)
        else:
            out[k] = klrp_batch(hx, ha, k, ranking)
    return out


def bayes_klrp_robustness(spec, ensemble, x, x_adv, k: int, layer=None, mode="averaged-heatmap",
                          **kwargs) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("bayes_klrp_robustness takes single inputs; use bayes_klrp_batch")
    return float(bayes_klrp_batch(spec, ensemble, x, x_adv, [k], layer, mode, **kwargs)[k])


def pearson_correlation(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ShapeError("pearson_correlation needs two equal-length sequences")
    if len(xs) < 2:
        raise ParameterError("need at least two pairs")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance in correlation input")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def klrp_grid(spec, ensemble, x, x_adv, ks, layers, seed_class=None, adv_seed_class=None,
              eps=0.1, stabilizer="sign-matched", ranking="signed-descending") -> dict:
    """Both Bayesian modes on a (layer, k) grid in one pass over the samples.

    Returns ``{(layer, k): (averaged_heatmap, expected_robustness)}`` with
    one value per row of ``x``.  Per-sample heatmaps are never stored, so
    memory stays at one mean heatmap per layer.  ``adv_seed_class`` defaults
    to ``seed_class``; for inner layers both are ignored.
    """
    samples = _samples(ensemble)
    last = spec.depth - 1
    if seed_class is None:
        seed_class = np.argmax(posterior_predictive(spec, samples, x), axis=-1)
    if adv_seed_class is None:
        adv_seed_class = seed_class
    layers = [_check_layer(spec, l) for l in layers]
    sum_x = {l: 0.0 for l in layers}
    sum_a = {l: 0.0 for l in layers}
    expected = {(l, k): 0.0 for l in layers for k in ks}
    for w in samples:
        tx = forward(spec, w, x)
        ta = forward(spec, w, x_adv)
        for l in layers:
            cx = seed_class if l == last else ALL_UNITS
            ca = adv_seed_class if l == last else ALL_UNITS
            rx = lrp_relevances(spec, w, tx, l, cx, eps, stabilizer)
            ra = lrp_relevances(spec, w, ta, l, ca, eps, stabilizer)
            sum_x[l] = sum_x[l] + rx
            sum_a[l] = sum_a[l] + ra
            for k in ks:
                expected[l, k] = expected[l, k] + klrp_batch(rx, ra, k, ranking)
    n = len(samples)
    out = {}
    for l in layers:
        for k in ks:
            avg = klrp_batch(sum_x[l] / n, sum_a[l] / n, k, ranking)
            out[l, k] = (avg, expected[l, k] / n)
    return out
