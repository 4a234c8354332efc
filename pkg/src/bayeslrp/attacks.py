"""FGSM and PGD against a single network or a posterior ensemble."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, ParameterError
from .nn import NetworkSpec, _check_input, grad_loss_input, logits, softmax
from .rng import substream


@dataclass(frozen=True)
class AttackSpec:
    method: str = "fgsm"
    delta: float = 0.25
    eps: float = 0.25
    alpha: float = 0.05
    steps: int = 10
    random_init: bool = True
    clip_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("fgsm", "pgd"):
            raise ParameterError(f"unknown attack method {self.method!r}")
        if self.delta < 0 or self.eps < 0:
            raise ParameterError("attack strengths must be non-negative")
        if self.steps < 1:
            raise ParameterError("PGD needs at least one step")
        lo, hi = self.clip_range
        if not lo < hi:
            raise ParameterError("clip_range must satisfy low < high")
        # alpha == eps is accepted so that a single PGD step can coincide with FGSM
        if self.method == "pgd" and self.alpha > self.eps:
            raise ParameterError("PGD step size alpha must not exceed eps")

    def with_(self, **changes) -> "AttackSpec":
        return replace(self, **changes)


def _checked(g):
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite input gradient")
    return g


def _labels(spec, weights, x, y):
    if y is not None:
        return np.asarray(y)
    probs = np.mean([softmax(logits(spec, w, x)) for w in weights], axis=0)
    return np.argmax(probs, axis=-1)


def _ensemble_grad(spec, weights, x, y):
    # sum rather than mean: only the sign is used downstream
    g = np.zeros_like(x)
    for w in weights:
        g += grad_loss_input(spec, w, x, y)
    return _checked(g)


def _as_samples(ensemble):
    samples = getattr(ensemble, "samples", ensemble)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None]
    if len(samples) == 0:
        raise ParameterError("empty ensemble")
    return samples


def _fgsm(spec, weights, x, y, attack):
    x = _check_input(spec, x)
    y = _labels(spec, weights, x, y)
    g = _ensemble_grad(spec, weights, x, y)
    lo, hi = attack.clip_range
    return np.clip(x + attack.delta * np.sign(g), lo, hi)


def _pgd(spec, weights, x, y, attack, trajectory=None):
    x = _check_input(spec, x)
    y = _labels(spec, weights, x, y)
    lo, hi = attack.clip_range
    eps = attack.eps
    x_t = x.copy()
    if attack.random_init and eps > 0:
        rng = substream(attack.seed, "attack-init")
        x_t = np.clip(x + rng.uniform(-eps, eps, size=x.shape), lo, hi)
    if trajectory is not None:
        trajectory.append(x_t.copy())
    for _ in range(attack.steps):
        g = _ensemble_grad(spec, weights, x_t, y)
        x_t = x_t + attack.alpha * np.sign(g)
        x_t = np.clip(np.clip(x_t, x - eps, x + eps), lo, hi)
        if trajectory is not None:
            trajectory.append(x_t.copy())
    return x_t


def fgsm(spec: NetworkSpec, w: np.ndarray, x, y=None, attack: AttackSpec = AttackSpec()) -> np.ndarray:
    """``clip(x + delta * sign(grad_x loss))`` with ``sign(0) = 0``.

    ``y`` defaults to the model's own prediction on the clean input.
    """
    return _fgsm(spec, [w], x, y, attack)


def pgd(spec: NetworkSpec, w: np.ndarray, x, y=None, attack: AttackSpec = AttackSpec(method="pgd"),
        trajectory: list | None = None) -> np.ndarray:
    """Projected sign-gradient ascent inside the eps L-infinity ball.

    Pass a list as ``trajectory`` to collect every iterate, the random start
    included.
    """
    return _pgd(spec, [w], x, y, attack, trajectory)


def bayes_fgsm(spec: NetworkSpec, ensemble, x, y=None, attack: AttackSpec = AttackSpec()) -> np.ndarray:
    """FGSM along the sign of the summed per-sample input gradients."""
    return _fgsm(spec, _as_samples(ensemble), x, y, attack)


def bayes_pgd(spec: NetworkSpec, ensemble, x, y=None, attack: AttackSpec = AttackSpec(method="pgd"),
              trajectory: list | None = None) -> np.ndarray:
    return _pgd(spec, _as_samples(ensemble), x, y, attack, trajectory)


def attack_model(spec: NetworkSpec, ensemble, x, y=None, attack: AttackSpec = AttackSpec()) -> np.ndarray:
    """Dispatch on ``attack.method`` for any ensemble size."""
    samples = _as_samples(ensemble)
    if attack.method == "fgsm":
        return _fgsm(spec, samples, x, y, attack)
    return _pgd(spec, samples, x, y, attack)
