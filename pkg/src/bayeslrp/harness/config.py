"""Experiment configuration in a line-oriented ``key = value`` format.

Blank lines and ``#`` comments are ignored.  Keys are the field names of
:class:`ExperimentConfig` (or :class:`GeometryConfig`); sequences are
comma-separated; booleans accept true/false/yes/no/1/0; an empty value on
an optional field means "use the default rule".
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from ..attacks import AttackSpec
from ..bayes import GaussianPrior, HMCConfig, VIConfig
from ..errors import ConfigError, ParameterError
from ..lrp import RANKINGS, STABILIZERS
from ..metrics import MODES
from ..nn import SGDConfig, mlp

DATASETS = ("mnist", "fashion-mnist", "synthetic-manifold")
INFERENCE = ("deterministic", "hmc", "vi")


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    data_dir: str = "data/mnist"
    train_size: int = 5000
    test_size: int = 500
    hidden: tuple[int, ...] = (128, 128)

    sgd_learning_rate: float = 0.05
    sgd_epochs: int = 20
    sgd_batch_size: int = 32

    attack: str = "fgsm"
    attack_delta: float = 0.25
    attack_eps: float = 0.25
    attack_alpha: float = 0.05
    attack_steps: int = 10
    attack_random_init: bool = True
    attack_label: str = "predicted"

    lrp_eps: float = 0.1
    stabilizer: str = "sign-matched"
    ranking: str = "signed-descending"
    seed_rule: str = "original"
    bayes_mode: str = "averaged-heatmap"

    inference: tuple[str, ...] = ("hmc",)
    prior_std: float = 0.1
    hmc_subset: int = 1000
    hmc_init: str = "sgd"
    hmc_step_size: float = 0.0015
    hmc_leapfrog_steps: int = 60
    hmc_draws: int = 200
    hmc_burn_in: typing.Optional[int] = None
    hmc_thinning: typing.Optional[int] = None
    vi_steps: int = 3000
    vi_learning_rate: float = 1e-3
    vi_batch_size: int = 128
    vi_init_rho: float = -6.0

    sample_counts: tuple[int, ...] = (10, 50, 100)
    kgrid: tuple[int, ...] = (10, 30, 100)
    layers: tuple[int, ...] = (0, 1, 2)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        _choice("dataset", self.dataset, DATASETS)
        _choice("stabilizer", self.stabilizer, STABILIZERS)
        _choice("ranking", self.ranking, RANKINGS)
        _choice("bayes_mode", self.bayes_mode, MODES)
        _choice("seed_rule", self.seed_rule, ("original", "own"))
        _choice("attack_label", self.attack_label, ("predicted", "true"))
        _choice("hmc_init", self.hmc_init, ("sgd", "random"))
        for name in self.inference:
            _choice("inference", name, INFERENCE)
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("train_size and test_size must be positive")
        if not self.sample_counts or min(self.sample_counts) < 1:
            raise ConfigError("sample_counts must be positive")
        if not self.kgrid or min(self.kgrid) < 1:
            raise ConfigError("kgrid entries must be positive")
        depth = len(self.hidden) + 1
        if any(not 0 <= l < depth for l in self.layers):
            raise ConfigError(f"layers must lie in [0, {depth})")
        try:
            self.attack_spec()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def bayes_kinds(self) -> list[str]:
        return [f"bayes-{m}" for m in self.inference if m != "deterministic"]

    def network(self, input_dim: int = 784, class_count: int = 10):
        return mlp(input_dim, self.hidden, class_count)

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(method=self.attack, delta=self.attack_delta, eps=self.attack_eps,
                          alpha=self.attack_alpha, steps=self.attack_steps,
                          random_init=self.attack_random_init, seed=self.seed)

    def sgd_config(self) -> SGDConfig:
        return SGDConfig(self.sgd_learning_rate, self.sgd_epochs, self.sgd_batch_size, self.seed)

    def prior(self) -> GaussianPrior:
        return GaussianPrior(self.prior_std)

    def hmc_config(self) -> HMCConfig:
        return HMCConfig(self.hmc_step_size, self.hmc_leapfrog_steps, self.hmc_draws,
                         self.hmc_burn_in, self.hmc_thinning, self.seed, max(self.sample_counts))

    def vi_config(self) -> VIConfig:
        return VIConfig(steps=self.vi_steps, learning_rate=self.vi_learning_rate,
                        batch_size=self.vi_batch_size, init_rho=self.vi_init_rho, seed=self.seed)


@dataclass
class GeometryConfig:
    kind: str = "circle"
    ambient_dim: int = 10
    frequency: int = 2
    n_train: int = 2000
    n_eval: int = 200
    hidden: tuple[int, ...] = (32, 32)
    sgd_learning_rate: float = 0.05
    sgd_epochs: int = 300
    sgd_batch_size: int = 32
    prior_std: float = 1.0
    hmc_step_size: float = 0.01
    hmc_leapfrog_steps: int = 50
    hmc_draws: int = 1250
    hmc_burn_in: typing.Optional[int] = None
    hmc_thinning: typing.Optional[int] = None
    sample_counts: tuple[int, ...] = (1, 10, 50, 100)
    class_index: int = 1
    seed: int = 0

    def __post_init__(self):
        _choice("kind", self.kind, ("circle", "torus"))
        if not self.sample_counts or min(self.sample_counts) < 1:
            raise ConfigError("sample_counts must be positive")

    def hmc_config(self) -> HMCConfig:
        return HMCConfig(self.hmc_step_size, self.hmc_leapfrog_steps, self.hmc_draws,
                         self.hmc_burn_in, self.hmc_thinning, self.seed, max(self.sample_counts))


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")


def _convert(tp, raw: str):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if raw == "" or raw.lower() == "none":
            return None
        return _convert(next(a for a in args if a is not type(None)), raw)
    if origin is tuple:
        item = args[0]
        return tuple(_convert(item, part) for part in raw.split(",") if part.strip())
    if tp is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    return raw


def parse_pairs(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build(cls, pairs: dict[str, str]):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in pairs.items():
        name = key.replace("-", "_").replace(".", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[name] = _convert(hints[name], raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    return cls(**kwargs)


def load_config(path=None, overrides: dict[str, str] | None = None, cls=ExperimentConfig):
    pairs = parse_pairs(Path(path).read_text()) if path else {}
    pairs.update(overrides or {})
    return build(cls, pairs)


def dump_config(cfg) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        elif value is None:
            value = ""
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def as_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
