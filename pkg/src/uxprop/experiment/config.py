"""Sweep configuration read from a flat TOML file.

Every key is a :class:`SweepConfig` field; anything else is rejected so that a
typo cannot silently fall back to a default.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..datasets import AUTO_MPG, MNIST
from ..explainers import METHODS
from ..nn.model import LINEAR, RELU
from ..uncertainty import DEFAULT_DELTA, TARGET_KINDS

SIGMAS_LOW = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
SIGMAS_HIGH = (0.2, 0.3, 0.4, 0.5)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    dataset: str
    explainers: tuple = METHODS
    target: str = "Input"
    sigmas_low: tuple = SIGMAS_LOW
    sigmas_high: tuple = SIGMAS_HIGH
    n_samples_mc: int = 100
    n_eval_samples: int = 10
    delta: float = DEFAULT_DELTA
    seed: int = 0
    output_dir: str = "results"
    data_dir: str = "data"
    model_path: Optional[str] = None
    activation_mode: str = RELU
    train_epochs: Optional[int] = None
    train_lr: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "explainers", tuple(self.explainers))
        object.__setattr__(self, "sigmas_low", tuple(float(s) for s in self.sigmas_low))
        object.__setattr__(self, "sigmas_high", tuple(float(s) for s in self.sigmas_high))
        validate(self)

    @property
    def sigmas(self):
        return self.sigmas_low + self.sigmas_high

    def to_dict(self):
        d = asdict(self)
        d["explainers"] = list(self.explainers)
        d["sigmas_low"] = list(self.sigmas_low)
        d["sigmas_high"] = list(self.sigmas_high)
        return d

    def digest(self):
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def validate(cfg):
    if cfg.dataset not in (MNIST, AUTO_MPG):
        raise ConfigError(f"dataset must be {MNIST!r} or {AUTO_MPG!r}, got {cfg.dataset!r}")
    if not cfg.explainers:
        raise ConfigError("explainers must not be empty")
    for name in cfg.explainers:
        if name not in METHODS:
            raise ConfigError(f"unknown explainer {name!r}; choose from {list(METHODS)}")
    if len(set(cfg.explainers)) != len(cfg.explainers):
        raise ConfigError("explainers contains duplicates")
    if cfg.target not in TARGET_KINDS:
        raise ConfigError(f"target must be one of {list(TARGET_KINDS)}, got {cfg.target!r}")
    for key in ("sigmas_low", "sigmas_high"):
        values = getattr(cfg, key)
        if any(not s > 0 for s in values):
            raise ConfigError(f"{key} must be strictly positive")
        if list(values) != sorted(set(values)):
            raise ConfigError(f"{key} must be sorted ascending without repeats")
    if not cfg.sigmas:
        raise ConfigError("at least one sigma is required")
    if cfg.n_samples_mc < 2:
        raise ConfigError("n_samples_mc must be at least 2")
    if cfg.n_eval_samples < 1:
        raise ConfigError("n_eval_samples must be positive")
    if not cfg.delta > 0:
        raise ConfigError("delta must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.activation_mode not in (RELU, LINEAR):
        raise ConfigError(f"activation_mode must be {RELU!r} or {LINEAR!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")


_KEYS = [f.name for f in fields(SweepConfig)]


def config_from_dict(data, source="<config>"):
    unknown = sorted(set(data) - set(_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {unknown}")
    if "dataset" not in data:
        raise ConfigError(f"{source}: missing required key 'dataset'")
    try:
        return SweepConfig(**data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, **overrides):
    """Read a TOML config; ``overrides`` with value None are ignored."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data, str(path))


def with_overrides(cfg, **overrides):
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
