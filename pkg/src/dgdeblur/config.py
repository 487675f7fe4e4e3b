"""Experiment configuration: a strict flat key = value file.

The format is a flat INI dialect: one ``key = value`` assignment per
line, ``#`` or ``;`` full-line comments, blank lines allowed.  Unknown
keys, duplicate keys, malformed lines, and out-of-range values are
rejected with the offending line number.  An empty file yields the
default configuration, and the canonical rendering of any configuration
parses back into an equal configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .blur import BLUR_MODES, SIGMA_MODES
from .model import NONLIN_KINDS, ModelConfig
from .operator import FLUX_KINDS, VARIANTS
from .partition import BOUNDARY_KINDS


class ConfigError(ValueError):
    """Malformed or invalid configuration input."""


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    n_train: int = 200
    n_test: int = 20
    height: int = 64
    width: int = 64
    sigma_mode: str = "smooth_random"
    sigma_min: float = 1.0
    sigma_max: float = 4.0
    shapes_min: int = 3
    shapes_max: int = 6
    weight_filled_square: float = 1.0
    weight_hollow_box: float = 1.0
    weight_thin_line: float = 1.0
    blur_trunc: float = 3.0
    blur_mode: str = "output"
    data_seed: int = 2026
    # model
    channels: int = 16
    heads: int = 4
    element_size: int = 8
    layers: int = 2
    variant: str = "face"
    flux: str = "auto"
    bc: str = "auto"
    penalty: str = "learnable"
    nonlin: str = "gelu"
    model_seed: int = 7
    # training
    steps: int = 2000
    batch: int = 4
    lr: float = 3e-4
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    loss_lambda: float = 0.1
    loss_scales: int = 1
    augment: bool = True
    train_seed: int = 123
    # outputs
    write_pgm: bool = False


_FIELDS = {f.name: f.type for f in fields(ExperimentConfig)}

_ENUMS = {
    "sigma_mode": SIGMA_MODES,
    "blur_mode": BLUR_MODES,
    "variant": VARIANTS,
    "flux": ("auto",) + FLUX_KINDS,
    "bc": ("auto",) + BOUNDARY_KINDS,
    "nonlin": NONLIN_KINDS,
}

_POSITIVE_INT = ("n_train", "n_test", "height", "width", "channels", "heads",
                 "element_size", "steps", "batch", "loss_scales", "shapes_min",
                 "shapes_max")
_NONNEG_INT = ("layers",)
_NONNEG_FLOAT = ("sigma_min", "sigma_max", "weight_filled_square",
                 "weight_hollow_box", "weight_thin_line", "weight_decay",
                 "loss_lambda", "lr_min")
_POSITIVE_FLOAT = ("blur_trunc", "lr")


def _parse_value(key: str, raw: str, line_no: int):
    kind = _FIELDS[key]
    where = f"line {line_no}: key {key!r}"
    if kind in ("int", int):
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}")
    elif kind in ("float", float):
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}")
    elif kind in ("bool", bool):
        if raw not in ("true", "false"):
            raise ConfigError(f"{where}: expected true or false, got {raw!r}")
        value = raw == "true"
    else:
        value = raw
    if key in _ENUMS and value not in _ENUMS[key]:
        raise ConfigError(f"{where}: {raw!r} not in {list(_ENUMS[key])}")
    if key == "penalty" and value != "learnable":
        try:
            float(value)
        except ValueError:
            raise ConfigError(f"{where}: expected 'learnable' or a number, got {raw!r}")
    if key in _POSITIVE_INT and value < 1:
        raise ConfigError(f"{where}: must be >= 1, got {value}")
    if key in _NONNEG_INT and value < 0:
        raise ConfigError(f"{where}: must be >= 0, got {value}")
    if key in _NONNEG_FLOAT and value < 0.0:
        raise ConfigError(f"{where}: must be >= 0, got {value}")
    if key in _POSITIVE_FLOAT and value <= 0.0:
        raise ConfigError(f"{where}: must be > 0, got {value}")
    return value


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.sigma_max < cfg.sigma_min:
        raise ConfigError(
            f"sigma_max {cfg.sigma_max} below sigma_min {cfg.sigma_min}")
    if cfg.shapes_max < cfg.shapes_min:
        raise ConfigError(
            f"shapes_max {cfg.shapes_max} below shapes_min {cfg.shapes_min}")
    if cfg.channels % cfg.heads:
        raise ConfigError(
            f"channels {cfg.channels} not divisible by heads {cfg.heads}")
    if cfg.lr < cfg.lr_min:
        raise ConfigError(f"lr {cfg.lr} below lr_min {cfg.lr_min}")
    if all(w == 0.0 for w in (cfg.weight_filled_square, cfg.weight_hollow_box,
                              cfg.weight_thin_line)):
        raise ConfigError("at least one pattern weight must be positive")
    return cfg


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` with line numbers."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("["):
            raise ConfigError(
                f"{source}, line {line_no}: section headers are not supported; "
                f"the format is a flat key = value list")
        if "=" not in stripped:
            raise ConfigError(f"{source}, line {line_no}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key or not raw:
            raise ConfigError(f"{source}, line {line_no}: empty key or value in {line!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{source}, line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}, line {line_no}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw, line_no)
        except ConfigError as err:
            raise ConfigError(f"{source}, {err}") from None
    try:
        return _validate(ExperimentConfig(**values))
    except ConfigError as err:
        raise ConfigError(f"{source}: {err}") from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical rendering; parses back into an equal configuration."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode("ascii")).hexdigest()[:16]


def model_config(cfg: ExperimentConfig, variant: str | None = None) -> ModelConfig:
    chosen = cfg.variant if variant is None else variant
    # the global variant has no interfaces, so any configured flux is moot
    flux = "none" if chosen == "gg" else cfg.flux
    return ModelConfig(
        channels=cfg.channels,
        heads=cfg.heads,
        element_size=cfg.element_size,
        layers=cfg.layers,
        variant=chosen,
        flux=flux,
        bc=cfg.bc,
        penalty=cfg.penalty,
        nonlin=cfg.nonlin,
        seed=cfg.model_seed,
    )
