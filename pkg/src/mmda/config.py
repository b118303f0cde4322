"""Run configuration: dataclasses for every tunable default plus INI loading.

The config file has one section per dataclass (``[model]``, ``[train]``,
``[decode]``, ``[augment]``).  Unknown sections or keys are rejected so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
import typing
from dataclasses import dataclass, field
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    input_dim: int = 83
    hidden: int = 320
    projection_dim: Optional[int] = None
    acoustic_layers: int = 4
    pyramid_layers: tuple = (2, 3)
    embedding_dim: Optional[int] = None
    att_dim: int = 320
    att_channels: int = 10
    att_kernel: int = 7
    dec_layers: int = 2
    dec_hidden: int = 300
    dec_embedding: Optional[int] = None
    init_scale: float = 0.1
    seed: int = 1

    def __post_init__(self):
        self.pyramid_layers = tuple(sorted(int(i) for i in self.pyramid_layers))
        if self.projection_dim is None:
            self.projection_dim = self.hidden
        if self.embedding_dim is None:
            self.embedding_dim = self.input_dim
        if self.dec_embedding is None:
            self.dec_embedding = self.dec_hidden
        if self.embedding_dim != self.input_dim:
            raise ConfigError(f"embedding_dim ({self.embedding_dim}) must equal input_dim ({self.input_dim})")
        if any(i < 0 or i >= self.acoustic_layers for i in self.pyramid_layers):
            raise ConfigError(f"pyramid_layers {self.pyramid_layers} outside 0..{self.acoustic_layers - 1}")
        if self.att_kernel % 2 == 0:
            raise ConfigError("att_kernel must be odd")
        for name in ("input_dim", "hidden", "acoustic_layers", "att_dim", "att_channels",
                     "dec_layers", "dec_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def downsampling(self) -> int:
        return 2 ** len(self.pyramid_layers)


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 8
    aug_batch_size: int = 8
    aug_ratio: int = 1
    seed: int = 1
    clip_norm: Optional[float] = 5.0
    rho: float = 0.95
    eps: float = 1e-8
    precision: int = 32
    check_partitions: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1 or self.aug_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.aug_ratio < 0:
            raise ConfigError("aug_ratio must be >= 0")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")


@dataclass
class BeamConfig:
    beam_size: int = 10
    min_ratio: float = 0.3
    max_ratio: float = 0.8
    lm_weight: float = 0.3

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if not 0 <= self.min_ratio <= self.max_ratio:
            raise ConfigError("need 0 <= min_ratio <= max_ratio")
        if self.lm_weight < 0:
            raise ConfigError("lm_weight must be >= 0")


@dataclass
class AugmentConfig:
    seed: int = 1
    max_chars: int = 250
    max_unk: int = 1
    g2p_order: int = 4
    repeat_rounding: str = "quotient"
    downsampling: int = 4

    def __post_init__(self):
        if self.repeat_rounding not in ("quotient", "round_then_divide"):
            raise ConfigError("repeat_rounding must be 'quotient' or 'round_then_divide'")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: BeamConfig = field(default_factory=BeamConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section in _SECTIONS:
            obj = getattr(self, section)
            cp[section] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_SECTIONS = ("model", "train", "decode", "augment")


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse(raw: str, annotation, key: str):
    text = raw.strip()
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        annotation = args[0]
    try:
        if annotation is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def load_config(path: Optional[str] = None, text: Optional[str] = None) -> RunConfig:
    """Read an INI file (or string) into a :class:`RunConfig`.

    ``MMDA_SEED`` in the environment overrides every seed.
    """
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    elif text is not None:
        cp.read_string(text)
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        cls = RunConfig.__dataclass_fields__[section].default_factory
        hints = typing.get_type_hints(cls)
        kwargs = {}
        for key, raw in cp[section].items():
            if key not in hints:
                raise ConfigError(f"unknown config key {section}.{key}")
            kwargs[key] = _parse(raw, hints[key], f"{section}.{key}")
        values[section] = kwargs
    seed = os.environ.get("MMDA_SEED")
    if seed is not None:
        for section in ("model", "train", "augment"):
            values.setdefault(section, {})["seed"] = int(seed)
    try:
        return RunConfig(**{name: RunConfig.__dataclass_fields__[name].default_factory(**kw)
                            for name, kw in values.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
