"""Run configuration files: INI-style ``key = value`` text in sections.

Example::

    [data]
    kind = synthetic        # synthetic | vectors | raster
    n_classes = 3

    [model]
    hidden_dims = 64
    projector_dim = 16

    [train]
    epochs = 50
    kappa = 1.0

Unknown sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .datastore import SyntheticSpec
from .model import EncoderConfig, TrainConfig
from .views import ViewRecipe


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    kind: str = "synthetic"
    path: str = ""
    n_classes: int = 3
    samples_per_class: int = 200
    dim: int = 32
    class_kappa: float = 40.0
    view_kappa: float = 200.0
    seed: int = 0
    height: int = 32
    width: int = 32
    channels: int = 3
    test_fraction: float = 0.25

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            self.n_classes, self.samples_per_class, self.dim, self.class_kappa, self.view_kappa, self.seed
        )


@dataclass
class ModelConfig:
    hidden_dims: tuple[int, ...] = (64,)
    projector_hidden: int | None = 64
    projector_dim: int = 16
    activation: str = "relu"
    seed: int = 0


@dataclass
class ProbeSettings:
    enabled: bool = True
    every: int = 1
    k: int = 20
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 64
    features: str = "embedding"  # embedding | backbone


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=64))
    views: ViewRecipe = field(default_factory=ViewRecipe)
    probe: ProbeSettings = field(default_factory=ProbeSettings)

    def encoder_config(self, input_dim: int) -> EncoderConfig:
        m = self.model
        return EncoderConfig(input_dim, m.hidden_dims, m.projector_hidden, m.projector_dim, m.activation, m.seed)


_SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig, "views": ViewRecipe, "probe": ProbeSettings}


def _convert(name: str, raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(current, tuple) or name in ("hidden_dims",):
        if raw.lower() in ("", "none"):
            return ()
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        conv = float if current and isinstance(current[0], float) else int
        if name.endswith("_scale"):
            conv = float
        return tuple(conv(p) for p in parts)
    if name == "projector_hidden":
        return None if raw.lower() in ("none", "") else int(raw)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _line_of(text: str, section: str, key: str) -> int:
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
            return no
    return 0


def _section_line(text: str, section: str) -> int:
    for no, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return no
    return 0


def parse_run_config(text: str, source: str = "<config>", extra_sections=("sweep",)) -> tuple[RunConfig, dict]:
    """Parse config text; returns the run config and any extra sections verbatim."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = RunConfig()
    extras = {}
    for section in parser.sections():
        if section in extra_sections:
            extras[section] = dict(parser[section])
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"{source}:{_section_line(text, section)}: unknown section [{section}]")
        obj = getattr(cfg, section)
        known = {f.name for f in fields(obj) if f.init}
        updates = {}
        for key, raw in parser[section].items():
            line = _line_of(text, section, key)
            if key not in known:
                raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{section}]")
            try:
                updates[key] = _convert(key, raw, getattr(obj, key))
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: bad value for {section}.{key}: {exc}") from exc
        try:
            setattr(cfg, section, replace(obj, **updates))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{_section_line(text, section)}: invalid [{section}]: {exc}") from exc
    return cfg, extras


def load_run_config(path) -> tuple[RunConfig, dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_run_config(text, str(path))
