"""Pipeline configuration: INI sections mapped onto the stage dataclasses.

The schema is derived from the dataclass fields, so every tunable is
overridable from the file and unknown keys fail loudly instead of being
silently ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .calibration import ExtrinsicConfig
from .fusion import FusionConfig
from .localization import UkfConfig
from .slam import SlamConfig

FLOAT_FMT = "%.9g"


class ConfigError(ValueError):
    pass


@dataclass
class SimulateConfig:
    """Scene/rig/trajectory selection; empty paths mean built-in defaults."""

    scene_file: str = ""
    rig_file: str = ""
    waypoints_file: str = ""
    speed: float = 1.0
    noise: bool = True
    corrosion_patch: bool = True
    image_stride: int = 5       # render every k-th pose


@dataclass
class EvaluationConfig:
    max_dt: float = 0.02
    delta: int = 1
    align: bool = True


_STAGES = ("simulate", "slam", "localize", "fuse", "evaluate")


@dataclass
class PipelineConfig:
    seed: int = 0
    verbosity: int = 1
    stages: tuple = _STAGES
    simulator: SimulateConfig = field(default_factory=SimulateConfig)
    calibration: ExtrinsicConfig = field(default_factory=ExtrinsicConfig)
    slam: SlamConfig = field(default_factory=SlamConfig)
    localization: UkfConfig = field(default_factory=UkfConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        bad = [s for s in self.stages if s not in _STAGES]
        if bad:
            raise ConfigError(f"unknown stages: {', '.join(bad)}")


_SECTIONS = {
    "simulator": ("simulator", SimulateConfig),
    "calibration": ("calibration", ExtrinsicConfig),
    "slam": ("slam", SlamConfig),
    "localization": ("localization", UkfConfig),
    "fusion": ("fusion", FusionConfig),
    "evaluation": ("evaluation", EvaluationConfig),
}


def _field_defaults(cls) -> dict:
    out = {}
    for f in fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def _parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _coerce(text: str, default, key: str):
    """Interpret the raw string according to the default value's shape."""
    text = text.strip()
    try:
        if isinstance(default, bool):
            return _parse_bool(text, key)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, str):
            return text
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                flat = [float(t) for t in text.split()]
                sizes = [len(d) for d in default]
                if len(flat) != sum(sizes):
                    raise ConfigError(
                        f"{key}: expected {sum(sizes)} numbers, got {len(flat)}")
                out = []
                pos = 0
                for size in sizes:
                    out.append(tuple(flat[pos:pos + size]))
                    pos += size
                return tuple(out)
            if default and isinstance(default[0], str):
                return tuple(text.replace(",", " ").split())
            vals = tuple(float(t) for t in text.split())
            if default and len(vals) != len(default):
                raise ConfigError(
                    f"{key}: expected {len(default)} numbers, got {len(vals)}")
            return vals
        if default is None:
            if text.lower() == "none":
                return None
            try:
                return int(text)
            except ValueError:
                return float(text)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    raise ConfigError(f"{key}: unsupported field type {type(default).__name__}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return FLOAT_FMT % value
    if isinstance(value, tuple):
        parts = []
        for v in value:
            if isinstance(v, tuple):
                parts.extend(_format_value(x) for x in v)
            else:
                parts.append(_format_value(v))
        return " ".join(parts)
    if value is None:
        return "none"
    return str(value)


def read_pipeline_config(path) -> PipelineConfig:
    """Parse a config file; sections and keys outside the schema fail.

    Raises:
        ConfigError: unknown section or key, unparseable or invalid value.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        with open(path) as f:
            parser.read_file(f, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    top_defaults = {"seed": 0, "verbosity": 1, "stages": _STAGES}
    kwargs = {}
    for section in parser.sections():
        if section == "pipeline":
            for key, raw in parser.items(section):
                if key not in top_defaults:
                    raise ConfigError(f"[pipeline] unknown key {key!r}")
                kwargs[key] = _coerce(raw, top_defaults[key], f"pipeline.{key}")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        attr, cls = _SECTIONS[section]
        defaults = _field_defaults(cls)
        values = {}
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            values[key] = _coerce(raw, defaults[key], f"{section}.{key}")
        try:
            kwargs[attr] = cls(**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
    try:
        return PipelineConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_pipeline_config(config: PipelineConfig) -> str:
    """Canonical text rendering: every key on its own line, sections sorted."""
    lines = ["[pipeline]"]
    for key in ("seed", "verbosity", "stages"):
        lines.append(f"{key} = {_format_value(getattr(config, key))}")
    for section in sorted(_SECTIONS):
        obj = getattr(config, _SECTIONS[section][0])
        lines.append("")
        lines.append(f"[{section}]")
        for f in fields(type(obj)):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def write_pipeline_config(path, config: PipelineConfig) -> None:
    Path(path).write_text(dump_pipeline_config(config))


def config_hash(config: PipelineConfig) -> str:
    """SHA-256 over the canonical rendering; stable across key order."""
    return hashlib.sha256(dump_pipeline_config(config).encode()).hexdigest()
