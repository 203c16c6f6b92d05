"""Run configuration: sectioned ``key = value`` files with typed defaults."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    dataset: str = ""
    mode: str = "inductive"

    def __post_init__(self):
        if self.mode not in ("transductive", "inductive"):
            raise ValueError(f"mode must be transductive or inductive, got {self.mode!r}")


@dataclass
class RunOptions:
    out: str = "runs/default"
    threads: int = 1
    log_every: int = 0

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunOptions = field(default_factory=RunOptions)


SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig, "run": RunOptions}


def _coerce(raw: str, annotation: str):
    ann = annotation.replace(" ", "")
    optional = "None" in ann.split("|")
    base = next((a for a in ann.split("|") if a != "None"), "str")
    if optional and raw.strip().lower() in ("", "none"):
        return None
    if base == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if base == "int":
        return int(raw)
    if base == "float":
        return float(raw)
    return raw.strip()


def _section_line(text: str, section: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return i
    return 0


def _line_of(text: str, section: str, key: str) -> int:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return 0


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    built = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}:{_section_line(text, section)}: unknown section [{section}]")
    for section, cls in SECTIONS.items():
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                where = f"{source}:{_line_of(text, section, key)}"
                if key not in kinds:
                    raise ConfigError(f"{where}: unknown key {section}.{key}")
                try:
                    values[key] = _coerce(raw, str(kinds[key]))
                except ValueError as exc:
                    raise ConfigError(f"{where}: {section}.{key}: {exc}") from None
        try:
            built[section] = cls(**values)
        except ValueError as exc:
            key = next((k for k in values if k in str(exc)), None)
            line = _line_of(text, section, key) if key else _section_line(text, section)
            raise ConfigError(f"{source}:{line}: [{section}] {exc}") from None
    return RunConfig(**built)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Every key with its effective value; ``parse_config`` reads it back unchanged."""
    out = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        out.append(f"[{section}]")
        for f in fields(obj):
            out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def override(cfg: RunConfig, section: str, **values) -> RunConfig:
    """Replace keys of one section (``None`` values are ignored) and revalidate."""
    obj = getattr(cfg, section)
    current = {f.name: getattr(obj, f.name) for f in fields(obj)}
    current.update({k: v for k, v in values.items() if v is not None})
    try:
        setattr(cfg, section, type(obj)(**current))
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None
    return cfg
