"""Flat key=value config files and resolution against TrainConfig defaults.

A config file holds one `key = value` pair per line (# starts a comment).
Command-line values override file values; the fully resolved mapping is
persisted to the output directory before a run starts.
"""

from dataclasses import asdict, fields
from pathlib import Path

from .errors import ConfigError
from .trainer import TrainConfig


def parse_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    mapping = {}
    for ln, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        mapping[key] = value
    return mapping


def _coerce(name, value, target_type):
    if isinstance(value, target_type):
        return value
    text = str(value).strip()
    try:
        if target_type is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError as e:
        raise ConfigError(f"config key {name}: cannot parse {value!r} as {target_type.__name__}") from e


def resolve_train_config(file_path=None, overrides=None) -> TrainConfig:
    """Defaults <- config file <- explicit overrides, with type checking."""
    cfg = TrainConfig()
    known = {f.name: f.type for f in fields(TrainConfig)}
    typemap = {f.name: type(getattr(cfg, f.name)) for f in fields(TrainConfig)}
    merged = {}
    if file_path:
        merged.update(parse_config_file(file_path))
    if overrides:
        merged.update(overrides)
    for key, value in merged.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
        setattr(cfg, key, _coerce(key, value, typemap[key]))
    cfg.validate()
    return cfg


def write_resolved(out_dir, mapping):
    """Persist the resolved configuration before any work happens."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.txt"
    with open(path, "w") as f:
        for key in sorted(mapping):
            f.write(f"{key} = {mapping[key]}\n")
    return path


def train_config_mapping(cfg: TrainConfig):
    return {k: v for k, v in asdict(cfg).items()}
