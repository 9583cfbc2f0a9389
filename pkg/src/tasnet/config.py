"""JSON run configuration: ``{"model": {...}, "train": {...}, "paths": {...}}``.

Every section is optional; unknown keys anywhere are errors.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

SECTIONS = ("model", "train", "paths")


@dataclass(frozen=True)
class PathsConfig:
    train_manifest: str | None = None
    valid_manifest: str | None = None
    test_manifest: str | None = None
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "PathsConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown paths key(s): {', '.join(unknown)}")
        out = {}
        for k, v in d.items():
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"paths.{k} must be a string, got {v!r}")
            if v is not None and base is not None and not os.path.isabs(v):
                v = str(base / v)
            out[k] = v
        return cls(**out)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "train": dataclasses.asdict(self.train),
                "paths": dataclasses.asdict(self.paths)}


def parse_config(doc: dict, base: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown configuration section(s): {', '.join(unknown)}")
    for name in SECTIONS:
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigError(f"section {name!r} must be a JSON object")
    try:
        model = ModelConfig.from_dict(doc.get("model", {}))
        train = TrainConfig.from_dict(doc.get("train", {}))
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return RunConfig(model, train, PathsConfig.from_dict(doc.get("paths", {}), base))


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a config file; relative paths are resolved against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return parse_config(doc, path.parent)
