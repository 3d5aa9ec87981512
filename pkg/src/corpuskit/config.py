"""Declarative pipeline configuration: one YAML tree, env-var overrides.

Secrets never live in the file; any string value may reference the
environment as ``${VARNAME}`` and is resolved at load time. Paths are
resolved relative to the config file's directory. The canonical JSON form
of the resolved tree (before path resolution) is hashed into every run
manifest.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigInvalid
from .records import PIPELINE_STAGES, Stage

__all__ = ["PipelineConfig", "load_config", "ALL_STAGE_NAMES"]

ALL_STAGE_NAMES = tuple(s.value for s in PIPELINE_STAGES)

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _expand_env(value):
    if isinstance(value, str):
        def repl(m: re.Match) -> str:
            name = m.group(1)
            if name not in os.environ:
                raise ConfigInvalid(f"config references unset environment variable {name}")
            return os.environ[name]
        return _ENV_REF.sub(repl, value)
    if isinstance(value, dict):
        return {k: _expand_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand_env(v) for v in value]
    return value


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def section(self, name: str) -> dict:
        value = self.raw.get(name) or {}
        if not isinstance(value, dict):
            raise ConfigInvalid(f"config section {name!r} must be a mapping")
        return value

    def get(self, name: str, default=None):
        return self.raw.get(name, default)

    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def model_path(self, section: str, key: str) -> Path:
        value = self.section(section).get(key)
        if not value:
            raise ConfigInvalid(f"config missing {section}.{key}")
        path = self.resolve_path(str(value))
        if not path.exists():
            raise ConfigInvalid(f"{section}.{key}: no such file {path}")
        return path

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def stages(self, override: list[str] | None = None) -> tuple[Stage, ...]:
        """Enabled stages in canonical order; skipping allowed, reordering not."""
        names = override if override is not None else self.raw.get("stages")
        if names is None:
            return PIPELINE_STAGES
        unknown = [n for n in names if n not in ALL_STAGE_NAMES]
        if unknown:
            raise ConfigInvalid(f"unknown stages {unknown}; valid: {list(ALL_STAGE_NAMES)}")
        return tuple(s for s in PIPELINE_STAGES if s.value in set(names))

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: str | Path | None, overrides: dict | None = None) -> PipelineConfig:
    """Read the YAML tree; a missing path yields an all-defaults config."""
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigInvalid(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigInvalid(f"{path}: top level must be a mapping")
        base_dir = path.parent.resolve()
    raw = _expand_env(raw)
    if overrides:
        raw.update(overrides)
    return PipelineConfig(raw=raw, base_dir=base_dir)
