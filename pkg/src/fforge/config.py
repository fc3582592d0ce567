"""Augmentation configuration and the WAV manifest format.

Configuration is a flat JSON object; every field can be overridden by an
environment variable named ``FFORGE_<FIELD>`` (uppercased, JSON-encoded
value).  Manifests are text files listing one WAV path per line under
``[clean]`` and ``[noise]`` section headers; relative paths resolve
against the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

ENV_PREFIX = "FFORGE_"


class ConfigError(ValueError):
    """Raised for malformed configuration; the message names the field."""


@dataclass(frozen=True)
class AugmentationConfig:
    room_dim_range: tuple = (3.0, 8.0)
    t60_range: tuple = (0.1, 0.8)
    snr_db_set: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    noise_count_range: tuple = (1, 2)
    max_reflection_order: int = 10
    sample_rate: int = 16000
    clean_passthrough_prob: float = 0.1
    seed: int = 0
    examples_per_epoch: int = 1000
    schedule_horizon: float = 8.0

    def __post_init__(self):
        for name in ("room_dim_range", "t60_range"):
            rng = tuple(float(v) for v in getattr(self, name))
            if len(rng) != 2 or rng[0] > rng[1] or rng[0] <= 0:
                raise ConfigError(
                    f"config field '{name}': must be an ordered positive (low, high) pair"
                )
            object.__setattr__(self, name, rng)
        snr = tuple(float(v) for v in self.snr_db_set)
        if not snr:
            raise ConfigError("config field 'snr_db_set': must be non-empty")
        object.__setattr__(self, "snr_db_set", snr)
        counts = tuple(int(v) for v in self.noise_count_range)
        if len(counts) != 2 or counts[0] > counts[1] or counts[0] < 0:
            raise ConfigError(
                "config field 'noise_count_range': must be an ordered non-negative pair"
            )
        object.__setattr__(self, "noise_count_range", counts)
        if self.max_reflection_order < 0:
            raise ConfigError("config field 'max_reflection_order': must be >= 0")
        if self.sample_rate <= 0:
            raise ConfigError("config field 'sample_rate': must be positive")
        if not 0.0 <= self.clean_passthrough_prob <= 1.0:
            raise ConfigError(
                "config field 'clean_passthrough_prob': must lie in [0, 1]"
            )
        if self.examples_per_epoch <= 0:
            raise ConfigError("config field 'examples_per_epoch': must be positive")
        if self.schedule_horizon <= 0:
            raise ConfigError("config field 'schedule_horizon': must be positive")


_FIELD_NAMES = {f.name for f in fields(AugmentationConfig)}


def load_config(path=None, env=None) -> AugmentationConfig:
    """Build a config from an optional JSON file plus FFORGE_* overrides."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for key, value in raw.items():
            if key not in _FIELD_NAMES:
                raise ConfigError(f"config field '{key}': unknown field")
            values[key] = value

    if env is None:
        env = os.environ
    for name in sorted(_FIELD_NAMES):
        var = ENV_PREFIX + name.upper()
        if var in env:
            try:
                values[name] = json.loads(env[var])
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"config field '{name}': environment override {var} "
                    f"is not valid JSON: {exc}"
                ) from exc

    try:
        return AugmentationConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def override_seed(cfg: AugmentationConfig, seed) -> AugmentationConfig:
    return cfg if seed is None else replace(cfg, seed=int(seed))


@dataclass(frozen=True)
class Manifest:
    clean: tuple
    noise: tuple


def parse_manifest(path) -> Manifest:
    """Parse a ``[clean]`` / ``[noise]`` sectioned list of WAV paths.

    Blank lines and ``#`` comments are ignored.  Paths resolve relative to
    the manifest file.
    """
    path = Path(path)
    base = path.parent
    sections = {"clean": [], "noise": []}
    current = None
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in sections:
                raise ValueError(f"{path}:{line_no}: unknown manifest section [{name}]")
            current = name
            continue
        if current is None:
            raise ValueError(f"{path}:{line_no}: entry before any [clean]/[noise] section")
        sections[current].append(str((base / line).resolve()))
    return Manifest(clean=tuple(sections["clean"]), noise=tuple(sections["noise"]))
