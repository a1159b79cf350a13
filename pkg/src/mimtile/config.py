"""Layered settings: CLI flag > environment variable > config file > default."""

from __future__ import annotations

import json
import os
from pathlib import Path

import yaml

DEFAULTS = {
    "v": 364,
    "patch": 14,
    "feature_dim": 1152,
    "shuffle": 4,
    "budget": 50,
    "max_tokens": 8192,
    "workers": 1,
}

ENV_VARS = {key: f"MIMTILE_{key.upper()}" for key in DEFAULTS}
CONFIG_ENV = "MIMTILE_CONFIG"


def load_file(path) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {', '.join(sorted(unknown))}")
    return data


class Settings:
    def __init__(self, config_path=None, env=None):
        self.env = os.environ if env is None else env
        self.file = load_file(config_path or self.env.get(CONFIG_ENV))

    def get(self, key: str, flag=None) -> int:
        if flag is not None:
            return flag
        raw = self.env.get(ENV_VARS[key])
        if raw not in (None, ""):
            try:
                return int(raw)
            except ValueError as e:
                raise ValueError(f"{ENV_VARS[key]}={raw!r} is not an integer") from e
        if key in self.file:
            return int(self.file[key])
        return DEFAULTS[key]
