"""Runtime configuration: JSON file with environment overrides.

Precedence: built-in defaults < config file < environment. The config file
path comes from --config or $CHARTCITE_CONFIG. A missing backend is a hard
configuration error at use time — never a silent mock.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

_ENV_PREFIX = "CHARTCITE_"


@dataclass
class Config:
    backend_url: str | None = None
    backend_token: str | None = None
    model: str = "default"
    api_token: str | None = None
    strict: bool = True
    data_dir: str = "./chartcite-data"

    @classmethod
    def load(cls, config_path: str | Path | None = None) -> "Config":
        config = cls()
        path = config_path or os.environ.get(_ENV_PREFIX + "CONFIG")
        if path:
            try:
                raw = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
            for key in ("backend_url", "backend_token", "model", "api_token", "data_dir"):
                if raw.get(key) is not None:
                    setattr(config, key, str(raw[key]))
            if raw.get("strict") is not None:
                config.strict = bool(raw["strict"])
        env = os.environ
        config.backend_url = env.get(_ENV_PREFIX + "BACKEND_URL", config.backend_url)
        config.backend_token = env.get(_ENV_PREFIX + "BACKEND_TOKEN", config.backend_token)
        config.model = env.get(_ENV_PREFIX + "MODEL", config.model)
        config.api_token = env.get(_ENV_PREFIX + "API_TOKEN", config.api_token)
        config.data_dir = env.get(_ENV_PREFIX + "DATA_DIR", config.data_dir)
        if _ENV_PREFIX + "STRICT" in env:
            config.strict = env[_ENV_PREFIX + "STRICT"].lower() not in ("0", "false", "no")
        return config

    @property
    def store_path(self) -> Path:
        return Path(self.data_dir) / "store.json"
