from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping

from loguru import logger

from .errors import ConfigError
from .run_config import RunConfig

SEED_ENV_VAR = "HDRM_SEED"


class ConfigService:
    """Handle workspace paths and run-config persistence."""

    def __init__(
        self,
        base_path: Path | None = None,
        config_path: Path | None = None,
        environ: Mapping[str, str] | None = None,
    ):
        self._base_path = Path(base_path) if base_path is not None else Path.cwd()
        self._config_path = Path(config_path) if config_path is not None else None
        self._environ = environ if environ is not None else os.environ
        self._run_config: RunConfig | None = None

    @property
    def base_path(self) -> Path:
        return self._base_path

    @property
    def config_path(self) -> Path:
        if self._config_path is not None:
            return self._config_path
        return self._base_path / "config.json"

    @property
    def run_config(self) -> RunConfig:
        if self._run_config is None:
            self._run_config = self.load_run_config()
        return self._run_config

    @property
    def data_dir(self) -> Path:
        return self._base_path / self.run_config.data_dir

    @property
    def checkpoint_dir(self) -> Path:
        return self._base_path / self.run_config.checkpoint_dir

    @property
    def run_dir(self) -> Path:
        return self._base_path / self.run_config.run_dir

    @property
    def metrics_dir(self) -> Path:
        return self._base_path / self.run_config.metrics_dir

    @property
    def export_dir(self) -> Path:
        return self._base_path / self.run_config.export_dir

    def load_run_config(self) -> RunConfig:
        path = self.config_path
        if path.is_file():
            config = RunConfig.from_file(path)
            logger.debug(f"Loaded run config from {path}")
        else:
            if self._config_path is not None:
                raise ConfigError(f"config file not found: {path}")
            logger.info(f"No config at {path}; using defaults")
            config = RunConfig()
        return self._apply_env(config)

    def save_run_config(self, config: RunConfig) -> Path:
        from .artifact_store import atomic_write_text

        atomic_write_text(self.config_path, config.to_json())
        self._run_config = config
        return self.config_path

    def use_run_config(self, config: RunConfig) -> RunConfig:
        """Pin an in-memory config (sweeps) without touching the file."""
        self._run_config = config
        return config

    def _apply_env(self, config: RunConfig) -> RunConfig:
        raw = self._environ.get(SEED_ENV_VAR)
        if raw is None or raw.strip() == "":
            return config
        try:
            seed = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
        logger.info(f"{SEED_ENV_VAR} overrides seed {config.seed} -> {seed}")
        return config.with_overrides(seed=seed)
