"""
Runtime configuration.

Settings come from (highest precedence first) CLI overrides, an optional
YAML config file, ``EPIRANK_*`` environment variables (``.env`` honoured),
and the defaults below.
"""

from pathlib import Path
from typing import Any, Optional, Set, Union

import yaml
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from scripts.errors import DataError, ParameterError
from scripts.schema import EpisodeClass, MinerConfig


# =============================================================================
# CONFIGURATION
# =============================================================================

DEFAULT_RHO = 0.5
DEFAULT_SCAN_MAX_LEN = 200
DEFAULT_STATE_CAP = 2 ** 16


class RankerSettings(BaseSettings):
    """All tunables of the mining and ranking pipeline."""

    model_config = SettingsConfigDict(
        env_prefix="EPIRANK_", env_file=".env", extra="ignore"
    )

    rho: float = Field(default=DEFAULT_RHO, gt=0.0, lt=1.0, description="Window weight decay")
    smoothing: float = Field(default=1.0, ge=0.0, description="Laplace smoothing for probabilities")
    split_fraction: float = Field(default=0.5, gt=0.0, lt=1.0, description="Training share of the input")
    min_support: int = Field(default=5, ge=1, description="Disjoint minimal windows required")
    max_window: int = Field(default=15, ge=2, description="Longest minimal window while mining")
    max_nodes: int = Field(default=5, ge=1, description="Largest mined episode")
    episode_classes: Set[EpisodeClass] = Field(
        default_factory=lambda: {EpisodeClass.SERIAL, EpisodeClass.PARALLEL, EpisodeClass.GENERAL},
        description="Episode classes emitted by the miner",
    )
    scan_max_len: int = Field(default=DEFAULT_SCAN_MAX_LEN, ge=1, description="Longest window scanned while ranking")
    state_cap: int = Field(default=DEFAULT_STATE_CAP, ge=2, description="Machine state-count guard")
    workers: Optional[int] = Field(default=None, ge=1, description="Parallel workers (None = all CPUs)")
    log_level: str = Field(default="INFO", description="Log level name")
    log_json: bool = Field(default=False, description="Render logs as JSON lines")

    def miner_config(self) -> MinerConfig:
        return MinerConfig(
            min_support=self.min_support,
            max_window=self.max_window,
            max_nodes=self.max_nodes,
            state_cap=self.state_cap,
            episode_classes=set(self.episode_classes),
        )

    @property
    def n_jobs(self) -> int:
        # joblib convention: -1 means every available CPU
        return self.workers if self.workers is not None else -1


def load_settings(config_path: Optional[Union[str, Path]] = None, **overrides: Any) -> RankerSettings:
    """
    Build settings from an optional YAML file plus explicit overrides.

    Args:
        config_path: YAML mapping of setting names to values.
        **overrides: Values that win over the file; ``None`` values are ignored.

    Returns:
        RankerSettings: Validated settings.

    Raises:
        DataError: If the config file is unreadable or not a mapping.
        ParameterError: If any value fails validation.
    """
    data = {}
    if config_path is not None:
        path = Path(config_path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as e:
            raise DataError(f"cannot read config: {e}", path=str(path))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise DataError("config must be a mapping", path=str(path))
        data.update(loaded)

    data.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return RankerSettings(**data)
    except ValidationError as e:
        raise ParameterError(str(e)) from e
