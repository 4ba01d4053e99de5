"""
Configuration settings for the lag-correlation pipeline.

``Settings`` holds process-wide defaults read from the environment / ``.env``.
``RunConfig`` describes one CLI run; it is loaded from a key=value file and
overridden by command-line flags (CLI > file > settings > field defaults).
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError, SourceNotFound
from .models import ModelFamily, VariableKind
from .schemas import BoostSpec, ForestSpec, GridSpec, MlpSpec, TreeSpec

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # Application
    app_name: str = "lagcorr"
    app_version: str = "1.0.0"
    log_level: str = "INFO"

    # Reproducibility and parallelism
    seed: int = 42
    jobs: int = 1

    # Remote sources
    http_timeout_seconds: float = 30.0
    cases_url: str = (
        "https://raw.githubusercontent.com/pcm-dpc/COVID-19/master/"
        "dati-province/dpc-covid19-ita-province.csv"
    )

    # Correlation
    max_lag: int = 60
    min_overlap: int = 30
    weak_threshold: float = 0.3
    moderate_threshold: float = 0.5
    strong_threshold: float = 0.7

    # Evaluation
    train_fraction: float = 0.7
    cv_folds: int = 5
    min_holdout_samples: int = 10

    # Standardization uses the population deviation (ddof=0)
    standardize_ddof: int = 0

    # Model files
    model_format_version: int = 1

    model_config = SettingsConfigDict(env_file=".env", env_prefix="LAGCORR_", extra="ignore")


settings = Settings()


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    # Inputs
    districts: List[str] = Field(default_factory=list)
    env_source: Optional[str] = None  # path or URL; "{district}" is expanded
    cases_source: Optional[str] = None
    dataset_dir: Optional[str] = None  # defaults to <out_dir>/datasets
    required_columns: Union[List[VariableKind], str] = "auto"
    max_missing_fraction: float = Field(default=0.2, ge=0.0, le=1.0)

    # Correlation
    max_lag: int = Field(default_factory=lambda: settings.max_lag, ge=0, le=365)
    min_overlap: int = Field(default_factory=lambda: settings.min_overlap, ge=3)
    method: str = "spearman"

    # Training
    models: List[ModelFamily] = Field(default_factory=lambda: [ModelFamily.FOREST])
    lags: Union[List[int], str] = "peaks"
    grid_search: bool = False
    cv_folds: int = Field(default_factory=lambda: settings.cv_folds, ge=2)
    tree: TreeSpec = Field(default_factory=TreeSpec)
    forest: ForestSpec = Field(default_factory=ForestSpec)
    boost: BoostSpec = Field(default_factory=BoostSpec)
    mlp: MlpSpec = Field(default_factory=MlpSpec)
    grid: GridSpec = Field(default_factory=GridSpec)

    # Execution
    seed: int = Field(default_factory=lambda: settings.seed)
    jobs: int = Field(default_factory=lambda: settings.jobs, ge=1)
    out_dir: str = "out"

    model_config = {"extra": "forbid"}

    @field_validator("districts", "models", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("required_columns", mode="before")
    @classmethod
    def _parse_required(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() != "auto":
            return _split_list(value)
        return value.strip().lower() if isinstance(value, str) else value

    @field_validator("lags", mode="before")
    @classmethod
    def _parse_lags(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() != "peaks":
            return [int(item) for item in _split_list(value)]
        return value.strip().lower() if isinstance(value, str) else value

    @field_validator("method")
    @classmethod
    def _check_method(cls, value: str) -> str:
        if value not in ("spearman", "pearson"):
            raise ValueError("method must be 'spearman' or 'pearson'")
        return value

    @model_validator(mode="after")
    def _check_lags(self) -> "RunConfig":
        if isinstance(self.lags, list) and any(lag < 0 or lag > self.max_lag for lag in self.lags):
            raise ValueError(f"lags must lie in [0, {self.max_lag}]")
        return self

    def env_location(self, district: str) -> Optional[str]:
        return self.env_source.format(district=district) if self.env_source else None

    def cases_location(self, district: str) -> str:
        return (self.cases_source or settings.cases_url).format(district=district)

    def datasets_path(self) -> Path:
        return Path(self.dataset_dir) if self.dataset_dir else Path(self.out_dir) / "datasets"


# Spec sections accept flat keys such as ``forest_n_estimators=500``.
_NESTED_SECTIONS = ("tree", "forest", "boost", "mlp", "grid")


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    for key, value in flat.items():
        section, _, field = key.partition("_")
        if key not in RunConfig.model_fields and section in _NESTED_SECTIONS and field:
            data.setdefault(section, {})[field] = value
        else:
            data[key] = value
    for section in _NESTED_SECTIONS:
        if section in data and isinstance(data[section], dict):
            for field, value in list(data[section].items()):
                if field.endswith(("_values", "widths", "activations")) and isinstance(value, str):
                    data[section][field] = _split_list(value)
    return data


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a key=value config file; keys are case-insensitive, ``LAGCORR_`` is optional."""
    path = Path(path)
    if not path.is_file():
        raise SourceNotFound(f"Config file not found: {path}", details={"path": str(path)})
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigError(f"Config key without a value: {key}", details={"path": str(path)})
        normalized = key.strip().lower()
        if normalized.startswith("lagcorr_"):
            normalized = normalized[len("lagcorr_"):]
        values[normalized] = value
    return values


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Build a validated RunConfig from an optional file and CLI overrides."""
    flat: Dict[str, Any] = read_config_file(path) if path else {}
    flat.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        config = RunConfig(**_nest(flat))
    except ValidationError as e:
        errors = [{"loc": list(err["loc"]), "msg": err["msg"]} for err in e.errors()]
        raise ConfigError(f"Invalid run configuration: {e}", details={"errors": errors}) from e
    logger.debug(f"Resolved run config: {config.model_dump(mode='json')}")
    return config
