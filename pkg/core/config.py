"""
Settings models and loading.

Settings come from YAML files (defaults shipped under config/) and are then
overridden by environment variables, which may themselves come from .env files.
"""
import os
import logging
from pathlib import Path
from typing import ClassVar, Dict, List, Optional, Tuple, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, model_validator

from core.models import AcquisitionFrequency, AcquisitionResponsibility, SensorMode
from core.templates import TEMPLATE_ROOT
from core.wire.transport import TransportKind

logger = logging.getLogger(__name__)

REGISTRY_ENV = "CADDOT_REGISTRY"
LOG_LEVEL_ENV = "CADDOT_LOG_LEVEL"
CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"

T = TypeVar("T", bound=BaseModel)


class ConfigError(Exception):
    """Raised when a settings file is missing or invalid."""

    def __init__(self, message: str, path: Optional[Path] = None):
        super().__init__(message)
        self.path = path


def load_env_files() -> None:
    """
    Load environment variables from .env files in order:
    1. config/.env.caddot shipped next to the defaults
    2. .env in the working directory (overrides)
    """
    shipped = CONFIG_DIR / ".env.caddot"
    if shipped.exists():
        logger.debug(f"Loading env file: {shipped}")
        load_dotenv(shipped)

    root_env = Path(".env")
    if root_env.exists():
        logger.debug(f"Loading env file: {root_env}")
        load_dotenv(root_env, override=True)

    level = os.getenv(LOG_LEVEL_ENV)
    if level:
        logging.getLogger().setLevel(level.upper())


class ListenerBinding(BaseModel):
    kind: TransportKind
    host: str = "127.0.0.1"
    port: int = Field(ge=0, le=65535)


def default_listeners() -> List[ListenerBinding]:
    return [
        ListenerBinding(kind=TransportKind.TCP, port=7700),
        ListenerBinding(kind=TransportKind.UDP, port=7701),
        ListenerBinding(kind=TransportKind.BT_SIM, port=7702),
    ]


class ContextConfig(BaseModel):
    """Context facts the gateway forwards to the reasoner; 'auto' derives them from the clock."""
    season: str = "auto"
    time_band: str = "auto"
    hemisphere: str = "north"
    extra: Dict[str, str] = Field(default_factory=dict)


class GatewayConfig(BaseModel):
    shipped_file: ClassVar[str] = "gateway.yaml"

    listeners: List[ListenerBinding] = Field(default_factory=default_listeners)
    registry_url: str = "http://127.0.0.1:7800"
    max_sessions: int = Field(default=20, ge=1)
    phase_timeout_s: float = Field(default=10.0, gt=0)
    who_timeout_s: float = Field(default=2.0, gt=0)
    registry_attempts: int = Field(default=3, ge=1)
    registry_backoff_s: float = Field(default=0.2, ge=0)
    session_history: int = Field(default=1000, ge=1)
    status_host: str = "127.0.0.1"
    status_port: int = Field(default=7710, ge=0, le=65535)
    context: ContextConfig = Field(default_factory=ContextConfig)


class StrategyDefaults(BaseModel):
    """Defaults the reasoner starts from before any context rule applies."""
    commfreq_factor: float = Field(default=6.0, ge=1.0)
    acq_resp: AcquisitionResponsibility = AcquisitionResponsibility.PUSH
    acq_freq: AcquisitionFrequency = AcquisitionFrequency.INTERVAL
    mode: SensorMode = SensorMode.ACTIVE


class RegistryConfig(BaseModel):
    shipped_file: ClassVar[str] = "registry.yaml"

    host: str = "127.0.0.1"
    port: int = Field(default=7800, ge=0, le=65535)
    store_dir: Path = Path("storage/registry")
    rules_path: Path = TEMPLATE_ROOT / "rules" / "context_rules.yaml"
    defaults: StrategyDefaults = Field(default_factory=StrategyDefaults)
    sink_host: str = "127.0.0.1"
    sink_port: int = Field(default=7900, ge=0, le=65535)
    stale_after_s: float = Field(default=3600.0, gt=0)


class Thresholds(BaseModel):
    shipped_file: ClassVar[str] = "thresholds.yaml"

    step_mean_max_ms: float = 1000.0
    end_to_end_max_ms: float = 12000.0
    boot_min_ms: float = 5000.0
    boot_max_ms: float = 15500.0


class FleetConfig(BaseModel):
    shipped_file: ClassVar[str] = "fleet.yaml"

    gateway_host: str = "127.0.0.1"
    gateway_ports: Dict[TransportKind, int] = Field(default_factory=lambda: {
        TransportKind.TCP: 7700, TransportKind.UDP: 7701, TransportKind.BT_SIM: 7702})
    registry_url: str = "http://127.0.0.1:7800"
    connect_retry_s: float = Field(default=2.0, gt=0)
    hook_host: str = "127.0.0.1"
    hook_port: int = Field(default=7720, ge=0, le=65535)
    churn_period_s: float = Field(default=60.0, gt=0)


class BenchConfig(BaseModel):
    shipped_file: ClassVar[str] = "bench.yaml"

    runs: int = Field(default=30, ge=0)
    transports: List[TransportKind] = Field(default_factory=lambda: [TransportKind.TCP])
    seed: int = 7
    run_timeout_s: float = Field(default=30.0, gt=0)
    boot_band_s: Tuple[float, float] = (0.0, 0.0)
    registry_url: str = "http://127.0.0.1:7800"
    gateway_status_url: str = "http://127.0.0.1:7710"
    fleet: FleetConfig = Field(default_factory=FleetConfig)
    thresholds: Thresholds = Field(default_factory=Thresholds)

    @model_validator(mode="after")
    def _band_ordered(self) -> "BenchConfig":
        low, high = self.boot_band_s
        if low < 0 or low > high:
            raise ValueError(f"boot band must satisfy 0 <= low <= high, got {self.boot_band_s}")
        return self


def load_config(model: Type[T], path: Optional[Path] = None) -> T:
    """
    Load a settings model from a YAML file.

    Args:
        model: The settings model class
        path: YAML file; None means the model's shipped file under config/,
            or the coded defaults when nothing is shipped for it

    Returns:
        The validated settings instance

    Raises:
        ConfigError: If the file is missing, unreadable or invalid
    """
    if path is None:
        shipped = getattr(model, "shipped_file", None)
        if shipped is None or not (CONFIG_DIR / shipped).exists():
            return apply_env_overrides(model())
        path = CONFIG_DIR / shipped

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", path)

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        config = model.model_validate(data)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in config file {path}: {e}", path)
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid settings in {path}: {e}", path)

    logger.debug(f"Loaded {model.__name__} from {path}")
    return apply_env_overrides(config)


def apply_env_overrides(config: T) -> T:
    """Apply environment overrides (CADDOT_REGISTRY) to settings that carry a registry address."""
    registry = os.getenv(REGISTRY_ENV)
    if not registry:
        return config

    fields = type(config).model_fields
    update = {}
    if "registry_url" in fields:
        update["registry_url"] = registry
    if "fleet" in fields:
        update["fleet"] = config.fleet.model_copy(update={"registry_url": registry})
    if update:
        logger.debug(f"{REGISTRY_ENV} overrides registry address: {registry}")
        return config.model_copy(update=update)
    return config


# Load all env files
load_env_files()
