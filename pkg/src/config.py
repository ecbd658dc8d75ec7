import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from src.core.exceptions import ConfigurationError, ResourceNotFoundError


logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"environment variable {name} must be an integer, got '{raw}'")


class Config:
    """Run configuration.

    Precedence, lowest first: built-in defaults, ``VQDDM_*`` environment
    variables, a config file (YAML or key=value), explicit overrides.
    """

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """Initialize configuration.

        Args:
            config_path: Path to a YAML (``.yaml``/``.yml``) or key=value config file.
            overrides: Dotted ``section.key`` values applied last, usually from flags.
        """
        self._config: Dict[str, Any] = {}

        # Default configuration
        self._config["logging"] = {
            "level": os.environ.get("VQDDM_LOG_LEVEL", "WARNING"),
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        }

        self._config["schedule"] = {
            "T": _env_int("VQDDM_T", 4000),
            "s": 0.008,
            "beta_cap": 0.999,
        }

        self._config["vq"] = {
            "K": 64,
            "d": 16,
            "patch": 4,
            "beta_commit": 0.25,
            "steps": 500,
            "lr": 0.01,
            "batch": 0,
            "fine_tune_lr": 1e-4,
        }

        self._config["refit"] = {
            "P": 20000,
            "K_target": 64,
            "mc_chain_len": 200,
            "kmeans_iters": 100,
            "kmeans_tol": 1e-6,
            "fine_tune_steps": 0,
        }

        self._config["denoiser"] = {
            "embed_dim": 64,
            "time_dim": 64,
            "hidden": [256, 256],
            "time_base": 10000.0,
        }

        self._config["training"] = {
            "steps": 20000,
            "batch": 128,
            "lr": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "importance_sampling": True,
        }

        self._config["sampling"] = {
            "count": 16,
        }

        self._config["runtime"] = {
            "threads": _env_int("VQDDM_THREADS", 0),
        }

        # Load configuration from file if provided
        if config_path:
            config_file = Path(config_path)
            if not config_file.exists():
                raise ResourceNotFoundError(f"config file not found: {config_path}")
            with open(config_file, "r") as f:
                text = f.read()
            if config_file.suffix.lower() in (".yaml", ".yml"):
                try:
                    file_config = yaml.safe_load(text)
                except yaml.YAMLError as e:
                    raise ConfigurationError(f"cannot parse {config_path}: {e}")
                if file_config and not isinstance(file_config, dict):
                    raise ConfigurationError(f"{config_path} must hold a mapping of sections")
                for section, values in (file_config or {}).items():
                    if section not in self._config:
                        raise ConfigurationError(f"unknown config section '{section}' in {config_path}")
                    if not isinstance(values, dict):
                        raise ConfigurationError(f"config section '{section}' must be a mapping")
            else:
                file_config = self._parse_key_values(text, config_path)
            if file_config:
                self._update_recursive(self._config, file_config)

        if overrides:
            self._update_recursive(self._config, self._nest(overrides))

        # Configure logging
        self._configure_logging()

    @staticmethod
    def _parse_value(raw: str) -> Any:
        try:
            return yaml.safe_load(raw)
        except yaml.YAMLError:
            return raw

    def _parse_key_values(self, text: str, source: str) -> Dict[str, Any]:
        """Parse ``section.key = value`` lines; ``#`` starts a comment."""
        flat: Dict[str, Any] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"{source}:{number}: expected key=value, got '{line}'")
            flat[key.strip()] = self._parse_value(value.strip())
        return self._nest(flat)

    def _nest(self, flat: Dict[str, Any]) -> Dict[str, Any]:
        nested: Dict[str, Any] = {}
        for key, value in flat.items():
            section, dot, name = key.partition(".")
            if not dot:
                raise ConfigurationError(f"config key '{key}' must have the form section.key")
            if section not in self._config:
                raise ConfigurationError(f"unknown config section '{section}'")
            nested.setdefault(section, {})[name] = value
        return nested

    def _update_recursive(self, original: Dict[str, Any], update: Dict[str, Any]) -> None:
        """Update dictionary recursively.

        Args:
            original: Original dictionary to update.
            update: Dictionary with updates.
        """
        for key, value in update.items():
            if key in original and isinstance(original[key], dict) and isinstance(value, dict):
                self._update_recursive(original[key], value)
            else:
                original[key] = value

    def _configure_logging(self) -> None:
        """Configure logging."""
        level = str(self._config["logging"]["level"]).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ConfigurationError(f"unknown log level '{level}'")
        logging.basicConfig(
            level=level,
            format=self._config["logging"]["format"],
            force=True,
        )

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value.

        Args:
            key: Configuration key.
            default: Default value if key not found.

        Returns:
            Configuration value.
        """
        return self._config.get(key, default)

    def __getitem__(self, key: str) -> Any:
        return self._config[key]

    def __contains__(self, key: str) -> bool:
        return key in self._config

    def get_all(self) -> Dict[str, Any]:
        """Get all configuration as a dictionary."""
        return self._config

    def section(self, name: str, model: Type[ModelT], **extra: Any) -> ModelT:
        """Validate a section against a pydantic model.

        Raises:
            ConfigurationError: If a value is missing or out of range.
        """
        values = {key: value for key, value in self._config[name].items() if key in model.model_fields}
        values.update(extra)
        try:
            return model(**values)
        except PydanticValidationError as e:
            first = e.errors()[0]
            key = ".".join([name] + [str(part) for part in first["loc"]])
            raise ConfigurationError(f"invalid {key}: {first['msg']}")

    @property
    def config_hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON configuration.

        Logging and runtime sections are excluded; they never change results.
        """
        hashed = {key: value for key, value in self._config.items() if key not in ("logging", "runtime")}
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
