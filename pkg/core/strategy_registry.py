"""Strategy Registry for the estimator menu"""
from typing import Any, Callable, Dict, List, Optional
from pathlib import Path
import importlib
import inspect
import threading
import yaml
from dataclasses import dataclass
from loguru import logger

from core.errors import ConfigError


@dataclass
class StrategyConfig:
    """Configuration for a registered strategy"""
    name: str
    handler: str  # e.g., "estimators.strategies.neyman"
    description: str
    uses_model: bool = True
    uses_constants: bool = False
    c_invariant: bool = True
    compare: bool = False


class StrategyRegistry:
    """Registry mapping strategy names to their estimator functions"""

    def __init__(self):
        """Initialize the strategy registry"""
        self._strategies: Dict[str, StrategyConfig] = {}
        self._handlers: Dict[str, Callable] = {}
        self._lock = threading.Lock()
        self._config_file = Path(__file__).parent.parent / "config" / "strategies.yaml"

    def register_strategy(
        self,
        name: str,
        handler: str,
        description: str = "",
        uses_model: bool = True,
        uses_constants: bool = False,
        c_invariant: bool = True,
        compare: bool = False,
    ) -> None:
        """
        Register a strategy

        Args:
            name: Unique strategy key (e.g., "mim")
            handler: Full import path to the estimator function
            description: Human-readable description
            uses_model: Whether the F/L model form applies
            uses_constants: Whether imputation constants are passed to the handler
            c_invariant: Whether results are invariant to the imputation constants
            compare: Whether the strategy is a row of the compare table
        """
        if name in self._strategies:
            logger.warning(f"Strategy '{name}' already registered, overwriting")
            self._handlers.pop(name, None)

        self._strategies[name] = StrategyConfig(
            name=name,
            handler=handler,
            description=description,
            uses_model=uses_model,
            uses_constants=uses_constants,
            c_invariant=c_invariant,
            compare=compare,
        )
        logger.debug(f"Registered strategy: {name} -> {handler}")

    def get_config(self, name: str) -> StrategyConfig:
        self._ensure_loaded()
        if name not in self._strategies:
            raise ConfigError(f"unknown strategy '{name}' (known: {', '.join(self.list_strategies())})")
        return self._strategies[name]

    def get_handler(self, name: str) -> Callable:
        """
        Get the estimator function (imported on first use)

        Args:
            name: Strategy name

        Returns:
            The handler callable
        """
        config = self.get_config(name)
        if name not in self._handlers:
            module_path, func_name = config.handler.rsplit(".", 1)
            try:
                module = importlib.import_module(module_path)
                self._handlers[name] = getattr(module, func_name)
            except (ImportError, AttributeError) as e:
                raise ConfigError(f"strategy '{name}': cannot import {config.handler}: {e}") from e
        return self._handlers[name]

    def call(self, name: str, **available: Any):
        """
        Call a strategy handler with the subset of keyword arguments it accepts

        Args:
            name: Strategy name
            **available: Every argument the caller can offer (data, model, c, ...)

        Returns:
            Whatever the handler returns (an EstimateResult)
        """
        handler = self.get_handler(name)
        params = inspect.signature(handler).parameters
        kwargs = {key: value for key, value in available.items() if key in params}
        return handler(**kwargs)

    def list_strategies(self, compare_only: bool = False) -> List[str]:
        """
        List registered strategy names in file order

        Args:
            compare_only: Only return the rows of the compare table
        """
        self._ensure_loaded()
        return [
            name for name, config in self._strategies.items()
            if not compare_only or config.compare
        ]

    def load_from_yaml(self, config_path: Optional[Path] = None) -> None:
        """
        Load strategy configurations from YAML file

        Args:
            config_path: Path to YAML config file (defaults to config/strategies.yaml)
        """
        config_path = config_path or self._config_file

        if not config_path.exists():
            raise ConfigError(f"strategy config file not found: {config_path}")

        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)

        if not data or "strategies" not in data:
            raise ConfigError(f"no strategies found in {config_path}")

        for entry in data["strategies"]:
            try:
                self.register_strategy(
                    name=entry["name"],
                    handler=entry["handler"],
                    description=entry.get("description", ""),
                    uses_model=entry.get("uses_model", True),
                    uses_constants=entry.get("uses_constants", False),
                    c_invariant=entry.get("c_invariant", True),
                    compare=entry.get("compare", False),
                )
            except KeyError as e:
                raise ConfigError(f"strategy entry in {config_path} missing field {e}") from e

        logger.debug(f"Loaded {len(data['strategies'])} strategies from {config_path}")

    def _ensure_loaded(self) -> None:
        with self._lock:
            if not self._strategies:
                self.load_from_yaml()


# Global registry instance
strategy_registry = StrategyRegistry()
