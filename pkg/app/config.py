"""
Harness Configuration

Loads config/settings.yaml into a HarnessConfig. Every setting has a
default matching the shipped file, so a missing file is not an error.
Relative paths resolve against the project root (the parent of config/).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .errors import MalformedDocument
from .memory import DEFAULT_CATEGORIES, LearningMode
from .models import Dimension

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "settings.yaml"


@dataclass
class ProviderConfig:
    """Live provider settings. Credentials are read from the named env vars."""

    endpoint_env: str = "PROVIDER_ENDPOINT"
    model_env: str = "PROVIDER_MODEL"
    api_key_env: str = "PROVIDER_API_KEY"
    timeout: float = 60.0
    retries: int = 1


@dataclass
class HarnessConfig:
    # Paths
    graph_dir: Path = PROJECT_ROOT / "data" / "graph"
    workflow: Path = PROJECT_ROOT / "data" / "workflow.yaml"
    manifest: Path = PROJECT_ROOT / "data" / "manifest.json"
    seed_state: Path = PROJECT_ROOT / "data" / "state" / "seed.json"
    mock_dir: Path = PROJECT_ROOT / "data" / "mock"
    results_dir: Path = PROJECT_ROOT / "results"
    audit_log: Path = PROJECT_ROOT / "logs" / "audit.jsonl"

    # Assembler
    token_budget: int = 1680

    # Experiment
    trials: int = 5
    jobs: int = 1
    record_wall_time: bool = False

    # Evaluator
    weights: Dict[Dimension, float] = field(default_factory=lambda: {
        Dimension.E1: 1.0,
        Dimension.E2: 1.0,
        Dimension.E3: 1.0,
        Dimension.E4: 1.5,
        Dimension.E5: 1.5,
        Dimension.E6: 1.0,
    })
    judge_enabled: bool = True
    judge_dimensions: List[Dimension] = field(default_factory=lambda: [Dimension.E4, Dimension.E6])

    # Provider
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    # Learning
    learning_mode: LearningMode = LearningMode.AUTO
    categories: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_CATEGORIES))

    # Logging
    log_level: str = "INFO"
    log_file: Optional[Path] = PROJECT_ROOT / "logs" / "harness.log"

    @classmethod
    def from_yaml(cls, config_path) -> "HarnessConfig":
        """Load configuration from YAML file."""
        config_path = Path(config_path)
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
        except (UnicodeDecodeError, yaml.YAMLError) as e:
            raise MalformedDocument(config_path, str(e))

        root = config_path.resolve().parent.parent
        defaults = cls()

        def resolve(value, default):
            if value is None:
                return default
            path = Path(value)
            return path if path.is_absolute() else root / path

        paths = config.get("paths", {})
        assembler = config.get("assembler", {})
        experiment = config.get("experiment", {})
        evaluator = config.get("evaluator", {})
        provider = config.get("provider", {})
        learning = config.get("learning", {})
        logging_cfg = config.get("logging", {})

        weights = dict(defaults.weights)
        for key, value in evaluator.get("weights", {}).items():
            weights[Dimension(key)] = float(value)

        judge = evaluator.get("judge", {})
        log_file = logging_cfg.get("file", "logs/harness.log")

        return cls(
            graph_dir=resolve(paths.get("graph_dir"), defaults.graph_dir),
            workflow=resolve(paths.get("workflow"), defaults.workflow),
            manifest=resolve(paths.get("manifest"), defaults.manifest),
            seed_state=resolve(paths.get("seed_state"), defaults.seed_state),
            mock_dir=resolve(paths.get("mock_dir"), defaults.mock_dir),
            results_dir=resolve(paths.get("results_dir"), defaults.results_dir),
            audit_log=resolve(paths.get("audit_log"), defaults.audit_log),
            token_budget=int(assembler.get("token_budget", defaults.token_budget)),
            trials=int(experiment.get("trials", defaults.trials)),
            jobs=int(experiment.get("jobs", defaults.jobs)),
            record_wall_time=bool(experiment.get("record_wall_time", defaults.record_wall_time)),
            weights=weights,
            judge_enabled=bool(judge.get("enabled", defaults.judge_enabled)),
            judge_dimensions=[Dimension(d) for d in judge.get("dimensions", ["E4", "E6"])],
            provider=ProviderConfig(
                endpoint_env=provider.get("endpoint_env", "PROVIDER_ENDPOINT"),
                model_env=provider.get("model_env", "PROVIDER_MODEL"),
                api_key_env=provider.get("api_key_env", "PROVIDER_API_KEY"),
                timeout=float(provider.get("timeout", 60)),
                retries=int(provider.get("retries", 1)),
            ),
            learning_mode=LearningMode(learning.get("mode", defaults.learning_mode.value)),
            categories={**defaults.categories, **learning.get("categories", {})},
            log_level=str(logging_cfg.get("level", defaults.log_level)).upper(),
            log_file=resolve(log_file, None) if log_file else None,
        )


def load_config(config_path=None) -> HarnessConfig:
    """Load settings, falling back to defaults when the file is missing."""
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    if not path.exists():
        logger.warning(f"Config file {path} not found, using defaults")
        return HarnessConfig()
    return HarnessConfig.from_yaml(path)
