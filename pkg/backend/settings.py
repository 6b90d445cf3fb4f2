"""
Application settings: config/settings.yaml validated into pydantic models.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from engine.errors import ParameterError
from training.losses import DEFAULT_LAMBDA
from training.trainer import DEFAULT_LR

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = Path(__file__).resolve().parent.parent / "config" / "settings.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True, allow_inf_nan=False)


class LoggingSettings(_Section):
    level: str = "INFO"
    file: str = "logs/spixreg.log"


class LossSettings(_Section):
    lam: float = Field(DEFAULT_LAMBDA, ge=0.0, alias="lambda")
    m: float = Field(0.0, ge=0.0)
    squared: bool = False


class EncoderSettings(_Section):
    levels: int = Field(3, ge=2)
    widths: Tuple[int, ...] = (8, 16, 32)
    learned_levels: int = Field(2, ge=0)
    embedding: int = Field(8, ge=1)
    temperature: float = Field(1.0, gt=0.0)


class TrainSettings(_Section):
    lr: float = Field(DEFAULT_LR, gt=0.0)
    epochs: int = Field(10, ge=1)
    seed: int = 0


class DirectFitSettings(_Section):
    levels: int = Field(1, ge=1)
    steps: int = Field(300, ge=1)
    lr: float = Field(0.1, gt=0.0)
    m: float = Field(0.0, ge=0.0)
    seed: int = 0


class CoarsenSettings(_Section):
    radius: float = Field(4.0, ge=0.0)
    epsilon: float = Field(2.0, ge=0.0)


class SlicSettings(_Section):
    n: int = Field(100, ge=1)
    compactness: float = Field(10.0, ge=0.0)
    iterations: int = Field(10, ge=1)


class EvaluationSettings(_Section):
    radius: Union[int, str] = "auto"
    variant: str = "two_sided"


class ExperimentSettings(_Section):
    workers: int = Field(2, ge=1)
    runs: int = Field(5, ge=1)
    size: Tuple[int, int] = (64, 64)
    classes: int = Field(3, ge=2)
    train_images: int = Field(200, ge=1)
    val_images: int = Field(50, ge=1)
    test_images: int = Field(50, ge=1)
    lr: float = Field(0.01, gt=0.0)
    epochs: int = Field(8, ge=1)


class Settings(_Section):
    logging: LoggingSettings = LoggingSettings()
    loss: LossSettings = LossSettings()
    encoder: EncoderSettings = EncoderSettings()
    train: TrainSettings = TrainSettings()
    direct_fit: DirectFitSettings = DirectFitSettings()
    coarsen: CoarsenSettings = CoarsenSettings()
    slic: SlicSettings = SlicSettings()
    evaluation: EvaluationSettings = EvaluationSettings()
    experiment: ExperimentSettings = ExperimentSettings()


def create_default_settings() -> Settings:
    logger.info("Using default settings")
    return Settings()


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """Read settings YAML; a missing or unreadable file falls back to defaults.

    A file that parses but holds invalid values is an error.
    """
    settings_path = Path(path) if path is not None else Path(os.getenv("SPIXREG_SETTINGS", DEFAULT_SETTINGS_PATH))
    if not settings_path.exists():
        logger.warning(f"Settings file not found: {settings_path}")
        return create_default_settings()
    try:
        with open(settings_path, 'r', encoding='utf-8') as f:
            raw: Dict[str, Any] = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.warning(f"Failed to read settings {settings_path}: {e}")
        return create_default_settings()

    try:
        settings = Settings.model_validate(raw)
    except ValidationError as e:
        raise ParameterError(f"Invalid settings in {settings_path}: {e}") from e
    logger.debug(f"Settings loaded from {settings_path}")
    return settings
