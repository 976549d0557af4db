from .common.config_service import ConfigService
from .common.errors import HdrmError
from .common.run_config import RunConfig
from .training_service import Ablation, HdrmModel, Stage, SweepKind, TrainingService

__all__ = [
    "Ablation",
    "ConfigService",
    "HdrmError",
    "HdrmModel",
    "RunConfig",
    "Stage",
    "SweepKind",
    "TrainingService",
]
