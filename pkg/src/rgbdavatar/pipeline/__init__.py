"""End-to-end reconstruction pipeline: dataset handling, staged runs, CLI."""

from .config import PipelineConfig, load_config, save_config
from .synthetic import generate_synthetic_dataset, load_manifest
from .run import (
    RunReport,
    StageError,
    ablate_frames,
    load_report,
    run_pipeline,
    save_report,
)

__all__ = [
    "PipelineConfig",
    "load_config",
    "save_config",
    "generate_synthetic_dataset",
    "load_manifest",
    "RunReport",
    "StageError",
    "run_pipeline",
    "ablate_frames",
    "save_report",
    "load_report",
]
