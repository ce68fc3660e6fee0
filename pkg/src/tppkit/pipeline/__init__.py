"""Config-driven training, evaluation, grid search and reporting."""

from .config import (
    DataConfig,
    GridSpec,
    OptimConfig,
    RunnerConfig,
    apply_overrides,
    config_from_dict,
    config_with,
    load_config,
    switch_model,
)
from .evaluate import evaluate, git_blob_sha1, horizon_windows
from .gridsearch import GridResult, grid_cells, grid_search
from .optim import Adam
from .report import write_report
from .runner import benchmark, generate_synthetic, run_experiment
from .train import TrainResult, load_checkpoint, save_checkpoint, train

__all__ = [
    "Adam", "DataConfig", "GridResult", "GridSpec", "OptimConfig", "RunnerConfig", "TrainResult",
    "apply_overrides", "benchmark", "config_from_dict", "config_with", "evaluate", "generate_synthetic",
    "git_blob_sha1", "grid_cells", "grid_search", "horizon_windows", "load_checkpoint", "load_config",
    "run_experiment", "save_checkpoint", "switch_model", "train", "write_report",
]
