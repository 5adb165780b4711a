from .config import ConfigError, ExperimentConfig, load_config
from .runner import run_eval, run_sweep, run_train

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run_eval", "run_sweep", "run_train"]
