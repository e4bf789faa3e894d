"""Bayesian profile regression for censored, left-truncated survival outcomes."""
from .config import AdaptationSchedule, Ladder, PostprocessConfig, RunConfig, Schedule, load_config
from .errors import BPRMError
from .model import ClusterParams, Dataset, GlobalParams, Individual, PriorConfig, validate_dataset
from .sample import PosteriorSample
from .sampler import run_chain
from .tempering import run_parallel_tempering, swap_log_probability

__version__ = "0.1.0"

__all__ = [
    "AdaptationSchedule", "BPRMError", "ClusterParams", "Dataset", "GlobalParams", "Individual",
    "Ladder", "PosteriorSample", "PostprocessConfig", "PriorConfig", "RunConfig", "Schedule",
    "load_config", "run_chain", "run_parallel_tempering", "swap_log_probability", "validate_dataset",
]
