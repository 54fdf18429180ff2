"""Randomized exploration for cooperative parallel linear MDPs."""

from .config import ExperimentConfig, parse_config, to_dict
from .coordination import run_experiment

__all__ = ["ExperimentConfig", "parse_config", "to_dict", "run_experiment"]
