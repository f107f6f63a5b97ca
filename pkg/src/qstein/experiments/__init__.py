"""Variance study, radius table and toy optimizer comparison."""
from .logreg import LogRegConfig, run_logreg_variance, run_radius_curve
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .report import ExperimentReport
from .training import default_toy_configs, run_toy_training

__all__ = [
    "LogRegConfig",
    "run_logreg_variance",
    "run_radius_curve",
    "OptimizerConfig",
    "OptimizerState",
    "optimizer_step",
    "ExperimentReport",
    "default_toy_configs",
    "run_toy_training",
]
