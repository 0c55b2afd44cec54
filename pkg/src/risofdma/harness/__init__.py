"""Dataset persistence, sweeps, figures and the command-line interface."""
from .dataset import Dataset, generate_dataset, load_dataset, sample_dataset
from .experiments import ExperimentResult, MetricRow, OracleCache, run_experiment

__all__ = [
    "Dataset",
    "ExperimentResult",
    "MetricRow",
    "OracleCache",
    "generate_dataset",
    "load_dataset",
    "run_experiment",
    "sample_dataset",
]
