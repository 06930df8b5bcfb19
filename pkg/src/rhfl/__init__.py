"""Desk-scale simulator of noise-robust federated learning with heterogeneous clients."""
from .config import ExperimentSpec, FederationConfig, load_config
from .errors import RHFLError
from .experiment import ablation_sweep, run_experiment
from .federation import run_rhfl_plus

__version__ = "0.1.0"

__all__ = [
    "ExperimentSpec", "FederationConfig", "RHFLError", "ablation_sweep", "load_config",
    "run_experiment", "run_rhfl_plus", "__version__",
]
