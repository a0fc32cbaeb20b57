"""Deterministic federated-learning simulator with solution-simplex training."""

from .federation import FederationConfig, run_experiment
from .kernels import BACKEND as KERNEL_BACKEND

__all__ = ["FederationConfig", "run_experiment", "KERNEL_BACKEND"]
__version__ = "0.1.0"
