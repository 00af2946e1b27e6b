"""Antiferromagnetic Potts model on d-ary trees: exact marginals, ratio dynamics
and the two-step map analysis."""

__version__ = "0.1.0"

from .model import ModelParams, ParameterError, Regime, critical_p, critical_params, new_params, regime
from .boundary import BoundarySpec

__all__ = ["ModelParams", "ParameterError", "Regime", "critical_p", "critical_params",
           "new_params", "regime", "BoundarySpec", "__version__"]
