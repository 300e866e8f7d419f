"""Execution statistics for a two-queue order book model.

Semi-analytic first-passage and renewal-chain results, a Monte Carlo
simulator to check them, and a batch command line front-end.
"""

__version__ = "0.1.0"

from .model import ModelParams, ParameterError, ResetDistribution, StripGeometry  # noqa: E402

__all__ = ["ModelParams", "ParameterError", "ResetDistribution", "StripGeometry",
           "__version__"]
