"""Patch-attention time-series forecaster with a frequency branch,
exogenous variable tokens, and robustness training.

The heavy lifting lives in the compiled extension; this package re-exports
its surface. Config arguments are plain dicts (or JSON strings) and absent
keys keep the library defaults.
"""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    DivergedError,
    Model,
    ShapeError,
    amplitude_phase,
    compute_metrics,
    default_config,
    dft,
    dft_direct,
    reconstruct,
    synth,
    synth_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergedError",
    "Model",
    "ShapeError",
    "amplitude_phase",
    "compute_metrics",
    "default_config",
    "dft",
    "dft_direct",
    "reconstruct",
    "synth",
    "synth_csv",
    "__version__",
]
