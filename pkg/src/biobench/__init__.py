"""Benchmark workbench for semi-supervised biotype stratification algorithms."""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
