"""Noise-robust one-class intrusion detection on continuous-time dynamic
graphs: a temporal graph encoder with a deterministic SVDD head (baseline)
and a probabilistic Gaussian head trained with negative sampling."""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
