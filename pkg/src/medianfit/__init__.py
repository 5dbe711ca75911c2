"""Evolutionary hyperparameter search for regression MLPs with a fit-to-median objective."""

from ._backend import available_backends, backend_name, use_backend

__version__ = "0.1.0"

__all__ = ["available_backends", "backend_name", "use_backend", "__version__"]
