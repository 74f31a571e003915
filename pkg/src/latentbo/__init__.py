"""Latent-space Bayesian optimisation with VAEs, sequential domain reduction
and random embeddings, plus the harness to benchmark them."""

__version__ = "0.1.0"

from .errors import ConfigError, InputError, LatentBOError, NumericalError  # noqa: E402

__all__ = ["__version__", "LatentBOError", "ConfigError", "InputError", "NumericalError"]
