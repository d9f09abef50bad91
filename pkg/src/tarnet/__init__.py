"""Low-Tucker-rank autoregressive networks for high-dimensional sequences."""

__version__ = "0.1.0"
