"""Wavelet-decoupled cross-view interaction network for stereo low-light
image enhancement: transforms, building blocks, losses, data pipeline,
training loop and CLI."""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
