"""Ultrasound-assisted wind-noise reduction: simulation, features, datasets,
models, metrics and the pipeline CLI."""

__version__ = "0.1.0"

__all__ = ["__version__"]
