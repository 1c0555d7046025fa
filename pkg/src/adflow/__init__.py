"""Adaptive mixing-ratio-indexed flow matching for target-source extraction.

Deterministic transport between a background signal and a target source,
trained with a conditional flow-matching objective, seeded at inference by a
mixing-ratio estimate and integrated only over the residual interval.
"""

from . import cli, errors, flowpath, metrics, mrnet, sampler, signal, velnet

__all__ = ["cli", "errors", "flowpath", "metrics", "mrnet", "sampler",
           "signal", "velnet"]

__version__ = "0.1.0"
