"""Mixing-ratio-indexed conditional path between background and target.

The path mean interpolates background -> target as tau runs 0 -> 1; the scale
interpolates sigma_max -> sigma_min. With both scales at 0 the path collapses
to its mean and the target velocity is the constant s1 - b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, SingularityError


@dataclass(frozen=True)
class PathParams:
    sigma_min: float = 0.0
    sigma_max: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.sigma_min <= self.sigma_max:
            raise ParameterError("need 0 <= sigma_min <= sigma_max")


@dataclass(frozen=True)
class PathState:
    """A point on the trajectory together with its tau coordinate."""

    x: np.ndarray
    tau: float

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=np.float64)
        if not 0.0 <= self.tau <= 1.0:
            raise ParameterError("tau must lie in [0, 1]")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("state contains non-finite values")
        object.__setattr__(self, "x", arr)


def _pair(b, s1):
    b = np.asarray(b, dtype=np.float64)
    s1 = np.asarray(s1, dtype=np.float64)
    if b.shape != s1.shape:
        raise ShapeError(f"shape mismatch: {b.shape} vs {s1.shape}")
    return b, s1


def path_mean(b, s1, tau: float) -> np.ndarray:
    """(1-tau)*b + tau*s1."""
    b, s1 = _pair(b, s1)
    if not 0.0 <= tau <= 1.0:
        raise ParameterError("tau must lie in [0, 1]")
    return (1.0 - tau) * b + tau * s1


def path_sigma(params: PathParams, tau: float) -> float:
    """(1-tau)*sigma_max + tau*sigma_min."""
    if not 0.0 <= tau <= 1.0:
        raise ParameterError("tau must lie in [0, 1]")
    return (1.0 - tau) * params.sigma_max + tau * params.sigma_min


def sample_path_state(b, s1, tau: float, params: PathParams,
                      seed: int = 0) -> PathState:
    """Draw x ~ N(mean, sigma^2 I); returns the mean exactly when sigma == 0."""
    mu = path_mean(b, s1, tau)
    sigma = path_sigma(params, tau)
    if sigma == 0.0:
        return PathState(x=mu, tau=tau)
    z = np.random.default_rng(seed).standard_normal(mu.shape)
    return PathState(x=mu + sigma * z, tau=tau)


def target_velocity(state: PathState, b, s1, params: PathParams) -> np.ndarray:
    """Closed-form velocity (sigma'/sigma)(x - mu) + (s1 - b).

    With sigma_max == sigma_min (including both 0) the ratio term is defined
    as 0 and the result is exactly s1 - b. A genuinely shrinking scale that
    reaches 0 at the evaluation point is a singularity, not clamped.
    """
    b, s1 = _pair(b, s1)
    diff = s1 - b
    sigma_prime = params.sigma_min - params.sigma_max
    if sigma_prime == 0.0:
        return diff
    sigma = path_sigma(params, state.tau)
    if sigma == 0.0:
        raise SingularityError(
            f"sigma(tau={state.tau}) = 0 with shrinking scale")
    mu = path_mean(b, s1, state.tau)
    return (sigma_prime / sigma) * (state.x - mu) + diff


def analytic_state(b, s1, z, tau: float, params: PathParams) -> PathState:
    """Closed-form trajectory x(tau) = mu_tau + sigma_tau * z for fixed z.

    For fixed z this curve satisfies dx/dtau = target_velocity exactly, which
    makes it the integration oracle for the sampler tests.
    """
    b, s1 = _pair(b, s1)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != b.shape:
        raise ShapeError(f"noise shape {z.shape} does not match {b.shape}")
    return PathState(x=path_mean(b, s1, tau) + path_sigma(params, tau) * z,
                     tau=tau)
