"""Online per-feature normalization with running moments and a variance floor."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NumericFault

DEFAULT_BETA = 0.99999
DEFAULT_EPS = 1e-3


@dataclass
class RunningMoments:
    """Exponentially weighted mean and variance of one feature.

    Starts at mean 0, variance 1. A frozen instance normalizes with its stored
    statistics and never updates them.
    """

    mu: float = 0.0
    var: float = 1.0
    beta: float = DEFAULT_BETA
    eps: float = DEFAULT_EPS
    frozen: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.var < 0.0:
            raise ValueError("variance must be non-negative")

    @property
    def scale(self):
        return max(self.eps, math.sqrt(self.var))


def observe_and_normalize(m: RunningMoments, h: float) -> float:
    """Update the moments with ``h`` (unless frozen) and return the normalized value.

    The variance update uses the new mean in its first factor and the old mean
    in the second; the result is clamped at zero.
    """
    if not math.isfinite(h):
        raise NumericFault("non-finite feature value", value=h)
    if not m.frozen:
        mu_old = m.mu
        mu_new = m.beta * mu_old + (1.0 - m.beta) * h
        var = m.beta * m.var + (1.0 - m.beta) * (mu_new - h) * (mu_old - h)
        m.mu = mu_new
        m.var = var if var > 0.0 else 0.0
    return (h - m.mu) / m.scale


def normalize_stream(m: RunningMoments, hs):
    """Apply :func:`observe_and_normalize` along a sequence; returns a list."""
    return [observe_and_normalize(m, float(h)) for h in hs]
