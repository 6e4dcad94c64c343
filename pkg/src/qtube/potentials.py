"""Analytic time-independent potentials sampled onto a grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import Grid1D

KINDS = ("tanh_barrier", "free")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "free"
    V0: float = 0.0
    alpha: float = 1.0
    x_minus: float = -1.0
    x_plus: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "tanh_barrier":
            if not self.V0 > 0:
                raise ConfigurationError("tanh_barrier needs V0 > 0")
            if not self.alpha > 0:
                raise ConfigurationError("tanh_barrier needs alpha > 0")
            if not self.x_minus < self.x_plus:
                raise ConfigurationError("tanh_barrier needs x_minus < x_plus")


def tanh_barrier(x, V0, alpha, x_minus, x_plus):
    """Smoothed square barrier ``V0/2 [tanh(a(x - x-)) - tanh(a(x - x+))]``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * V0 * (np.tanh(alpha * (x - x_minus)) - np.tanh(alpha * (x - x_plus)))


def sample_potential(spec: PotentialSpec, grid: Grid1D) -> np.ndarray:
    if spec.kind == "free":
        return np.zeros(grid.n_points)
    return tanh_barrier(grid.x, spec.V0, spec.alpha, spec.x_minus, spec.x_plus)
