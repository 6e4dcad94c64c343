"""Uniform periodic 1D grid, trapezoidal quadrature and spectral derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, RangeError


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid ``x_j = x_min + j*dx`` for ``j = 0 .. n_points-1``.

    The grid is periodic for the spectral transform, so ``x_max`` itself is
    not a sample point: ``dx = (x_max - x_min) / n_points``.
    """

    x_min: float
    x_max: float
    n_points: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_points)
        if n < 8 or n & (n - 1):
            raise ConfigurationError(f"n_points must be a power of two >= 8, got {self.n_points}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise ConfigurationError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "n_points", n)
        x = self.x_min + self.dx * np.arange(n)
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=self.dx)
        x.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / (self.n_points * self.dx)

    def contains(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        return (pos >= self.x_min) & (pos <= self.x_max)

    def index_of(self, pos: float) -> int:
        """Index of the sample point nearest to ``pos``."""
        j = int(round((pos - self.x_min) / self.dx))
        return min(max(j, 0), self.n_points - 1)


def _check_values(grid: Grid1D, values) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != (grid.n_points,):
        raise ValueError(f"field has shape {values.shape}, grid expects ({grid.n_points},)")
    return values


def _periodic(values) -> np.ndarray:
    # sample at x_max equals sample at x_min
    return np.append(values, values[:1])


def interpolate(grid: Grid1D, values, pos):
    """Linear interpolation of a sampled real field at ``pos`` (scalar or array).

    Fields are periodic, so any ``pos`` in ``[x_min, x_max]`` is valid.
    """
    pos = np.asarray(pos, dtype=float)
    if not np.all(grid.contains(pos)):
        raise RangeError(f"position outside grid [{grid.x_min}, {grid.x_max}]")
    fe = _periodic(_check_values(grid, values))
    return _interp_ext(grid, fe, pos)


def _interp_ext(grid, fe, pos):
    s = (pos - grid.x_min) / grid.dx
    j = np.minimum(np.floor(s).astype(np.intp), grid.n_points - 1)
    w = s - j
    out = (1.0 - w) * fe[j] + w * fe[j + 1]
    return out if out.ndim else float(out)


def integrate(grid: Grid1D, values, a: float | None = None, b: float | None = None) -> float:
    """Trapezoidal integral of a sampled real field over ``[a, b]``.

    Partial end cells are handled by linearly interpolating the field at
    ``a`` and ``b``, so the result is continuous in the limits. ``None``
    selects the corresponding end of the grid; the field is treated as
    periodic, so the full-grid integral is ``dx * sum(values)``.
    """
    fe = _periodic(_check_values(grid, values))
    a = grid.x_min if a is None else float(a)
    b = grid.x_max if b is None else float(b)
    if a > b:
        raise ValueError(f"integration limits reversed: a={a} > b={b}")
    tol = 1e-12 * max(1.0, abs(grid.x_min), abs(grid.x_max))
    if a < grid.x_min - tol or b > grid.x_max + tol:
        raise RangeError(f"interval [{a}, {b}] outside grid [{grid.x_min}, {grid.x_max}]")
    a = min(max(a, grid.x_min), grid.x_max)
    b = min(max(b, grid.x_min), grid.x_max)
    if a == b:
        return 0.0

    dx = grid.dx
    sa = (a - grid.x_min) / dx
    sb = (b - grid.x_min) / dx
    # first and last whole sample points strictly inside (a, b)
    ja = int(np.floor(sa)) + 1
    jb = int(np.ceil(sb)) - 1
    fa = _interp_ext(grid, fe, np.float64(a))
    fb = _interp_ext(grid, fe, np.float64(b))
    if ja > jb:
        return 0.5 * (fa + fb) * (b - a)
    xa = grid.x_min + ja * dx
    xb = grid.x_min + jb * dx
    inner = fe[ja : jb + 1]
    total = 0.5 * (fa + inner[0]) * (xa - a) + 0.5 * (inner[-1] + fb) * (b - xb)
    if jb > ja:
        total += dx * (inner.sum() - 0.5 * (inner[0] + inner[-1]))
    return float(total)


def spectral_derivative(grid: Grid1D, values, order: int = 1) -> np.ndarray:
    """``d^order f / dx^order`` via FFT, multiplication by ``(ik)^order`` and inverse FFT."""
    f = _check_values(grid, values)
    return np.fft.ifft(((1j * grid.k) ** order) * np.fft.fft(f))
