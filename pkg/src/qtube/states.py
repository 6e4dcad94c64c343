"""Initial wave functions and the hydrodynamic fields derived from them.

Natural units with hbar = 1 throughout; the mass is an explicit argument
wherever it enters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateStateError, NumericalConsistencyError
from .grid import Grid1D, integrate, spectral_derivative

HBAR = 1.0


@dataclass(frozen=True)
class GaussianSpec:
    """One Gaussian packet: centroid ``x0``, momentum ``p0``, width ``sigma0``, weight ``c``."""

    x0: float
    p0: float
    sigma0: float
    c: complex = 1.0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ConfigurationError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes ``psi`` sampled on ``grid`` at time ``t``."""

    grid: Grid1D
    psi: np.ndarray = field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (self.grid.n_points,):
            raise ValueError(f"psi has shape {psi.shape}, grid expects ({self.grid.n_points},)")
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)

    def norm(self) -> float:
        return integrate(self.grid, density(self))

    def with_psi(self, psi, t=None) -> "WaveFunction":
        return replace(self, psi=psi, t=self.t if t is None else t)


def _normalized(grid: Grid1D, psi: np.ndarray) -> np.ndarray:
    norm = integrate(grid, np.abs(psi) ** 2)
    if not norm > 0 or not np.isfinite(norm):
        raise DegenerateStateError("wave function has zero norm on this grid")
    return psi / np.sqrt(norm)


def _packet_values(spec: GaussianSpec, grid: Grid1D) -> np.ndarray:
    lo, hi = spec.x0 - 6 * spec.sigma0, spec.x0 + 6 * spec.sigma0
    if lo < grid.x_min or hi > grid.x_max:
        raise ConfigurationError(
            f"packet at x0={spec.x0} with sigma0={spec.sigma0} does not fit inside "
            f"[{grid.x_min}, {grid.x_max}] (needs 6 sigma0 clearance)"
        )
    dx = grid.x - spec.x0
    return np.exp(-(dx**2) / (4 * spec.sigma0**2) + 1j * spec.p0 * dx / HBAR)


def gaussian_packet(spec: GaussianSpec, grid: Grid1D) -> WaveFunction:
    """Single Gaussian packet, normalized numerically on the grid (the weight ``c`` is ignored)."""
    return WaveFunction(grid, _normalized(grid, _packet_values(spec, grid)), 0.0)


def superpose(specs: Sequence[GaussianSpec], grid: Grid1D) -> WaveFunction:
    """Coherent sum ``A0 * sum(c_i psi_i)``, with ``A0`` fixed by unit norm.

    Each ``psi_i`` is normalized on its own before weighting, so the
    weights ``c_i`` act on unit-norm packets.
    """
    if not specs:
        raise ValueError("superpose needs at least one GaussianSpec")
    total = np.zeros(grid.n_points, dtype=complex)
    for spec in specs:
        total += complex(spec.c) * _normalized(grid, _packet_values(spec, grid))
    return WaveFunction(grid, _normalized(grid, total), 0.0)


def normalization_constant(specs: Sequence[GaussianSpec], grid: Grid1D) -> float:
    """``A0`` such that ``A0 * sum(c_i psi_i)`` has unit norm (unit-norm ``psi_i``)."""
    total = sum(complex(s.c) * _normalized(grid, _packet_values(s, grid)) for s in specs)
    return 1.0 / np.sqrt(integrate(grid, np.abs(total) ** 2))


def density(psi: WaveFunction) -> np.ndarray:
    return np.abs(psi.psi) ** 2


def current_density(psi: WaveFunction, mass: float = 1.0, residue_tol: float = 1e-10) -> np.ndarray:
    """``J = hbar/(2 m i) (psi* dpsi - psi dpsi*)`` with a spectral derivative."""
    dpsi = spectral_derivative(psi.grid, psi.psi)
    bracket = np.conj(psi.psi) * dpsi - psi.psi * np.conj(dpsi)
    j = HBAR / (2j * mass) * bracket
    scale = max(np.max(np.abs(j)), 1.0)
    if np.max(np.abs(j.imag)) > residue_tol * scale:
        raise NumericalConsistencyError("current density has a non-negligible imaginary part")
    return j.real


def velocity_field(psi: WaveFunction, rho_floor: float | None = None, mass: float = 1.0) -> np.ndarray:
    """Bohmian velocity ``v = J / rho``.

    Below ``rho_floor`` (default ``1e-12 * max rho``) the quotient is not
    trusted; those points are filled by linear interpolation between the
    nearest valid neighbours (constant extrapolation past the ends).
    """
    rho = density(psi)
    if rho_floor is None:
        rho_floor = 1e-12 * rho.max()
    if not rho_floor > 0:
        raise DegenerateStateError("density is identically zero")
    ok = rho >= rho_floor
    if not ok.any():
        raise DegenerateStateError("every grid point lies below rho_floor")
    j = current_density(psi, mass)
    v = np.empty_like(rho)
    v[ok] = j[ok] / rho[ok]
    if not ok.all():
        x = psi.grid.x
        v[~ok] = np.interp(x[~ok], x[ok], v[ok])
    return v


def restricted_probability(psi: WaveFunction, a: float | None = None, b: float | None = None) -> float:
    """Probability enclosed in ``[a, b]``; ``None`` means the grid edge."""
    return integrate(psi.grid, density(psi), a, b)


def expectation_x(psi: WaveFunction) -> float:
    return integrate(psi.grid, psi.grid.x * density(psi)) / psi.norm()


def momentum_expectation(psi: WaveFunction, power: int = 1) -> float:
    """``<p^power>`` evaluated in momentum space."""
    phi2 = np.abs(np.fft.fft(psi.psi)) ** 2
    return float(np.sum((HBAR * psi.grid.k) ** power * phi2) / np.sum(phi2))


def mean_energy(psi: WaveFunction, potential, mass: float = 1.0) -> float:
    """``<p^2/2m> + <V>`` with the kinetic part taken spectrally."""
    kinetic = momentum_expectation(psi, 2) / (2 * mass)
    rho = density(psi)
    return float(kinetic + integrate(psi.grid, rho * potential) / integrate(psi.grid, rho))
