"""Strang split-operator propagation with a spectral kinetic step."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .grid import Grid1D, spectral_derivative
from .states import HBAR, WaveFunction, current_density, mean_energy, velocity_field


@dataclass(frozen=True)
class PropagationConfig:
    dt: float
    n_steps: int
    snapshot_stride: int = 20
    mass: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigurationError("dt must be finite and positive")
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        if not 1 <= self.snapshot_stride <= self.n_steps:
            raise ConfigurationError("snapshot_stride must lie in [1, n_steps]")
        if not self.mass > 0:
            raise ConfigurationError("mass must be positive")

    @property
    def t_final(self) -> float:
        return self.dt * self.n_steps


def _kinetic_phase(grid: Grid1D, dt: float, mass: float) -> np.ndarray:
    return np.exp(-1j * HBAR * grid.k**2 * dt / (2 * mass))


def _check_finite(psi: np.ndarray, t: float):
    if not np.all(np.isfinite(psi)):
        raise InstabilityError(f"non-finite amplitudes at t={t:g}; reduce dt")


def step(psi: WaveFunction, potential, dt: float, mass: float = 1.0) -> WaveFunction:
    """One Strang step: half kinetic, full potential phase, half kinetic."""
    half = _kinetic_phase(psi.grid, dt / 2, mass)
    out = np.fft.ifft(half * np.fft.fft(psi.psi))
    out *= np.exp(-1j * np.asarray(potential) * dt / HBAR)
    out = np.fft.ifft(half * np.fft.fft(out))
    t = psi.t + dt
    _check_finite(out, t)
    return psi.with_psi(out, t)


@dataclass
class SnapshotStore:
    """Time-ordered wave functions on a common grid.

    Current and velocity fields are computed lazily and cached per snapshot; the
    amplitudes themselves are never modified after construction.
    """

    times: np.ndarray
    psi: np.ndarray  # shape (n_snapshots, n_points)
    grid: Grid1D
    config: PropagationConfig
    potential: np.ndarray = field(repr=False)
    _velocity: dict = field(default_factory=dict, repr=False)
    _current: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        self.times.flags.writeable = False
        self.psi.flags.writeable = False

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> WaveFunction:
        return WaveFunction(self.grid, self.psi[i], float(self.times[i]))

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(len(self))]

    def density(self, i: int) -> np.ndarray:
        return np.abs(self.psi[i]) ** 2

    def current(self, i: int) -> np.ndarray:
        j = self._current.get(i)
        if j is None:
            j = current_density(self.state(i), self.config.mass)
            j.flags.writeable = False
            self._current[i] = j
        return j

    def velocity(self, i: int) -> np.ndarray:
        return self.velocity_ext(i)[:-1]

    def velocity_ext(self, i: int) -> np.ndarray:
        """Velocity with the periodic image of the first point appended, for interpolation."""
        v = self._velocity.get(i)
        if v is None:
            v = velocity_field(self.state(i), mass=self.config.mass)
            v = np.append(v, v[:1])
            v.flags.writeable = False
            self._velocity[i] = v
        return v

    def index_at(self, t: float) -> int:
        """Index of the snapshot closest to time ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    def norms(self) -> np.ndarray:
        return np.array([self.state(i).norm() for i in range(len(self))])

    def energies(self) -> np.ndarray:
        return np.array(
            [mean_energy(self.state(i), self.potential, self.config.mass) for i in range(len(self))]
        )

    def with_phase(self, theta: float) -> "SnapshotStore":
        """Copy with every snapshot multiplied by ``exp(i theta)``."""
        return SnapshotStore(self.times, self.psi * np.exp(1j * theta), self.grid, self.config, self.potential)

    def subsample(self, every: int) -> "SnapshotStore":
        """Store keeping only every ``every``-th snapshot."""
        cfg = PropagationConfig(
            self.config.dt, self.config.n_steps, self.config.snapshot_stride * every, self.config.mass
        )
        out = SnapshotStore(self.times[::every], self.psi[::every], self.grid, cfg, self.potential)
        for k in range(len(out)):
            if k * every in self._current:
                out._current[k] = self._current[k * every]
        return out


def _evolve(psi0: WaveFunction, potential, dt, n_steps, stride, mass):
    grid = psi0.grid
    half = _kinetic_phase(grid, dt / 2, mass)
    full = half * half
    vphase = np.exp(-1j * potential * dt / HBAR)

    n_snap = -(-n_steps // stride) + 1
    psis = np.empty((n_snap, grid.n_points), dtype=complex)
    times = np.empty(n_snap)
    psis[0], times[0] = psi0.psi, psi0.t

    free = not np.any(potential)
    phi = np.fft.fft(psi0.psi)
    k = done = 0
    while done < n_steps:
        block = min(stride, n_steps - done)
        if free:
            # potential phase is identically 1: kinetic factors commute
            phi *= _kinetic_phase(grid, block * dt, mass)
        else:
            phi *= half
            for j in range(block):
                psi = np.fft.ifft(phi)
                psi *= vphase
                phi = np.fft.fft(psi)
                phi *= full if j < block - 1 else half
        psi = np.fft.ifft(phi)
        done += block
        t = psi0.t + done * dt
        _check_finite(psi, t)
        k += 1
        psis[k], times[k] = psi, t
    return times, psis


def propagate(psi0: WaveFunction, potential, cfg: PropagationConfig) -> SnapshotStore:
    """Evolve ``psi0`` for ``cfg.n_steps`` steps, storing every ``snapshot_stride``-th state.

    Consecutive half kinetic steps between two snapshots are fused into one
    full kinetic step; the result equals repeated :func:`step` calls up to
    round-off. A final partial block is stored as an extra snapshot.
    """
    potential = np.asarray(potential, dtype=float)
    if potential.shape != (psi0.grid.n_points,):
        raise ValueError("potential and wave function live on different grids")
    times, psis = _evolve(psi0, potential, cfg.dt, cfg.n_steps, cfg.snapshot_stride, cfg.mass)
    return SnapshotStore(times, psis, psi0.grid, cfg, potential)


def propagate_backward(psi: WaveFunction, potential, dt: float, n_steps: int, mass: float = 1.0) -> WaveFunction:
    """Evolve ``psi`` by ``n_steps`` steps of ``-dt`` and return the final state."""
    potential = np.asarray(potential, dtype=float)
    times, psis = _evolve(psi, potential, -abs(dt), n_steps, n_steps, mass)
    return WaveFunction(psi.grid, psis[-1], float(times[-1]))


def export_snapshots_csv(store: SnapshotStore, path, every: int = 1):
    """Write ``t,x,re,im`` rows, one per (snapshot, grid point)."""
    x = store.grid.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "re", "im"])
        for i in range(0, len(store), every):
            t = store.times[i]
            psi = store.psi[i]
            w.writerows(zip([repr(float(t))] * len(x), map(repr, x.tolist()),
                            map(repr, psi.real.tolist()), map(repr, psi.imag.tolist())))


def read_snapshots_csv(path, grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`export_snapshots_csv`: returns ``(times, psi)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    t = data[:, 0].reshape(-1, grid.n_points)[:, 0]
    psi = (data[:, 2] + 1j * data[:, 3]).reshape(-1, grid.n_points)
    return t, psi


def continuity_residual(store: SnapshotStore, i: int) -> np.ndarray:
    """Pointwise ``(rho_{i+1} - rho_i)/Delta + dJ/dx`` between snapshots ``i`` and ``i+1``.

    The flux divergence is averaged over the two snapshots (trapezoid in
    time), so the residual shrinks with the snapshot spacing.
    """
    delta = store.times[i + 1] - store.times[i]
    drho = (store.density(i + 1) - store.density(i)) / delta
    j0 = current_density(store.state(i), store.config.mass)
    j1 = current_density(store.state(i + 1), store.config.mass)
    return drho + spectral_derivative(store.grid, 0.5 * (j0 + j1)).real
