"""Bohmian trajectories integrated through a stored wave-function history.

Velocities are interpolated linearly in space from the grid and linearly in
time between the two bracketing snapshots; positions advance by classical
RK4 with a fixed number of sub-steps per snapshot interval.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateStateError, EscapeError, OrderingViolation, RangeError
from .grid import Grid1D, integrate, interpolate
from .propagator import SnapshotStore
from .states import WaveFunction, density, velocity_field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    x_init: float
    times: np.ndarray
    x: np.ndarray

    def position_at(self, i: int) -> float:
        return float(self.x[i])

    @property
    def x_final(self) -> float:
        return float(self.x[-1])


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Trajectories ordered by initial position; ``positions[k, i]`` is x_k(t_i)."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.positions.flags.writeable = False
        self.times.flags.writeable = False

    def __len__(self):
        return self.positions.shape[0]

    def __getitem__(self, k: int) -> Trajectory:
        return Trajectory(float(self.positions[k, 0]), self.times, self.positions[k])

    @property
    def x_init(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def x_final(self) -> np.ndarray:
        return self.positions[:, -1]


@dataclass(frozen=True)
class JacobianRecord:
    pair_index: int
    t: float
    jacobian: float


@dataclass
class CrossingReport:
    violations: list  # (time, pair index) tuples
    min_gap: float

    @property
    def ok(self) -> bool:
        return not self.violations


def effective_support(psi: WaveFunction, support_cut: float = 1e-4) -> tuple[float, float]:
    """Leftmost and rightmost grid points with ``rho >= support_cut * max rho``."""
    rho = density(psi)
    idx = np.flatnonzero(rho >= support_cut * rho.max())
    if idx.size == 0 or rho.max() == 0:
        raise DegenerateStateError("effective support is empty")
    return float(psi.grid.x[idx[0]]), float(psi.grid.x[idx[-1]])


def sample_initial_conditions(psi0: WaveFunction, n: int, scheme: str = "even",
                              support_cut: float = 1e-4) -> np.ndarray:
    """Initial positions for ``n`` trajectories.

    ``even`` spaces them uniformly over the effective support; ``quantile``
    places them at cumulative probability ``(k - 1/2)/n`` so each carries
    weight ``1/n``.
    """
    if n < 2:
        raise ValueError("need at least two initial conditions")
    if not 0 < support_cut < 1:
        raise ValueError("support_cut must lie in (0, 1)")
    lo, hi = effective_support(psi0, support_cut)
    if scheme == "even":
        return np.linspace(lo, hi, n)
    if scheme == "quantile":
        grid = psi0.grid
        rho = density(psi0)
        # cumulative trapezoid on the node positions
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * grid.dx)])
        cdf /= cdf[-1]
        levels = (np.arange(1, n + 1) - 0.5) / n
        return np.interp(levels, cdf, grid.x)
    raise ValueError(f"unknown sampling scheme {scheme!r}")


def velocity_at(psi: WaveFunction, x, rho_floor: float | None = None, mass: float = 1.0):
    """Velocity field of ``psi`` linearly interpolated at ``x``."""
    return interpolate(psi.grid, velocity_field(psi, rho_floor, mass), x)


def _interp(grid: Grid1D, fe: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = (x - grid.x_min) / grid.dx
    j = np.floor(s).astype(np.intp)
    # np.clip carries noticeable per-call overhead on the small arrays used here
    np.minimum(j, grid.n_points - 1, out=j)
    np.maximum(j, 0, out=j)
    w = s - j
    return (1.0 - w) * fe[j] + w * fe[j + 1]


def _extended(v: np.ndarray) -> np.ndarray:
    return np.append(v, v[:1])


def _advance(grid, v0, v1, x, delta, n_sub):
    """RK4 across one snapshot interval, velocity linear in time between ``v0`` and ``v1``."""
    h = delta / n_sub

    def vel(xx, theta):
        return (1.0 - theta) * _interp(grid, v0, xx) + theta * _interp(grid, v1, xx)

    for m in range(n_sub):
        a = m / n_sub
        b = (m + 0.5) / n_sub
        c = (m + 1) / n_sub
        k1 = vel(x, a)
        k2 = vel(x + 0.5 * h * k1, b)
        k3 = vel(x + 0.5 * h * k2, b)
        k4 = vel(x + h * k3, c)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        inside = (x >= grid.x_min) & (x <= grid.x_max)
        if not inside.all():
            raise EscapeError(
                f"trajectory {int(np.flatnonzero(~inside)[0])} left the grid", int(np.flatnonzero(~inside)[0])
            )
    return x


def _advance_scalar(grid, v0, v1, x, delta, n_sub):
    """Single-trajectory variant of :func:`_advance` in plain floats, for bisection probes."""
    x_min, inv_dx, last = grid.x_min, 1.0 / grid.dx, grid.n_points - 1
    x_max = grid.x_max
    h = delta / n_sub

    def vel(xx, theta):
        s = (xx - x_min) * inv_dx
        j = min(max(math.floor(s), 0), last)
        w = s - j
        a = (1.0 - w) * v0[j] + w * v0[j + 1]
        b = (1.0 - w) * v1[j] + w * v1[j + 1]
        return (1.0 - theta) * a + theta * b

    for m in range(n_sub):
        ta = m / n_sub
        tb = (m + 0.5) / n_sub
        tc = (m + 1) / n_sub
        k1 = vel(x, ta)
        k2 = vel(x + 0.5 * h * k1, tb)
        k3 = vel(x + 0.5 * h * k2, tb)
        k4 = vel(x + h * k3, tc)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not x_min <= x <= x_max:
            raise EscapeError("trajectory 0 left the grid", 0)
    return x


def integrate_trajectories(store: SnapshotStore, x_inits: Sequence[float], n_sub: int = 4,
                           check_order: bool = True, stop_index: int | None = None) -> TrajectoryEnsemble:
    """Integrate ``dx/dt = v(x, t)`` for every initial position through ``store``.

    ``stop_index`` truncates the integration at that snapshot. With
    ``check_order`` a swap of adjacent trajectories raises
    :class:`OrderingViolation`; crossing is always numerical error.
    """
    x = np.array(x_inits, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("x_inits must be a non-empty 1D sequence")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x_inits must be strictly increasing")
    if not np.all(store.grid.contains(x)):
        raise RangeError("initial positions outside grid")
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    last = len(store) - 1 if stop_index is None else int(stop_index)
    times = store.times[: last + 1].copy()
    out = np.empty((x.size, last + 1))
    out[:, 0] = x
    grid = store.grid
    scalar = x.size == 1
    if scalar:
        x = float(x[0])
        advance = _advance_scalar
    else:
        advance = _advance
    v1 = store.velocity_ext(0)
    for i in range(last):
        v0, v1 = v1, store.velocity_ext(i + 1)
        try:
            x = advance(grid, v0, v1, x, times[i + 1] - times[i], n_sub)
        except EscapeError as err:
            raise EscapeError(f"{err} between t={times[i]:g} and t={times[i + 1]:g}", err.traj_index) from None
        if check_order and not scalar:
            bad = np.flatnonzero(np.diff(x) <= 0)
            if bad.size:
                raise OrderingViolation(
                    f"trajectories {bad[0]} and {bad[0] + 1} crossed near t={times[i + 1]:g}; "
                    "increase n_sub or reduce the snapshot stride"
                )
        out[:, i + 1] = x
    return TrajectoryEnsemble(times, out)


def check_noncrossing(ens: TrajectoryEnsemble) -> CrossingReport:
    """All ``(time, pair)`` where adjacent trajectories are not strictly ordered."""
    gaps = np.diff(ens.positions, axis=0)
    pairs, ti = np.nonzero(gaps <= 0)
    order = np.lexsort((pairs, ti))
    violations = [(float(ens.times[ti[k]]), int(pairs[k])) for k in order]
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    return CrossingReport(violations, min_gap)


def pairwise_jacobian(ens: TrajectoryEnsemble, i: int) -> list[JacobianRecord]:
    """``J(t) = (x_{i+1}(t) - x_i(t)) / (x_{i+1}(0) - x_i(0))`` at every stored time."""
    if not 0 <= i < len(ens) - 1:
        raise IndexError(f"no adjacent pair ({i}, {i + 1}) in an ensemble of {len(ens)}")
    gap = ens.positions[i + 1] - ens.positions[i]
    if gap[0] == 0:
        raise ValueError("zero initial gap")
    jac = gap / gap[0]
    return [JacobianRecord(i, float(t), float(j)) for t, j in zip(ens.times, jac)]


def born_rule_residual(ens: TrajectoryEnsemble, store: SnapshotStore) -> np.ndarray:
    """Relative change of ``rho(midpoint) * gap`` along every adjacent pair.

    Returns an array of shape ``(n_pairs, n_times)``; column 0 is zero.
    """
    grid = store.grid
    n_t = len(ens.times)
    gaps = np.diff(ens.positions, axis=0)
    if np.any(gaps[:, 0] < grid.dx / 10):
        warnings.warn("pair gaps below dx/10: finite-difference Jacobian is unreliable", RuntimeWarning)
    mids = 0.5 * (ens.positions[1:] + ens.positions[:-1])
    weight = np.empty_like(gaps)
    for i in range(n_t):
        k = store.index_at(ens.times[i])
        weight[:, i] = _interp(grid, _extended(store.density(k)), mids[:, i]) * gaps[:, i]
    return np.abs(weight - weight[:, :1]) / weight[:, :1]


def born_rule_pairs(ens: TrajectoryEnsemble, psi0: WaveFunction, gap_range: tuple = (1.0, 10.0),
                    node_cut: float = 1e-3) -> np.ndarray:
    """Mask of adjacent pairs eligible for the Born-rule check.

    A pair qualifies when its initial gap lies in ``gap_range`` (in units of
    ``dx``) and ``rho0`` at its initial midpoint is at least
    ``node_cut * max rho0``.
    """
    grid = psi0.grid
    gaps = np.diff(ens.x_init)
    mids = 0.5 * (ens.x_init[1:] + ens.x_init[:-1])
    rho0 = density(psi0)
    lo, hi = gap_range
    ok_gap = (gaps >= lo * grid.dx * (1 - 1e-12)) & (gaps <= hi * grid.dx * (1 + 1e-12))
    return ok_gap & (_interp(grid, _extended(rho0), mids) >= node_cut * rho0.max())


def born_rule_check(store: SnapshotStore, psi0: WaveFunction, gap_dx: float = 5.0,
                    support_cut: float = 1e-4, node_cut: float = 1e-3, n_sub: int = 4) -> dict:
    """Born-rule residuals for pairs spaced ``gap_dx * dx`` apart across the initial support.

    Only pairs passing :func:`born_rule_pairs` enter the statistics.
    """
    lo, hi = effective_support(psi0, support_cut)
    x0 = np.arange(lo, hi, gap_dx * psi0.grid.dx)
    ens = integrate_trajectories(store, x0, n_sub=n_sub, check_order=False)
    mask = born_rule_pairs(ens, psi0, node_cut=node_cut)
    out = {"gap_dx": gap_dx, "pairs": len(ens) - 1, "eligible_pairs": int(mask.sum()),
           "max_residual": None, "fraction_above_2e-2": None}
    if mask.any():
        worst = born_rule_residual(ens, store)[mask].max(axis=1)
        out["max_residual"] = float(worst.max())
        out["fraction_above_2e-2"] = float(np.mean(worst > 2e-2))
    return out


def tube_mass(ens: TrajectoryEnsemble, store: SnapshotStore, lower: int, upper: int) -> np.ndarray:
    """Probability between trajectories ``lower`` and ``upper`` at each stored time."""
    out = np.empty(len(ens.times))
    for i, t in enumerate(ens.times):
        k = store.index_at(t)
        out[i] = integrate(store.grid, store.density(k), ens.positions[lower, i], ens.positions[upper, i])
    return out


def export_trajectories_csv(ens: TrajectoryEnsemble, path):
    """``traj_id,t,x`` rows sorted by trajectory then time."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["traj_id", "t", "x"])
        for k in range(len(ens)):
            for t, xv in zip(ens.times.tolist(), ens.positions[k].tolist()):
                w.writerow([k, repr(t), repr(xv)])


def read_trajectories_csv(path) -> TrajectoryEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ids = data[:, 0].astype(int)
    n = ids.max() + 1
    times = data[ids == 0, 1]
    return TrajectoryEnsemble(times, data[:, 2].reshape(n, -1))
