"""Separatrices, probability tubes and diffraction-peak bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .errors import (
    BracketError,
    BranchingSuspected,
    ClassificationError,
    ResolutionError,
    SegmentationError,
)
from .grid import Grid1D, integrate, interpolate, spectral_derivative
from .propagator import SnapshotStore
from .states import HBAR, WaveFunction, density
from .trajectories import Trajectory, TrajectoryEnsemble, integrate_trajectories

Domain = tuple  # (label, a, b)


@dataclass(frozen=True)
class ProbabilityTube:
    lower: Trajectory
    upper: Trajectory

    def __post_init__(self):
        if np.any(self.lower.x >= self.upper.x):
            raise ValueError("tube boundaries must stay strictly ordered")

    @classmethod
    def from_ensemble(cls, ens: TrajectoryEnsemble, lower: int = 0, upper: int = -1) -> "ProbabilityTube":
        return cls(ens[lower], ens[upper if upper >= 0 else len(ens) + upper])


@dataclass(frozen=True)
class DomainSeries:
    """Per-snapshot boundaries ``a(t) <= b(t)`` of a possibly moving domain.

    ``comoving`` marks boundaries that are trajectories themselves, so their
    speed is the local velocity field rather than a finite difference.
    """

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    comoving: bool = False

    def __post_init__(self):
        if np.any(np.asarray(self.a) > np.asarray(self.b)):
            raise ValueError("domain boundaries reversed")

    @classmethod
    def static(cls, times, a: float, b: float) -> "DomainSeries":
        n = len(times)
        return cls(np.asarray(times, float), np.full(n, float(a)), np.full(n, float(b)))

    @classmethod
    def from_tube(cls, tube: ProbabilityTube) -> "DomainSeries":
        return cls(tube.lower.times, tube.lower.x, tube.upper.x, comoving=True)


@dataclass
class BranchRecord:
    initial_interval: tuple
    # (label, x_lo, x_hi) runs partitioning initial_interval, ordered by position
    segments: list = field(default_factory=list)

    @property
    def labels(self) -> list:
        return [s[0] for s in self.segments]


@dataclass
class SeparatrixSearch:
    x: float
    lo: float
    hi: float
    label_lo: Hashable
    label_hi: Hashable
    probes: int


# -- classification ---------------------------------------------------------

def classify_position(x: float, domains: Sequence[Domain]) -> Hashable:
    """Label of the (closed) domain containing ``x``; raises if none does."""
    for label, a, b in domains:
        lo = -math.inf if a is None else a
        hi = math.inf if b is None else b
        if lo <= x <= hi:
            return label
    raise ClassificationError(f"position {x:g} not covered by any domain")


def classify_final(traj: Trajectory, domains: Sequence[Domain]) -> Hashable:
    return classify_position(traj.x_final, domains)


def domain_classifier(domains: Sequence[Domain], default=None, strict: bool = True):
    """Classifier ``(x_final, store) -> label`` for fixed final domains.

    With ``strict=False`` uncovered positions map to ``default`` instead of
    raising.
    """

    def classify(x, store=None):
        try:
            return classify_position(x, domains)
        except ClassificationError:
            if strict:
                raise
            return default

    return classify


def transmission_classifier(x_plus: float, mass: float = 1.0):
    """``"T"`` beyond ``x_plus`` with non-negative final velocity, ``"R"`` otherwise.

    The velocity test rejects trajectories that have crossed the edge but
    are already moving back.
    """

    def classify(x, store):
        if x <= x_plus:
            return "R"
        v = interpolate(store.grid, store.velocity(len(store) - 1), x)
        return "T" if v >= 0 else "R"

    return classify


def classify_ensemble(ens: TrajectoryEnsemble, classifier, store: SnapshotStore | None = None) -> list:
    return [classifier(float(x), store) for x in ens.x_final]


# -- separatrix search ------------------------------------------------------

def _final_position(store: SnapshotStore, x0: float, n_sub: int, stop_index: int | None) -> float:
    ens = integrate_trajectories(store, [x0], n_sub=n_sub, stop_index=stop_index)
    return float(ens.x_final[0])


def bisect_separatrix(store: SnapshotStore, classifier, bracket: tuple, tol: float = 1e-4,
                      n_sub: int = 4, stop_index: int | None = None) -> SeparatrixSearch:
    """Bisection on the initial position until the bracket is narrower than ``tol``.

    ``classifier(x_final, store)`` labels the fate of a trajectory; the two
    bracket ends must carry different labels. A probe returning a third
    label means the fate is not monotone inside the bracket.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ValueError("bracket must satisfy x_lo < x_hi")
    if not tol > 0:
        raise ValueError("tol must be positive")
    # classification at the stop snapshot needs that snapshot's velocity, so wrap the store
    view = store if stop_index is None else _truncated(store, stop_index)

    def label(x):
        return classifier(_final_position(view, x, n_sub, None), view)

    lab_lo, lab_hi = label(lo), label(hi)
    if lab_lo == lab_hi:
        raise BracketError(f"both bracket ends classify as {lab_lo!r}")
    probes = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lab = label(mid)
        probes += 1
        if lab == lab_lo:
            lo = mid
        elif lab == lab_hi:
            hi = mid
        else:
            raise BranchingSuspected(
                f"probe at x={mid:g} gave label {lab!r}, not {lab_lo!r} or {lab_hi!r}; "
                "the bracket spans a branching region, use detect_branching"
            )
    return SeparatrixSearch(0.5 * (lo + hi), lo, hi, lab_lo, lab_hi, probes)


def find_separatrix(store: SnapshotStore, classifier, bracket: tuple, tol: float = 1e-4,
                    n_sub: int = 4, stop_index: int | None = None) -> float:
    """Initial position of the boundary trajectory between two final labels."""
    return bisect_separatrix(store, classifier, bracket, tol, n_sub, stop_index).x


def _truncated(store: SnapshotStore, stop_index: int) -> SnapshotStore:
    view = SnapshotStore(store.times[: stop_index + 1], store.psi[: stop_index + 1], store.grid,
                         store.config, store.potential)
    # share the velocity cache: entries are keyed by snapshot index
    view._velocity = store._velocity
    return view


def truncated_store(store: SnapshotStore, t_final: float) -> SnapshotStore:
    """View of ``store`` ending at the snapshot nearest ``t_final``."""
    return _truncated(store, store.index_at(t_final))


def bracket_from_ensemble(ens: TrajectoryEnsemble, labels: Sequence, left_label, right_label) -> list:
    """Adjacent initial-position pairs where ``left_label`` switches to ``right_label``."""
    out = []
    for k in range(len(labels) - 1):
        if labels[k] == left_label and labels[k + 1] == right_label:
            out.append((float(ens.x_init[k]), float(ens.x_init[k + 1])))
    return out


# -- tubes and flux ---------------------------------------------------------

def tube_probability(tube: ProbabilityTube, store: SnapshotStore) -> np.ndarray:
    """Probability between the tube boundaries at each of the tube's sample times."""
    out = np.empty(len(tube.lower.times))
    for i, t in enumerate(tube.lower.times):
        k = store.index_at(t)
        out[i] = integrate(store.grid, store.density(k), tube.lower.x[i], tube.upper.x[i])
    return out


def domain_probability(domain: DomainSeries, store: SnapshotStore) -> np.ndarray:
    out = np.empty(len(domain.times))
    for i, t in enumerate(domain.times):
        k = store.index_at(t)
        out[i] = integrate(store.grid, store.density(k), domain.a[i], domain.b[i])
    return out


def _time_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.gradient(np.asarray(values, float), np.asarray(times, float), edge_order=2)


def flux_balance(domain: DomainSeries, store: SnapshotStore) -> np.ndarray:
    """Residual of ``dP/dt = -[J(b) - J(a)] + b' rho(b) - a' rho(a)`` at each time.

    ``dP/dt`` uses second-order finite differences over the snapshot times,
    as do the boundary velocities unless the domain is comoving, in which
    case they are the velocity field at the boundaries. ``J`` and ``rho``
    are interpolated at the boundaries.
    """
    grid = store.grid
    p = domain_probability(domain, store)
    dp = _time_derivative(domain.times, p)
    da = _time_derivative(domain.times, domain.a)
    db = _time_derivative(domain.times, domain.b)
    res = np.empty_like(p)
    for i, t in enumerate(domain.times):
        k = store.index_at(t)
        j = store.current(k)
        rho = store.density(k)
        a, b = domain.a[i], domain.b[i]
        ja, jb = interpolate(grid, j, a), interpolate(grid, j, b)
        ra, rb = interpolate(grid, rho, a), interpolate(grid, rho, b)
        if domain.comoving:
            v = store.velocity(k)
            da[i], db[i] = interpolate(grid, v, a), interpolate(grid, v, b)
        res[i] = dp[i] + (jb - ja) - (db[i] * rb - da[i] * ra)
    return res


# -- diffraction ------------------------------------------------------------

def fraunhofer_boundary(n: int, t: float, N: int = 5, d: float = 2.0, mass: float = 1.0) -> tuple:
    """Far-field minima ``(x_left, x_right)`` adjacent to principal maximum ``n``.

    ``x = 2 pi (n N -/+ 1)/N * hbar t/(m d)``: the principal maximum sits at
    ``2 pi n hbar t/(m d)`` and its neighbouring zeros are one ``1/N`` of an
    order away on either side.
    """
    if N < 2:
        raise ValueError("need at least two slits")
    if not d > 0 or t < 0:
        raise ValueError("need d > 0 and t >= 0")
    scale = 2 * math.pi * HBAR * t / (mass * d)
    return (scale * (n * N - 1) / N, scale * (n * N + 1) / N)


def fraunhofer_domain(times, n: int, N: int = 5, d: float = 2.0, mass: float = 1.0) -> DomainSeries:
    times = np.asarray(times, float)
    lr = np.array([fraunhofer_boundary(n, t, N, d, mass) for t in times])
    return DomainSeries(times, lr[:, 0], lr[:, 1])


def momentum_density(psi: WaveFunction) -> tuple[np.ndarray, np.ndarray]:
    """Momentum grid in increasing order and ``|phi(p)|^2`` normalized like ``rho``."""
    grid = psi.grid
    phi = np.fft.fftshift(np.fft.fft(psi.psi)) * grid.dx / math.sqrt(2 * math.pi * HBAR)
    p = HBAR * np.fft.fftshift(grid.k)
    return p, np.abs(phi) ** 2 / HBAR


def _cdf(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    return c / c[-1]


@dataclass(frozen=True)
class FarFieldTube:
    """Tube whose trajectories end between the far-field minima of one order.

    For free motion ``x(t)/t`` tends to ``p/m`` and trajectories keep their
    order, so the initial boundaries follow from matching the position and
    momentum cumulative distributions.
    """

    order: int
    x_lo: float
    x_hi: float
    p_lo: float
    p_hi: float
    area: float


def far_field_tube(psi0: WaveFunction, n: int, N: int = 5, d: float = 2.0, mass: float = 1.0) -> FarFieldTube:
    v_lo, v_hi = fraunhofer_boundary(n, 1.0, N, d, mass)
    p_lo, p_hi = mass * v_lo, mass * v_hi
    p, rho_p = momentum_density(psi0)
    if not p[0] < p_lo < p_hi < p[-1]:
        raise ResolutionError(f"order {n} lies outside the momentum grid")
    cp = _cdf(p, rho_p)
    q_lo, q_hi = np.interp([p_lo, p_hi], p, cp)
    x_lo, x_hi = (_position_quantile(psi0, q) for q in (q_lo, q_hi))
    return FarFieldTube(n, float(x_lo), float(x_hi), float(p_lo), float(p_hi), float(q_hi - q_lo))


def _position_quantile(psi: WaveFunction, q: float, iterations: int = 4) -> float:
    """``x`` with ``integrate(rho, x_min, x) = q * norm``, consistent with :func:`integrate`."""
    grid = psi.grid
    rho = density(psi)
    norm = integrate(grid, rho)
    x = float(np.interp(q, _cdf(grid.x, rho), grid.x))
    for _ in range(iterations):
        r = interpolate(grid, rho, x)
        if r <= 0:
            break
        x = min(max(x - (integrate(grid, rho, grid.x_min, x) / norm - q) * norm / r, grid.x_min), grid.x_max)
    return x


def find_minima(grid: Grid1D, rho, domain: tuple | None = None) -> list[float]:
    """Strict local minima of a sampled field, refined by a parabola through three points.

    A flat run of equal values bounded by larger neighbours counts as one
    minimum, reported at its centre.
    """
    rho = np.asarray(rho, float)
    x = grid.x
    lo, hi = (grid.x_min, grid.x_max) if domain is None else domain
    idx = np.flatnonzero((x >= lo) & (x <= hi))
    if idx.size < 3:
        return []
    f = rho[idx]
    out = []
    j = 1
    n = f.size
    while j < n - 1:
        if f[j] < f[j - 1]:
            k = j
            while k + 1 < n and f[k + 1] == f[j]:
                k += 1
            if k + 1 < n and f[k + 1] > f[j]:
                if k == j:
                    y0, y1, y2 = f[j - 1], f[j], f[j + 1]
                    denom = y0 - 2 * y1 + y2
                    shift = 0.5 * (y0 - y2) / denom if denom > 0 else 0.0
                    out.append(float(x[idx[j]] + shift * grid.dx))
                else:
                    out.append(float(0.5 * (x[idx[j]] + x[idx[k]])))
            j = k + 1
        else:
            j += 1
    return out


def find_maxima(grid: Grid1D, rho, domain: tuple | None = None) -> list[float]:
    return find_minima(grid, -np.asarray(rho, float), domain)


@dataclass(frozen=True)
class Peak:
    order: int
    position: float
    left_min: float
    right_min: float
    area: float


def segment_peak(grid: Grid1D, rho, t: float, n: int, d: float = 2.0, mass: float = 1.0) -> Peak:
    """Principal maximum of order ``n`` and its two adjacent minima.

    The maximum is the highest local maximum within half an order spacing of
    the far-field position ``2 pi n hbar t/(m d)``.
    """
    rho = np.asarray(rho, float)
    spacing = 2 * math.pi * HBAR * t / (mass * d)
    centre = n * spacing
    window = (max(centre - 0.5 * spacing, grid.x_min), min(centre + 0.5 * spacing, grid.x_max))
    cands = find_maxima(grid, rho, window)
    if not cands:
        raise SegmentationError(f"no maximum for order {n} at t={t:g}")
    peak = max(cands, key=lambda p: interpolate(grid, rho, p))
    minima = np.array(find_minima(grid, rho))
    left = minima[minima < peak]
    right = minima[minima > peak]
    if left.size == 0 or right.size == 0:
        raise SegmentationError(f"order {n} at t={t:g} is not bracketed by two minima")
    a, b = float(left[-1]), float(right[0])
    return Peak(n, float(peak), a, b, integrate(grid, rho, a, b))


def peak_intensity_area(store: SnapshotStore, t: float, n: int, d: float = 2.0) -> float:
    """Probability between the two minima adjacent to principal maximum ``n`` at time ``t``."""
    k = store.index_at(t)
    return segment_peak(store.grid, store.density(k), float(store.times[k]), n, d, store.config.mass).area


def resolved_peaks(store: SnapshotStore, t: float, d: float = 2.0, max_order: int = 10) -> dict:
    """All principal peaks that segment cleanly at time ``t``, keyed by order.

    Orders are scanned outwards from zero; the scan on each side stops at the
    first order that fails to segment or overlaps its inner neighbour.
    """
    k = store.index_at(t)
    rho = store.density(k)
    tt = float(store.times[k])
    peaks = {}
    try:
        peaks[0] = segment_peak(store.grid, rho, tt, 0, d, store.config.mass)
    except SegmentationError:
        return peaks
    for sign in (1, -1):
        prev = peaks[0]
        for m in range(1, max_order + 1):
            spacing = 2 * math.pi * HBAR * tt / (store.config.mass * d)
            centre = sign * m * spacing
            # the whole search window must fit on the grid
            if not store.grid.x_min <= centre - 0.5 * spacing and centre + 0.5 * spacing <= store.grid.x_max:
                break
            try:
                p = segment_peak(store.grid, rho, tt, sign * m, d, store.config.mass)
            except SegmentationError:
                break
            overlaps = p.left_min < prev.right_min if sign > 0 else p.right_min > prev.left_min
            if overlaps or p.position == prev.position:
                break
            peaks[sign * m] = p
            prev = p
    return dict(sorted(peaks.items()))


# -- branching and per-slit bookkeeping ------------------------------------

def label_runs(x_init: np.ndarray, labels: Sequence) -> list:
    """Maximal runs of equal labels as ``(label, first_index, last_index)``."""
    runs = []
    start = 0
    for k in range(1, len(labels) + 1):
        if k == len(labels) or labels[k] != labels[start]:
            runs.append((labels[start], start, k - 1))
            start = k
    return runs


def _refine(store, classifier, lo, hi, tol, n_sub):
    if store is None or hi - lo <= tol:
        return 0.5 * (lo + hi)
    try:
        return find_separatrix(store, classifier, (lo, hi), tol, n_sub)
    except (BracketError, BranchingSuspected):
        return 0.5 * (lo + hi)


def partition_initial(ens: TrajectoryEnsemble, labels: Sequence, interval: tuple,
                      store: SnapshotStore | None = None, classifier=None,
                      tol: float = 1e-3, n_sub: int = 4) -> list:
    """Split ``interval`` into ``(label, x_lo, x_hi)`` segments by final label.

    Segment boundaries sit between the last trajectory of one run and the first
    of the next, refined by bisection when a store and classifier are given.
    """
    x = ens.x_init
    lo, hi = interval
    inside = np.flatnonzero((x >= lo) & (x <= hi))
    if inside.size == 0:
        raise ResolutionError(f"no trajectory starts inside [{lo:g}, {hi:g}]")
    sub_labels = [labels[k] for k in inside]
    runs = label_runs(x[inside], sub_labels)
    segments = []
    left = float(lo)
    for r, (lab, i0, i1) in enumerate(runs):
        if r + 1 < len(runs):
            a, b = float(x[inside[i1]]), float(x[inside[i1 + 1]])
            right = _refine(store, classifier, a, b, tol, n_sub) if classifier else 0.5 * (a + b)
        else:
            right = float(hi)
        segments.append((lab, left, right))
        left = right
    return segments


def detect_branching(ens: TrajectoryEnsemble, labels: Sequence, intervals: Sequence[tuple],
                     store: SnapshotStore | None = None, classifier=None,
                     tol: float = 1e-3, n_sub: int = 4) -> list[BranchRecord]:
    """A :class:`BranchRecord` for every initial interval that feeds two or more final labels."""
    out = []
    for interval in intervals:
        segs = partition_initial(ens, labels, interval, store, classifier, tol, n_sub)
        if len({s[0] for s in segs}) >= 2:
            out.append(BranchRecord(tuple(map(float, interval)), segs))
    return out


def per_slit_contribution(ens: TrajectoryEnsemble, labels: Sequence, slit_intervals: Sequence[tuple],
                          peak_labels: Sequence, psi0: WaveFunction,
                          store: SnapshotStore | None = None, classifier=None,
                          tol: float = 1e-3, n_sub: int = 4) -> np.ndarray:
    """Matrix ``P[i, n]`` of initial probability from slit ``i`` ending in peak ``peak_labels[n]``.

    The initial support is split into label segments (separatrix-bounded
    when a store and classifier are given) and ``rho0`` is integrated over
    each segment's overlap with each slit interval.
    """
    lo = min(a for a, _ in slit_intervals)
    hi = max(b for _, b in slit_intervals)
    x = ens.x_init
    if x.size < 2:
        raise ResolutionError("need at least two trajectories")
    segs = partition_initial(ens, labels, (lo, hi), store, classifier, tol, n_sub)
    col = {lab: j for j, lab in enumerate(peak_labels)}
    out = np.zeros((len(slit_intervals), len(peak_labels)))
    rho0 = density(psi0)
    for i, (sa, sb) in enumerate(slit_intervals):
        for lab, a, b in segs:
            if lab not in col:
                continue
            a2, b2 = max(a, sa), min(b, sb)
            if a2 < b2:
                out[i, col[lab]] += integrate(psi0.grid, rho0, a2, b2)
    return out


def slit_intervals(centres: Sequence[float], lo: float, hi: float) -> list:
    """Partition ``[lo, hi]`` at the midpoints between adjacent slit centres."""
    c = sorted(centres)
    cuts = [lo] + [0.5 * (c[i] + c[i + 1]) for i in range(len(c) - 1)] + [hi]
    return [(cuts[i], cuts[i + 1]) for i in range(len(c))]
