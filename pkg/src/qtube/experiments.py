"""End-to-end runs for the barrier, grating and custom scenarios.

Each ``run_*`` function propagates the configured state, integrates the
trajectory ensemble and returns an :class:`ExperimentReport`. The report
keeps the snapshot store and ensemble as attributes for callers that want
to inspect them; only the JSON-friendly part is written to disk.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError
from .grid import integrate
from .potentials import sample_potential
from .propagator import SnapshotStore, export_snapshots_csv, propagate
from .states import WaveFunction, density, superpose
from .trajectories import (
    TrajectoryEnsemble,
    born_rule_check,
    check_noncrossing,
    export_trajectories_csv,
    integrate_trajectories,
    sample_initial_conditions,
)
from .tubes import (
    DomainSeries,
    ProbabilityTube,
    bisect_separatrix,
    bracket_from_ensemble,
    classify_ensemble,
    detect_branching,
    domain_classifier,
    domain_probability,
    far_field_tube,
    flux_balance,
    fraunhofer_domain,
    per_slit_contribution,
    resolved_peaks,
    slit_intervals,
    transmission_classifier,
    truncated_store,
    tube_probability,
)

log = logging.getLogger(__name__)

BETWEEN = "between"  # label for trajectories ending outside every resolved peak


@dataclass
class ExperimentReport:
    scenario: str
    times: np.ndarray
    series: dict
    diagnostics: dict
    results: dict
    store: SnapshotStore | None = field(default=None, repr=False, compare=False)
    ensemble: TrajectoryEnsemble | None = field(default=None, repr=False, compare=False)
    psi0: WaveFunction | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return _jsonable({
            "scenario": self.scenario,
            "times": self.times,
            "series": self.series,
            "diagnostics": self.diagnostics,
            "results": self.results,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- shared pipeline --------------------------------------------------------

def _prepare(cfg: RunConfig):
    grid = cfg.grid.build()
    psi0 = superpose(cfg.packets, grid)
    V = sample_potential(cfg.potential, grid)
    log.info("propagating %d steps of dt=%g on %d points", cfg.propagation.n_steps,
             cfg.propagation.dt, grid.n_points)
    store = propagate(psi0, V, cfg.propagation)
    return psi0, store


def _diagnostics(store: SnapshotStore) -> dict:
    norms = store.norms()
    energies = store.energies()
    e0 = energies[0]
    scale = abs(e0) if e0 != 0 else 1.0
    return {
        "n_points": store.grid.n_points,
        "dx": store.grid.dx,
        "dt": store.config.dt,
        "n_steps": store.config.n_steps,
        "snapshot_stride": store.config.snapshot_stride,
        "n_snapshots": len(store),
        "norm_drift": float(np.max(np.abs(norms - 1.0))),
        "energy_initial": float(e0),
        "energy_drift": float(np.max(np.abs(energies - e0)) / scale),
    }


def _ensemble(cfg: RunConfig, psi0: WaveFunction, store: SnapshotStore) -> tuple[TrajectoryEnsemble, dict]:
    tcfg = cfg.trajectories
    x0 = sample_initial_conditions(psi0, tcfg.count, tcfg.scheme, tcfg.support_cut)
    ens = integrate_trajectories(store, x0, n_sub=tcfg.n_sub, check_order=False)
    crossing = check_noncrossing(ens)
    info = {
        "count": len(ens),
        "scheme": tcfg.scheme,
        "crossings": len(crossing.violations),
        "min_gap": crossing.min_gap,
    }
    return ens, info


def _born_rule(store: SnapshotStore, psi0: WaveFunction, cfg: RunConfig) -> dict:
    return born_rule_check(store, psi0, support_cut=cfg.trajectories.support_cut, n_sub=cfg.trajectories.n_sub)


def _flux_stats(domain: DomainSeries, store: SnapshotStore) -> dict:
    res = flux_balance(domain, store)
    p = domain_probability(domain, store)
    dp = np.gradient(p, domain.times, edge_order=2)
    return {
        "rms_residual": float(np.sqrt(np.mean(res**2))),
        "max_abs_dPdt": float(np.max(np.abs(dp))),
    }


# -- barrier scattering -----------------------------------------------------

def run_tunneling(cfg: RunConfig) -> ExperimentReport:
    if cfg.scenario != "tunnel":
        raise ConfigurationError(f"run_tunneling needs scenario 'tunnel', got {cfg.scenario!r}")
    if cfg.potential.kind != "tanh_barrier":
        raise ConfigurationError("the tunnel scenario needs a tanh_barrier potential")
    psi0, store = _prepare(cfg)
    grid = store.grid
    xm, xp = cfg.potential.x_minus, cfg.potential.x_plus
    times = store.times

    p_r = np.empty(len(store))
    p_i = np.empty(len(store))
    p_t = np.empty(len(store))
    for k in range(len(store)):
        rho = store.density(k)
        p_r[k] = integrate(grid, rho, grid.x_min, xm)
        p_i[k] = integrate(grid, rho, xm, xp)
        p_t[k] = integrate(grid, rho, xp, grid.x_max)
    series = {"P_T": p_t, "P_R": p_r, "P_I": p_i}

    # asymptotic once the barrier region has drained after its peak occupation
    thr = cfg.tunnel.intra_threshold
    k_peak = int(np.argmax(p_i))
    below = np.flatnonzero(p_i[k_peak:] <= thr)
    k_asym = k_peak + int(below[0]) if below.size else None
    asym = {
        "threshold": thr,
        "t_asymptotic": None if k_asym is None else float(times[k_asym]),
        "P_T": float(p_t[-1]),
        "P_R": float(p_r[-1]),
        "P_I": float(p_i[-1]),
        "P_T_spread_after": None if k_asym is None else float(np.ptp(p_t[k_asym:])),
    }

    ens, ens_info = _ensemble(cfg, psi0, store)
    classifier = transmission_classifier(xp, store.config.mass)
    labels = classify_ensemble(ens, classifier, store)
    ens_info["transmitted"] = int(sum(lab == "T" for lab in labels))

    results = {"asymptotic": asym, "ensemble": ens_info}
    brackets = bracket_from_ensemble(ens, labels, "R", "T")
    bracket = cfg.separatrix.bracket or (brackets[-1] if brackets else None)
    results["separatrix"] = None
    results["tube"] = None
    results["closure"] = None
    if bracket is not None:
        if len(brackets) > 1:
            log.warning("%d reflection/transmission switches in the ensemble; using the rightmost",
                        len(brackets))
        search = bisect_separatrix(store, classifier, bracket, cfg.separatrix.tol, cfg.trajectories.n_sub)
        x_top = float(ens.x_init[-1])
        tube_ens = integrate_trajectories(store, [search.x, x_top], n_sub=cfg.trajectories.n_sub)
        tube = ProbabilityTube.from_ensemble(tube_ens)
        p_tube = tube_probability(tube, store)
        results["separatrix"] = {
            "x0": search.x, "bracket": [search.lo, search.hi], "probes": search.probes,
            "switches": len(brackets),
        }
        results["tube"] = {
            "x_lower": search.x,
            "x_upper": x_top,
            "P0": float(p_tube[0]),
            "mean": float(p_tube.mean()),
            "std": float(p_tube.std()),
            "rel_std": float(p_tube.std() / p_tube.mean()),
            "max_rel_dev": float(np.max(np.abs(p_tube - p_tube[0])) / p_tube[0]),
        }
        series["P_tube"] = p_tube
        moving = _flux_stats(DomainSeries.from_tube(tube), store)
        results["tube"]["flux_rms_residual"] = moving["rms_residual"]
        results["tube"]["flux_limit"] = float(1e-2 * p_tube[0] / times[-1])
        omega0 = integrate(grid, density(psi0), search.x, x_top)
        results["closure"] = {
            "omega0_probability": omega0,
            "asymptotic_P_T": asym["P_T"],
            "rel_diff": float(abs(omega0 - asym["P_T"]) / asym["P_T"]) if asym["P_T"] > 0 else None,
        }

    static_t = DomainSeries.static(times, xp, grid.x_max)
    coarse = store.subsample(2)
    flux = _flux_stats(static_t, store)
    flux_coarse = _flux_stats(DomainSeries.static(coarse.times, xp, grid.x_max), coarse)
    flux["rms_residual_double_stride"] = flux_coarse["rms_residual"]
    flux["shrink_ratio"] = flux_coarse["rms_residual"] / flux["rms_residual"]
    results["flux_balance_T"] = flux
    results["born_rule"] = _born_rule(store, psi0, cfg)

    return ExperimentReport("tunnel", times, series, _diagnostics(store), results, store, ens, psi0)


# -- five-slit grating ------------------------------------------------------

def _order_name(n: int) -> str:
    return f"P_n{n}"


def peak_classifier(peaks: dict):
    """Final-position classifier onto resolved peak segments; everything else is ``BETWEEN``."""
    domains = [(n, p.left_min, p.right_min) for n, p in peaks.items()]
    return domain_classifier(domains, default=BETWEEN, strict=False)


def _order_tube(store: SnapshotStore, ens: TrajectoryEnsemble, labels: list, classifier, n: int,
                tol: float, n_sub: int):
    """Initial boundaries of the tube feeding peak ``n``, bisected on "in peak n" or not."""
    idx = [k for k, lab in enumerate(labels) if lab == n]
    if not idx or idx[0] == 0 or idx[-1] == len(labels) - 1:
        return None

    def inside(x, s):
        return classifier(x, s) == n

    lo = bisect_separatrix(store, inside, (ens.x_init[idx[0] - 1], ens.x_init[idx[0]]), tol, n_sub)
    hi = bisect_separatrix(store, inside, (ens.x_init[idx[-1]], ens.x_init[idx[-1] + 1]), tol, n_sub)
    return lo.x, hi.x


def run_grating(cfg: RunConfig) -> ExperimentReport:
    if cfg.scenario != "grating":
        raise ConfigurationError(f"run_grating needs scenario 'grating', got {cfg.scenario!r}")
    gcfg = cfg.grating
    t_final = cfg.t_final
    if any(not 0 < t <= t_final * (1 + 1e-12) for t in gcfg.analysis_times):
        raise ConfigurationError("grating.analysis_times must lie in (0, t_final]")
    psi0, store = _prepare(cfg)
    grid = store.grid
    mass = store.config.mass
    N, d = gcfg.slits, gcfg.spacing
    n_sub, tol = cfg.trajectories.n_sub, cfg.separatrix.tol
    times = store.times
    rho0 = density(psi0)

    series = {}
    for n in gcfg.orders:
        series[_order_name(n)] = domain_probability(fraunhofer_domain(times, n, N, d, mass), store)

    ens, ens_info = _ensemble(cfg, psi0, store)
    results = {"ensemble": ens_info}
    far = {}
    for n in gcfg.orders:
        ft = far_field_tube(psi0, n, N, d, mass)
        far[n] = ft
    results["far_field"] = {
        n: {"x_lo": ft.x_lo, "x_hi": ft.x_hi, "p_lo": ft.p_lo, "p_hi": ft.p_hi, "area": ft.area}
        for n, ft in far.items()
    }

    analysis = {}
    views = {}
    for t in sorted(gcfg.analysis_times):
        view = truncated_store(store, t)
        k = len(view) - 1
        tt = float(view.times[-1])
        peaks = resolved_peaks(store, tt, d)
        classifier = peak_classifier(peaks)
        labels = [classifier(float(x), view) for x in ens.positions[:, k]]
        views[t] = (view, peaks, classifier, labels)
        entry = {"t": tt, "peaks": {}, "orders": {}}
        for n, pk in peaks.items():
            entry["peaks"][n] = {"position": pk.position, "left_min": pk.left_min,
                                 "right_min": pk.right_min, "area": pk.area}
        for n in gcfg.orders:
            a, b = fraunhofer_domain([tt], n, N, d, mass).a[0], fraunhofer_domain([tt], n, N, d, mass).b[0]
            dom = integrate(grid, view.density(k), a, b)
            o = {
                "fraunhofer_domain": [float(a), float(b)],
                "domain_estimate": dom,
                "far_field_tube": far[n].area,
                "rel_deviation": (far[n].area - dom) / far[n].area,
                "peak_area": peaks[n].area if n in peaks else None,
                "separatrix_tube": None,
            }
            bounds = _order_tube(view, ens, labels, classifier, n, tol, n_sub) if n in peaks else None
            if bounds is not None:
                o["separatrix_tube"] = {"x_lo": bounds[0], "x_hi": bounds[1],
                                        "P0": integrate(grid, rho0, *bounds)}
            entry["orders"][n] = o
        analysis[tt] = entry
    results["analysis"] = list(analysis.values())

    # branching swarm just right of the upper initial boundary of the n=0 tube
    t_b = min(gcfg.analysis_times)
    view_b, _, cls_b, _ = views[t_b]
    first = results["analysis"][0]["orders"].get(0)
    results["branching"] = None
    if first and first["separatrix_tube"]:
        x0p = first["separatrix_tube"]["x_hi"]
        xs = x0p + gcfg.swarm_offset + np.linspace(0.0, gcfg.swarm_width, gcfg.swarm_count)
        swarm = integrate_trajectories(view_b, xs, n_sub=n_sub)
        sl = classify_ensemble(swarm, cls_b, view_b)
        recs = detect_branching(swarm, sl, [(float(xs[0]), float(xs[-1]))], view_b, cls_b, n_sub=n_sub)
        results["branching"] = {
            "t": float(view_b.times[-1]),
            "x0_plus": x0p,
            "swarm": [float(xs[0]), float(xs[-1])],
            "labels": sorted({lab for lab in sl}, key=str),
            "branches": [{"interval": r.initial_interval, "segments": r.segments} for r in recs],
        }

    # slit-resolved contributions at every analysis time
    centres = sorted(p.x0 for p in cfg.packets)
    intervals = slit_intervals(centres, float(ens.x_init[0]), float(ens.x_init[-1]))
    totals = [integrate(grid, rho0, a, b) for a, b in intervals]
    results["per_slit"] = []
    for t in sorted(gcfg.analysis_times):
        view, peaks, classifier, labels = views[t]
        cols = list(peaks) + [BETWEEN]
        mat = per_slit_contribution(ens, labels, intervals, cols, psi0, view, classifier, n_sub=n_sub)
        results["per_slit"].append({
            "t": float(view.times[-1]),
            "slits": list(range(1, len(intervals) + 1)),
            "intervals": intervals,
            "orders": cols,
            "P": mat,
            "slit_totals": totals,
        })
    results["born_rule"] = _born_rule(store, psi0, cfg)
    return ExperimentReport("grating", times, series, _diagnostics(store), results, store, ens, psi0)


# -- user-defined domains ---------------------------------------------------

def run_custom(cfg: RunConfig) -> ExperimentReport:
    if cfg.scenario != "custom":
        raise ConfigurationError(f"run_custom needs scenario 'custom', got {cfg.scenario!r}")
    psi0, store = _prepare(cfg)
    grid = store.grid
    times = store.times
    doms = cfg.domains or ()
    spans = [(d.label, grid.x_min if d.a is None else d.a, grid.x_max if d.b is None else d.b) for d in doms]
    if not spans:
        spans = [("all", grid.x_min, grid.x_max)]
    labels = [s[0] for s in spans]
    if len(set(labels)) != len(labels):
        raise ConfigurationError("domain labels must be unique")
    series = {}
    flux = {}
    for label, a, b in spans:
        if not grid.x_min <= a < b <= grid.x_max:
            raise ConfigurationError(f"domain {label!r} must satisfy x_min <= a < b <= x_max")
        dom = DomainSeries.static(times, a, b)
        series[f"P_{label}"] = domain_probability(dom, store)
        flux[label] = _flux_stats(dom, store)
    ens, ens_info = _ensemble(cfg, psi0, store)
    cls = domain_classifier(spans, default=BETWEEN, strict=False)
    finals = classify_ensemble(ens, cls, store)
    ens_info["final_counts"] = {lab: finals.count(lab) for lab in labels + [BETWEEN]}
    results = {"ensemble": ens_info, "flux_balance": flux, "born_rule": _born_rule(store, psi0, cfg)}
    return ExperimentReport("custom", times, series, _diagnostics(store), results, store, ens, psi0)


RUNNERS = {"tunnel": run_tunneling, "grating": run_grating, "custom": run_custom}


def run(cfg: RunConfig) -> ExperimentReport:
    return RUNNERS[cfg.scenario](cfg)


# -- output files -----------------------------------------------------------

def write_outputs(report: ExperimentReport, out_dir, export_snapshots: bool = False) -> list[Path]:
    """Write ``report.json``, ``series.csv``, ``trajectories.csv`` and optionally ``snapshots.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    written.append(path)

    path = out / "series.csv"
    names = list(report.series)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + names)
        cols = [np.asarray(report.series[n]) for n in names]
        for i, t in enumerate(report.times.tolist()):
            w.writerow([repr(t)] + [repr(float(c[i])) for c in cols])
    written.append(path)

    if report.ensemble is not None:
        path = out / "trajectories.csv"
        export_trajectories_csv(report.ensemble, path)
        written.append(path)
    if export_snapshots and report.store is not None:
        path = out / "snapshots.csv"
        export_snapshots_csv(report.store, path)
        written.append(path)
    return written
