"""Run configuration: presets for the two reference scenarios and a YAML loader.

A config file is a YAML mapping of flat sections mirroring :class:`RunConfig`::

    scenario: tunnel
    grid: {x_min: -40, x_max: 60, n_points: 16384}
    potential: {kind: tanh_barrier, V0: 150, alpha: 10, x_minus: -2, x_plus: 2}
    packets:
      - {x0: -10, p0: 10, sigma0: 0.2, c: 1.0}
    propagation: {dt: 1.25e-4, n_steps: 12000, snapshot_stride: 10, mass: 1.0}
    trajectories: {count: 200, scheme: even, support_cut: 1.0e-4, n_sub: 4}
    separatrix: {tol: 1.0e-4}
    output: {dir: out, export_snapshots: false}

Every section is optional and overrides the scenario preset key by key.
Unknown sections or keys raise :class:`ConfigurationError`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .grid import Grid1D
from .potentials import PotentialSpec
from .propagator import PropagationConfig
from .states import GaussianSpec

SCENARIOS = ("tunnel", "grating", "custom")


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n_points: int

    def build(self) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, self.n_points)


@dataclass(frozen=True)
class TrajectorySpec:
    count: int = 200
    scheme: str = "even"
    support_cut: float = 1e-4
    n_sub: int = 4

    def __post_init__(self):
        if self.count < 2:
            raise ConfigurationError("trajectories.count must be >= 2")
        if self.scheme not in ("even", "quantile"):
            raise ConfigurationError(f"unknown sampling scheme {self.scheme!r}")
        if not 0 < self.support_cut < 1:
            raise ConfigurationError("trajectories.support_cut must lie in (0, 1)")
        if self.n_sub < 1:
            raise ConfigurationError("trajectories.n_sub must be >= 1")


@dataclass(frozen=True)
class SeparatrixSpec:
    tol: float = 1e-4
    # explicit (x_lo, x_hi) bracket; None lets the run pick one from the ensemble
    bracket: tuple | None = None


@dataclass(frozen=True)
class TunnelSpec:
    """Region bookkeeping for the barrier run."""

    intra_threshold: float = 5e-3


@dataclass(frozen=True)
class GratingSpec:
    slits: int = 5
    spacing: float = 2.0
    analysis_times: tuple = (10.0, 20.0)
    orders: tuple = (0, 1)
    swarm_width: float = 0.030
    swarm_count: int = 31
    swarm_offset: float = 1e-3


@dataclass(frozen=True)
class DomainSpec:
    label: str
    a: float | None
    b: float | None


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    export_snapshots: bool = False


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    grid: GridSpec
    potential: PotentialSpec
    packets: tuple
    propagation: PropagationConfig
    trajectories: TrajectorySpec = field(default_factory=TrajectorySpec)
    separatrix: SeparatrixSpec = field(default_factory=SeparatrixSpec)
    tunnel: TunnelSpec = field(default_factory=TunnelSpec)
    grating: GratingSpec = field(default_factory=GratingSpec)
    domains: tuple = ()
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not self.packets:
            raise ConfigurationError("at least one packet is required")

    @property
    def t_final(self) -> float:
        return self.propagation.t_final

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["packets"] = [
            {**p, "c": _complex_out(p["c"])} for p in d["packets"]
        ]
        d["domains"] = [dict(x) for x in d["domains"]]
        return d


def _complex_out(c):
    c = complex(c)
    return c.real if c.imag == 0 else [c.real, c.imag]


TUNNEL_PACKETS = (
    GaussianSpec(x0=-10.0, p0=10.0, sigma0=0.2, c=1.0),
    GaussianSpec(x0=-12.0, p0=20.0, sigma0=1.6, c=0.75),
    GaussianSpec(x0=-9.0, p0=15.0, sigma0=0.8, c=0.5),
)
TUNNEL_BARRIER = PotentialSpec("tanh_barrier", V0=150.0, alpha=10.0, x_minus=-2.0, x_plus=2.0)


def tunnel_preset() -> RunConfig:
    return RunConfig(
        scenario="tunnel",
        grid=GridSpec(-40.0, 60.0, 16384),
        potential=TUNNEL_BARRIER,
        packets=TUNNEL_PACKETS,
        propagation=PropagationConfig(dt=1.25e-4, n_steps=12000, snapshot_stride=10),
    )


def grating_packets(slits: int = 5, spacing: float = 2.0, sigma0: float = 0.2) -> tuple:
    first = -spacing * (slits - 1) / 2
    return tuple(GaussianSpec(x0=first + spacing * i, p0=0.0, sigma0=sigma0) for i in range(slits))


def grating_preset() -> RunConfig:
    return RunConfig(
        scenario="grating",
        grid=GridSpec(-256.0, 256.0, 16384),
        potential=PotentialSpec("free"),
        packets=grating_packets(),
        propagation=PropagationConfig(dt=1e-3, n_steps=20000, snapshot_stride=20),
    )


def preset(scenario: str) -> RunConfig:
    if scenario == "tunnel":
        return tunnel_preset()
    if scenario == "grating":
        return grating_preset()
    if scenario == "custom":
        # custom runs start from the tunnel grid and clock with no barrier
        return tunnel_preset().replace(scenario="custom", potential=PotentialSpec("free"))
    raise ConfigurationError(f"unknown scenario {scenario!r}")


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _merge(cls, base, section: str, values):
    if values is None:
        return base
    if not isinstance(values, dict):
        raise ConfigurationError(f"section {section!r} must be a mapping")
    unknown = set(values) - _fields(cls)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    try:
        return dataclasses.replace(base, **values) if base is not None else cls(**values)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"invalid {section!r}: {err}") from None


def _packet(d) -> GaussianSpec:
    if not isinstance(d, dict):
        raise ConfigurationError("each packet must be a mapping")
    unknown = set(d) - _fields(GaussianSpec)
    if unknown:
        raise ConfigurationError(f"unknown packet key(s): {sorted(unknown)}")
    d = dict(d)
    c = d.get("c", 1.0)
    if isinstance(c, (list, tuple)):
        if len(c) != 2:
            raise ConfigurationError("complex weight must be [re, im]")
        c = complex(c[0], c[1])
    d["c"] = c
    try:
        return GaussianSpec(**d)
    except TypeError as err:
        raise ConfigurationError(f"invalid packet: {err}") from None


_SECTIONS = {
    "grid": GridSpec,
    "potential": PotentialSpec,
    "propagation": PropagationConfig,
    "trajectories": TrajectorySpec,
    "separatrix": SeparatrixSpec,
    "tunnel": TunnelSpec,
    "grating": GratingSpec,
    "output": OutputSpec,
}


def config_from_dict(data: dict, scenario: str | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a parsed document, starting from the scenario preset."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config document must be a mapping")
    unknown = set(data) - set(_SECTIONS) - {"scenario", "packets", "domains"}
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")
    file_scenario = data.get("scenario")
    if scenario and file_scenario and file_scenario != scenario:
        raise ConfigurationError(f"config is for scenario {file_scenario!r}, command is {scenario!r}")
    scenario = scenario or file_scenario
    if scenario is None:
        raise ConfigurationError("scenario not given")
    cfg = preset(scenario)
    changes: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            values = data[name]
            if name in ("separatrix", "grating") and isinstance(values, dict):
                values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
            changes[name] = _merge(cls, getattr(cfg, name), name, values)
    if "packets" in data:
        if not isinstance(data["packets"], list) or not data["packets"]:
            raise ConfigurationError("packets must be a non-empty list")
        changes["packets"] = tuple(_packet(p) for p in data["packets"])
    if "domains" in data:
        doms = data["domains"]
        if not isinstance(doms, list):
            raise ConfigurationError("domains must be a list")
        changes["domains"] = tuple(_merge(DomainSpec, None, "domains", d) for d in doms)
    try:
        return cfg.replace(**changes)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(str(err)) from None


def load_config(path, scenario: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigurationError(f"malformed config {path}: {err}") from None
    return config_from_dict(data, scenario)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
