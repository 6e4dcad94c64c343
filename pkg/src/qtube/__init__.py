"""Wave-packet propagation, Bohmian trajectories and probability-tube analysis in one dimension."""

from .errors import ConfigurationError, NumericalError, QtubeError
from .grid import Grid1D, integrate, interpolate
from .potentials import PotentialSpec, sample_potential
from .propagator import PropagationConfig, SnapshotStore, propagate
from .states import GaussianSpec, WaveFunction, density, gaussian_packet, superpose, velocity_field
from .trajectories import TrajectoryEnsemble, integrate_trajectories, sample_initial_conditions

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "GaussianSpec",
    "Grid1D",
    "NumericalError",
    "PotentialSpec",
    "PropagationConfig",
    "QtubeError",
    "SnapshotStore",
    "TrajectoryEnsemble",
    "WaveFunction",
    "density",
    "gaussian_packet",
    "integrate",
    "integrate_trajectories",
    "interpolate",
    "propagate",
    "sample_initial_conditions",
    "sample_potential",
    "superpose",
    "velocity_field",
]
