"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the CLI can
map them onto distinct exit codes.
"""


class QtubeError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(QtubeError, ValueError):
    """Invalid run parameters, presets or config files."""


class RangeError(QtubeError, ValueError):
    """A position or interval falls outside the grid."""


class BracketError(QtubeError, ValueError):
    """Separatrix bracket endpoints share the same final label."""


class NumericalError(QtubeError, ArithmeticError):
    """Base for failures of the numerical machinery."""


class InstabilityError(NumericalError):
    """Non-finite amplitudes appeared during propagation."""


class DegenerateStateError(NumericalError):
    """The wave function carries no usable density."""


class NumericalConsistencyError(NumericalError):
    """A quantity that must be real or bounded is not, beyond tolerance."""


class EscapeError(NumericalError):
    """A trajectory left the grid."""

    def __init__(self, message, traj_index=None):
        super().__init__(message)
        self.traj_index = traj_index


class OrderingViolation(NumericalError):
    """Two trajectories swapped order during integration."""


class ClassificationError(NumericalError):
    """A final position is not covered by any domain."""


class BranchingSuspected(NumericalError):
    """Labels are non-monotone inside a separatrix bracket."""


class SegmentationError(NumericalError):
    """A diffraction peak could not be isolated between two minima."""


class ResolutionError(NumericalError):
    """The trajectory ensemble is too sparse for the requested analysis."""
