"""Exception types shared across the package."""


class PilotWaveError(Exception):
    """Base class for all package errors."""


class ZeroNorm(PilotWaveError):
    """Wavefunction norm too small to normalize."""


class EmptyAxisSet(PilotWaveError):
    """A marginal was requested with no axes kept."""


class RegionOutOfBounds(PilotWaveError):
    """Integration region extends beyond the grid box."""


class GridMismatch(PilotWaveError):
    """Operands live on different grids or have different spin counts."""


class GridCapExceeded(PilotWaveError):
    """Composite grid would exceed the total-point cap."""


class NonFiniteAmplitude(PilotWaveError):
    """Amplitudes became non-finite (time step too large for the potential scale)."""


class MaskedPoint(PilotWaveError):
    """Velocity requested at a point whose interpolation stencil is node-masked."""


class UnnormalizedDensity(PilotWaveError):
    """Operation requires a normalized density field."""


class SupportViolation(PilotWaveError):
    """Samples found in cells where the quantum density vanishes."""


class TooManyUnassigned(PilotWaveError):
    """Too many trajectories fell outside every outcome region at readout."""


class NodalPoint(PilotWaveError):
    """Closed-form velocity requested on the wavefunction's nodal set."""


class SuperluminalBoost(PilotWaveError):
    """Boost speed at or above the invariant speed parameter."""


class ConfigError(PilotWaveError):
    """Experiment configuration could not be parsed or validated."""
