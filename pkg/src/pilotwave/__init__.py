"""Pilot-wave dynamics: spectral wave propagation, guided trajectory
ensembles, pointer-based measurement statistics, coarse-grained relaxation,
and the harmonic-chain phonon example."""

__version__ = "0.1.0"

from .errors import PilotWaveError
from .state import (
    Axis,
    AxisRole,
    DensityField,
    Grid,
    SpinorWaveFunction,
    density,
    inner_product,
    marginal,
    normalize,
    region_probability,
)

__all__ = [
    "Axis",
    "AxisRole",
    "DensityField",
    "Grid",
    "PilotWaveError",
    "SpinorWaveFunction",
    "density",
    "inner_product",
    "marginal",
    "normalize",
    "region_probability",
    "__version__",
]
