"""Configuration-space grids, spinor wavefunctions and densities.

Conventions used throughout the package:

* grids are uniform and periodic; axis samples sit at cell centers,
  x_i = lower + (i + 1/2)·Δ, so the n cells tile [lower, upper] exactly;
* a wavefunction carries n_spin complex component fields over the grid,
  Ψ_α(q), and its density is ρ(q) = Σ_α |Ψ_α(q)|²;
* integrals are cell sums times the cell volume Δq.

All values here are immutable after construction (arrays are marked
read-only); operations return new values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyAxisSet,
    GridMismatch,
    RegionOutOfBounds,
    ZeroNorm,
)

MAX_TOTAL_POINTS = 2 ** 24
NORM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Axis:
    """One periodic grid axis: n cells of width (upper-lower)/n."""

    n: int
    lower: float
    upper: float

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"axis needs a power-of-two point count >= 8, got {self.n}")
        if not self.upper > self.lower:
            raise ValueError(f"axis needs upper > lower, got [{self.lower}, {self.upper}]")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def points(self) -> np.ndarray:
        return self.lower + (np.arange(self.n) + 0.5) * self.spacing

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the discrete Fourier modes."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)


@dataclass(frozen=True)
class Grid:
    """Tensor product of periodic axes; the shared configuration-space mesh."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ValueError("grid needs at least one axis")
        if self.total_points > MAX_TOTAL_POINTS:
            raise ValueError(
                f"grid has {self.total_points} points, above the cap {MAX_TOTAL_POINTS}"
            )

    @classmethod
    def regular(cls, spec: Iterable[tuple[int, float, float]]) -> "Grid":
        return cls(tuple(Axis(n, lo, hi) for n, lo, hi in spec))

    @property
    def n_axes(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def total_points(self) -> int:
        return int(np.prod([ax.n for ax in self.axes], dtype=np.int64))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([ax.spacing for ax in self.axes]))

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*[ax.points for ax in self.axes], indexing="ij")

    def wrap(self, positions: np.ndarray) -> np.ndarray:
        """Map positions into the box, axis by axis (periodic topology)."""
        out = np.array(positions, dtype=float, copy=True)
        for a, ax in enumerate(self.axes):
            out[..., a] = ax.lower + np.mod(out[..., a] - ax.lower, ax.length)
        return out

    def diameter(self) -> float:
        return float(np.sqrt(sum(ax.length ** 2 for ax in self.axes)))


ROLE_SYSTEM = "system"
ROLE_POINTER = "apparatus-pointer"
ROLE_REST = "rest"
_ROLES = (ROLE_SYSTEM, ROLE_POINTER, ROLE_REST)


@dataclass(frozen=True)
class AxisRole:
    """Physical assignment of one grid axis: which particle, what mass, what role."""

    axis_index: int
    role: str
    particle_index: int
    mass: float

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}, expected one of {_ROLES}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")


def masses_from_roles(grid: Grid, roles: Sequence[AxisRole]) -> np.ndarray:
    """Per-axis masses; every grid axis must carry exactly one role."""
    seen = sorted(r.axis_index for r in roles)
    if seen != list(range(grid.n_axes)):
        raise ValueError(f"roles must cover each grid axis exactly once, got indices {seen}")
    out = np.empty(grid.n_axes)
    for r in roles:
        out[r.axis_index] = r.mass
    return out


def uniform_roles(grid: Grid, mass: float = 1.0, role: str = ROLE_SYSTEM) -> tuple[AxisRole, ...]:
    return tuple(AxisRole(a, role, a, mass) for a in range(grid.n_axes))


# =====================================================================
# Wavefunctions and densities
# =====================================================================


@dataclass(frozen=True)
class SpinorWaveFunction:
    """Complex amplitudes Ψ_α(q) over a grid, with α = 0..n_spin-1."""

    grid: Grid
    amplitudes: np.ndarray  # (n_spin, *grid.shape) complex128
    time: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != self.grid.n_axes + 1 or amps.shape[1:] != self.grid.shape:
            raise ValueError(
                f"amplitude shape {amps.shape} does not match (n_spin, {self.grid.shape})"
            )
        if amps.shape[0] < 1:
            raise ValueError("need n_spin >= 1")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def n_spin(self) -> int:
        return self.amplitudes.shape[0]

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2)) * self.grid.cell_volume

    def with_amplitudes(self, amps: np.ndarray, time: float | None = None) -> "SpinorWaveFunction":
        return SpinorWaveFunction(self.grid, amps, self.time if time is None else time)


@dataclass(frozen=True)
class DensityField:
    """Non-negative real field over a grid; `normalized` marks unit mass."""

    grid: Grid
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"value shape {vals.shape} does not match grid {self.grid.shape}")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite and non-negative")
        if self.normalized:
            total = float(vals.sum()) * self.grid.cell_volume
            if abs(total - 1.0) > NORM_TOL:
                raise ValueError(f"density flagged normalized but integrates to {total}")
        object.__setattr__(self, "values", _readonly(vals))

    def mass(self) -> float:
        return float(self.values.sum()) * self.grid.cell_volume

    def cell_masses(self) -> np.ndarray:
        return self.values * self.grid.cell_volume


def same_grid(a, b) -> bool:
    return a.grid == b.grid


def normalize(psi: SpinorWaveFunction) -> SpinorWaveFunction:
    """Rescale to unit norm; the phase is untouched."""
    nrm = np.sqrt(psi.norm_squared())
    if not nrm > 1e-300:
        raise ZeroNorm(f"cannot normalize wavefunction with norm {nrm}")
    return psi.with_amplitudes(psi.amplitudes / nrm)


def density(psi: SpinorWaveFunction) -> DensityField:
    """ρ(q) = Σ_α |Ψ_α(q)|²; integrates to the squared norm of psi."""
    vals = np.sum(np.abs(psi.amplitudes) ** 2, axis=0)
    total = float(vals.sum()) * psi.grid.cell_volume
    return DensityField(psi.grid, vals, normalized=abs(total - 1.0) <= NORM_TOL)


def marginal(rho: DensityField, keep_axes: Iterable[int]) -> DensityField:
    """Integrate out every axis not in keep_axes (correct volume element)."""
    keep = sorted(set(keep_axes))
    if not keep:
        raise EmptyAxisSet("marginal needs at least one axis to keep")
    if any(a < 0 or a >= rho.grid.n_axes for a in keep):
        raise ValueError(f"keep_axes {keep} outside 0..{rho.grid.n_axes - 1}")
    drop = [a for a in range(rho.grid.n_axes) if a not in keep]
    if not drop:
        return rho
    weight = float(np.prod([rho.grid.axes[a].spacing for a in drop]))
    vals = rho.values.sum(axis=tuple(drop)) * weight
    sub = Grid(tuple(rho.grid.axes[a] for a in keep))
    return DensityField(sub, vals, normalized=rho.normalized)


def _axis_region_weights(ax: Axis, lo: float, hi: float) -> np.ndarray:
    """Fraction of each cell [x_i - Δ/2, x_i + Δ/2] covered by [lo, hi]."""
    if hi < lo:
        raise RegionOutOfBounds(f"empty interval [{lo}, {hi}]")
    tol = 1e-12 * ax.length
    if lo < ax.lower - tol or hi > ax.upper + tol:
        raise RegionOutOfBounds(
            f"interval [{lo}, {hi}] not inside axis box [{ax.lower}, {ax.upper}]"
        )
    edges_lo = ax.points - 0.5 * ax.spacing
    edges_hi = ax.points + 0.5 * ax.spacing
    covered = np.minimum(hi, edges_hi) - np.maximum(lo, edges_lo)
    return np.clip(covered / ax.spacing, 0.0, 1.0)


def region_probability(rho: DensityField, region: Sequence[tuple[float, float]]) -> float:
    """Probability mass of a per-axis interval box; boundary cells count fractionally."""
    if len(region) != rho.grid.n_axes:
        raise RegionOutOfBounds(
            f"region has {len(region)} intervals for {rho.grid.n_axes} axes"
        )
    weighted = rho.values
    for a, (lo, hi) in enumerate(region):
        w = _axis_region_weights(rho.grid.axes[a], lo, hi)
        shape = [1] * rho.grid.n_axes
        shape[a] = rho.grid.axes[a].n
        weighted = weighted * w.reshape(shape)
    p = float(weighted.sum()) * rho.grid.cell_volume
    return p


def inner_product(a: SpinorWaveFunction, b: SpinorWaveFunction) -> complex:
    """⟨a|b⟩ = Σ_α ∫ a_α* b_α dq; conjugate-linear in the first argument."""
    if a.grid != b.grid or a.n_spin != b.n_spin:
        raise GridMismatch("inner product needs identical grids and spin counts")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.cell_volume)


def boundary_density_fraction(rho: DensityField) -> float:
    """Max density in the outermost cell layer, relative to the peak.

    Wave-packet experiments keep this below 1e-10 so the periodic box acts
    like open space; a warning is emitted otherwise.
    """
    peak = float(rho.values.max())
    if peak == 0.0:
        return 0.0
    worst = 0.0
    for a in range(rho.grid.n_axes):
        sl_lo = [slice(None)] * rho.grid.n_axes
        sl_hi = [slice(None)] * rho.grid.n_axes
        sl_lo[a] = 0
        sl_hi[a] = -1
        worst = max(worst, float(rho.values[tuple(sl_lo)].max()),
                    float(rho.values[tuple(sl_hi)].max()))
    return worst / peak


def check_boundary_density(rho: DensityField, threshold: float = 1e-10) -> float:
    frac = boundary_density_fraction(rho)
    if frac > threshold:
        warnings.warn(
            f"boundary density fraction {frac:.3e} exceeds {threshold:.1e}; "
            "the periodic box is too small for this state",
            stacklevel=2,
        )
    return frac


# =====================================================================
# Wave-packet constructors (shared by tests and presets)
# =====================================================================


def gaussian_1d(x: np.ndarray, center: float, sigma: float, momentum: float = 0.0,
                hbar: float = 1.0) -> np.ndarray:
    """Unnormalized Gaussian packet exp(-(x-x0)²/4σ² + i p x/ħ)."""
    return np.exp(-((x - center) ** 2) / (4.0 * sigma ** 2) + 1j * momentum * x / hbar)


def gaussian_wavefunction(grid: Grid, centers: Sequence[float], sigmas: Sequence[float],
                          momenta: Sequence[float] | None = None, n_spin: int = 1,
                          spinor: Sequence[complex] | None = None,
                          hbar: float = 1.0, time: float = 0.0) -> SpinorWaveFunction:
    """Normalized product-Gaussian packet, optionally with a global spinor."""
    momenta = momenta if momenta is not None else [0.0] * grid.n_axes
    amp = np.ones(grid.shape, dtype=np.complex128)
    for a, ax in enumerate(grid.axes):
        f = gaussian_1d(ax.points, centers[a], sigmas[a], momenta[a], hbar)
        shape = [1] * grid.n_axes
        shape[a] = ax.n
        amp = amp * f.reshape(shape)
    if spinor is None:
        spinor = [1.0] + [0.0] * (n_spin - 1)
    comps = np.array(spinor, dtype=np.complex128).reshape(-1, *([1] * grid.n_axes))
    return normalize(SpinorWaveFunction(grid, comps * amp[None], time))


def plane_wave(grid: Grid, mode_indices: Sequence[int], hbar: float = 1.0,
               time: float = 0.0) -> SpinorWaveFunction:
    """Normalized single plane wave e^{ik·x} with k_a = 2π·n_a/L_a."""
    amp = np.ones(grid.shape, dtype=np.complex128)
    mesh = grid.meshgrid()
    for a, ax in enumerate(grid.axes):
        k = 2.0 * np.pi * mode_indices[a] / ax.length
        amp = amp * np.exp(1j * k * mesh[a])
    return normalize(SpinorWaveFunction(grid, amp[None], time))
