"""Equilibrium sampling, total-variation metrics, and coarse-grained relaxation.

The coarse-grained H function over bins B is

    H̄ = Σ_B P̄(B) ln( P̄(B) / ρ̄(B) )

with P̄ the empirical ensemble fraction and ρ̄ the exact density mass per
bin. H̄ >= 0, vanishes exactly when the histograms coincide, and sits at a
χ²-governed statistical floor ≈ (bins − 1)/2M for an equilibrium ensemble.
The relaxation experiment starts an ensemble away from the quantum
density, transports it with the guidance flow, and records H̄(t).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
import numpy as np

from .errors import SupportViolation, UnnormalizedDensity
from .guidance import TrajectorySet, transport
from .propagator import Hamiltonian
from .state import (
    DensityField,
    Grid,
    SpinorWaveFunction,
    density,
    normalize,
    uniform_roles,
)


@dataclass(frozen=True)
class CoarseGraining:
    """Per-axis bin counts; each must divide the grid resolution exactly."""

    bins: tuple[int, ...]

    def __post_init__(self):
        if any(b < 2 for b in self.bins):
            raise ValueError("need at least 2 bins per axis")

    def validate(self, grid: Grid) -> None:
        if len(self.bins) != grid.n_axes:
            raise ValueError("one bin count per grid axis required")
        for b, ax in zip(self.bins, grid.axes):
            if ax.n % b != 0:
                raise ValueError(f"{b} bins do not divide {ax.n} grid points")

    def density_masses(self, rho: DensityField) -> np.ndarray:
        """Exact probability mass per coarse bin."""
        self.validate(rho.grid)
        vals = rho.cell_masses()
        shape = []
        for b, ax in zip(self.bins, rho.grid.axes):
            shape.extend([b, ax.n // b])
        sum_axes = tuple(range(1, 2 * len(self.bins), 2))
        return vals.reshape(shape).sum(axis=sum_axes)

    def counts(self, traj: TrajectorySet) -> np.ndarray:
        """Ensemble histogram over the coarse bins."""
        self.validate(traj.grid)
        pos = traj.grid.wrap(traj.positions)
        idx = []
        for a, (b, ax) in enumerate(zip(self.bins, traj.grid.axes)):
            width = ax.length / b
            i = np.floor((pos[:, a] - ax.lower) / width).astype(np.int64)
            idx.append(np.clip(i, 0, b - 1))
        flat = np.ravel_multi_index(tuple(idx), self.bins)
        return np.bincount(flat, minlength=int(np.prod(self.bins))).reshape(self.bins)


@dataclass(frozen=True)
class HFunctionSeries:
    """H̄(t) samples from one relaxation run, with full provenance."""

    times: np.ndarray
    h_values: np.ndarray
    ensemble_size: int
    coarse_graining: CoarseGraining
    seed: int
    params: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,h,ensemble_size,seed\n")
        for t, h in zip(self.times, self.h_values):
            buf.write(f"{float(t)!r},{float(h)!r},{self.ensemble_size},{self.seed}\n")
        return buf.getvalue()

    def slope(self) -> float:
        """Least-squares slope of H̄ against time."""
        return float(np.polyfit(self.times, self.h_values, 1)[0])


def sample_density(rho: DensityField, m: int, seed: int, time: float = 0.0) -> TrajectorySet:
    """Draw M configuration points from a gridded density.

    Inverse-CDF over flattened cells plus uniform jitter inside each cell;
    bit-reproducible for a given seed.
    """
    if not rho.normalized:
        raise UnnormalizedDensity("sampling needs a normalized density")
    if m < 1:
        raise ValueError("need at least one sample")
    masses = rho.cell_masses().reshape(-1)
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    cells = np.searchsorted(cdf, rng.random(m), side="right")
    cells = np.minimum(cells, masses.size - 1)
    multi = np.unravel_index(cells, rho.grid.shape)
    jitter = rng.random((m, rho.grid.n_axes)) - 0.5
    pos = np.empty((m, rho.grid.n_axes))
    for a, ax in enumerate(rho.grid.axes):
        pos[:, a] = ax.points[multi[a]] + jitter[:, a] * ax.spacing
    return TrajectorySet(rho.grid, pos, time=time, seed=seed)


def total_variation(traj: TrajectorySet, rho: DensityField, cg: CoarseGraining) -> float:
    """½ Σ_B |empirical fraction − exact mass| over the coarse bins."""
    if not rho.normalized:
        raise UnnormalizedDensity("total variation needs a normalized density")
    emp = cg.counts(traj) / traj.m
    exact = cg.density_masses(rho)
    return 0.5 * float(np.abs(emp - exact).sum())


def tv_expected_iid(rho: DensityField, cg: CoarseGraining, m: int) -> float:
    """Closed-form expectation of the i.i.d. sampling TV: Σ_B sqrt(p(1−p)/2πM)."""
    p = cg.density_masses(rho).reshape(-1)
    return float(np.sum(np.sqrt(p * (1.0 - p) / (2.0 * np.pi * m))))


def tv_resampled_baseline(rho: DensityField, cg: CoarseGraining, m: int,
                          seed: int, n_resamples: int = 16) -> float:
    """Mean TV of fresh i.i.d. redraws from rho itself (the equivariance yardstick)."""
    vals = [total_variation(sample_density(rho, m, seed + 7919 * (i + 1)), rho, cg)
            for i in range(n_resamples)]
    return float(np.mean(vals))


def h_function(traj: TrajectorySet, rho: DensityField, cg: CoarseGraining) -> float:
    """Coarse-grained relative entropy Σ P̄ ln(P̄/ρ̄); empty bins contribute zero."""
    if not rho.normalized:
        raise UnnormalizedDensity("H function needs a normalized density")
    emp = cg.counts(traj).reshape(-1) / traj.m
    exact = cg.density_masses(rho).reshape(-1)
    occupied = emp > 0
    if np.any(occupied & (exact == 0.0)):
        raise SupportViolation("samples found outside the quantum support")
    e, x = emp[occupied], exact[occupied]
    return float(np.sum(e * np.log(e / x)))


def equilibrium_h_floor(n_occupied_bins: int, m: int) -> float:
    """χ² expectation of H̄ for an equilibrium ensemble: (bins − 1)/2M."""
    return (n_occupied_bins - 1) / (2.0 * m)


# =====================================================================
# Relaxation experiment
# =====================================================================


@dataclass(frozen=True)
class RelaxationConfig:
    """Random-phase multimode state on a periodic 2D box, started out of equilibrium."""

    grid_points: int = 64
    box_length: float = 2.0 * np.pi
    mode_range: int = 2            # plane-wave indices n_x, n_y in [-range, range]
    n_modes: int = 16
    phase_seed: int = 20260808
    ensemble_size: int = 10_000
    sample_seed: int = 7
    duration: float = 16.0
    dt: float = 0.01
    record_every: float = 0.5
    coarse_bins: int = 32
    hbar: float = 1.0
    mass: float = 1.0
    initial: str = "patch"         # "patch" (central quarter) or "equilibrium"
    patch_fraction: float = 0.5


def multimode_state(config: RelaxationConfig) -> tuple[SpinorWaveFunction, Hamiltonian]:
    """Equal-amplitude random-phase superposition of plane-wave eigenmodes."""
    grid = Grid.regular([(config.grid_points, 0.0, config.box_length)] * 2)
    roles = uniform_roles(grid, mass=config.mass)
    rng = np.random.default_rng(config.phase_seed)
    r = config.mode_range
    modes = [(nx, ny) for nx in range(-r, r + 1) for ny in range(-r, r + 1)]
    rng.shuffle(modes)
    modes = sorted(modes[: config.n_modes])
    if len(modes) < 8:
        raise ValueError("relaxation needs at least 8 modes")
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(modes))
    xg, yg = grid.meshgrid()
    amp = np.zeros(grid.shape, dtype=np.complex128)
    kunit = 2.0 * np.pi / config.box_length
    for (nx, ny), phi in zip(modes, phases):
        amp += np.exp(1j * (kunit * nx * xg + kunit * ny * yg + phi))
    psi = normalize(SpinorWaveFunction(grid, amp[None], time=0.0))
    h = Hamiltonian.free(grid, roles, hbar=config.hbar)
    return psi, h


def _patch_ensemble(grid: Grid, fraction: float, m: int, seed: int) -> TrajectorySet:
    rng = np.random.default_rng(seed)
    pos = np.empty((m, grid.n_axes))
    for a, ax in enumerate(grid.axes):
        half = 0.5 * fraction * ax.length
        center = 0.5 * (ax.lower + ax.upper)
        pos[:, a] = rng.uniform(center - half, center + half, size=m)
    return TrajectorySet(grid, pos, time=0.0, seed=seed)


def relaxation_experiment(config: RelaxationConfig) -> HFunctionSeries:
    """Joint wavefunction/ensemble evolution, recording H̄ at a fixed cadence."""
    psi, h = multimode_state(config)
    roles = uniform_roles(psi.grid, mass=config.mass)
    cg = CoarseGraining((config.coarse_bins,) * psi.grid.n_axes)
    cg.validate(psi.grid)

    if config.initial == "patch":
        traj = _patch_ensemble(psi.grid, config.patch_fraction,
                               config.ensemble_size, config.sample_seed)
    elif config.initial == "equilibrium":
        traj = sample_density(density(psi), config.ensemble_size, config.sample_seed)
    else:
        raise ValueError(f"unknown initial ensemble {config.initial!r}")

    record = list(np.arange(0.0, config.duration + 1e-12, config.record_every))
    speed_cap = 10.0 * psi.grid.diameter() / config.duration

    times: list[float] = []
    h_vals: list[float] = []

    def observer(psi_t: SpinorWaveFunction, traj_t: TrajectorySet) -> None:
        times.append(psi_t.time)
        h_vals.append(h_function(traj_t, density(psi_t), cg))

    from .propagator import energy_expectation

    e0 = energy_expectation(psi, h)
    n0 = psi.norm_squared()
    psi_f, traj, _ = transport(psi, h, traj, roles, config.duration, config.dt,
                               record_times=record, speed_cap=speed_cap,
                               observer=observer)
    params = {k: getattr(config, k) for k in config.__dataclass_fields__}
    params["cap_triggers"] = traj.cap_triggers
    params["norm_drift"] = abs(psi_f.norm_squared() - n0)
    params["energy_drift_rel"] = abs(energy_expectation(psi_f, h) - e0) / abs(e0)
    return HFunctionSeries(np.array(times), np.array(h_vals), config.ensemble_size,
                           cg, config.sample_seed, params)
