"""Pointer-based measurement experiments and instrumental outcome statistics.

A run couples the measured degree of freedom to a heavy pointer through
g·K̂⊗p̂_pointer inside a switching window, lets the pointer branches
separate until their mutual overlap is negligible, and then reads each
trajectory's outcome off the pointer region it occupies. Outcome
frequencies are compared with the squared branch amplitudes |c_k|².

Two observable kinds are supported: indicator projectors onto disjoint
regions of a system axis, and spin-component projectors for two-component
wavefunctions (the Stern-Gerlach case, where the deflection axis itself is
the pointer and the coupling is a spin-dependent linear potential).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridCapExceeded, TooManyUnassigned
from .guidance import TrajectoryHistory, TrajectorySet, transport
from .propagator import (
    Hamiltonian,
    PointerCoupling,
    Segment,
    diagonal_spin_potential,
    scalar_to_matrix_potential,
    segment_energy_drifts,
)
from .state import (
    MAX_TOTAL_POINTS,
    Axis,
    AxisRole,
    Grid,
    ROLE_POINTER,
    SpinorWaveFunction,
    density,
    gaussian_1d,
    masses_from_roles,
    normalize,
    region_probability,
)

OBSERVABLE_REGION = "region"
OBSERVABLE_SPIN = "spin"
UNASSIGNED_LIMIT = 1e-3


@dataclass(frozen=True)
class DiscreteObservable:
    """Non-degenerate discrete observable, K̂ = Σ_k k·Π_k.

    kind "region": Π_k projects onto disjoint intervals of one system axis.
    kind "spin":   Π_k projects onto spin components (n_spin == len(eigenvalues)).
    """

    eigenvalues: tuple[float, ...]
    kind: str
    regions: tuple[tuple[float, float], ...] | None = None
    system_axis: int = 0

    def __post_init__(self):
        if len(set(self.eigenvalues)) != len(self.eigenvalues):
            raise ValueError("eigenvalues must be distinct (non-degenerate spectrum)")
        if self.kind == OBSERVABLE_REGION:
            if self.regions is None or len(self.regions) != len(self.eigenvalues):
                raise ValueError("region observable needs one interval per eigenvalue")
            ordered = sorted(self.regions)
            for (lo1, hi1), (lo2, hi2) in zip(ordered, ordered[1:]):
                if hi1 > lo2:
                    raise ValueError("eigenvalue regions must be disjoint")
        elif self.kind != OBSERVABLE_SPIN:
            raise ValueError(f"unknown observable kind {self.kind!r}")

    @property
    def n_outcomes(self) -> int:
        return len(self.eigenvalues)

    def gap(self) -> float:
        if len(self.eigenvalues) < 2:
            return np.inf
        vals = sorted(self.eigenvalues)
        return min(b - a for a, b in zip(vals, vals[1:]))


@dataclass(frozen=True)
class MeasurementSetup:
    """Pointer axis, coupling window, and outcome regions for one experiment."""

    observable: DiscreteObservable
    pointer_points: int
    pointer_box: tuple[float, float]
    pointer_mass: float
    pointer_center: float
    pointer_width: float
    coupling: float                       # g
    window: tuple[float, float]           # (t_on, t_off)
    readout_time: float
    outcome_regions: tuple[tuple[float, float], ...]

    def __post_init__(self):
        t_on, t_off = self.window
        if not (t_on < t_off <= self.readout_time):
            raise ValueError("need t_on < t_off <= readout_time")
        if len(self.outcome_regions) != self.observable.n_outcomes:
            raise ValueError("one outcome region per eigenvalue required")
        ordered = sorted(self.outcome_regions)
        for (lo1, hi1), (lo2, hi2) in zip(ordered, ordered[1:]):
            if hi1 > lo2:
                raise ValueError("outcome regions must be disjoint")
        separation = abs(self.coupling) * (t_off - t_on) * self.observable.gap()
        if not separation > 6.0 * self.pointer_width:
            raise ValueError(
                f"pointer separation {separation:.3g} must exceed 6x width "
                f"{self.pointer_width:.3g}: branches would stay distinguishable "
                "only marginally"
            )

    def pointer_axis_spec(self) -> Axis:
        return Axis(self.pointer_points, *self.pointer_box)


@dataclass(frozen=True)
class OutcomeStatistics:
    """Counts and frequencies per outcome against the |c_k|² targets."""

    eigenvalues: tuple[float, ...]
    counts: np.ndarray
    targets: np.ndarray
    overlap: np.ndarray | None
    unassigned: int
    ensemble_size: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.ensemble_size

    def max_offdiagonal_overlap(self) -> float:
        if self.overlap is None:
            return float("nan")
        off = self.overlap - np.diag(np.diag(self.overlap))
        return float(np.abs(off).max())

    def to_json(self) -> str:
        payload = {
            "eigenvalues": list(self.eigenvalues),
            "counts": [int(c) for c in self.counts],
            "frequencies": [float(f) for f in self.frequencies],
            "targets": [float(t) for t in self.targets],
            "z_scores": [float(z) for z in born_rule_report(self)],
            "overlap_matrix": None if self.overlap is None
            else [[float(x) for x in row] for row in self.overlap],
            "unassigned": self.unassigned,
            "ensemble_size": self.ensemble_size,
            "seed": self.seed,
            "meta": self.meta,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


# =====================================================================
# Building the composite state and Hamiltonian
# =====================================================================


def pointer_ground_state(setup: MeasurementSetup) -> np.ndarray:
    ax = setup.pointer_axis_spec()
    a0 = gaussian_1d(ax.points, setup.pointer_center, setup.pointer_width)
    return a0 / np.sqrt(np.sum(np.abs(a0) ** 2) * ax.spacing)


def compose_initial(system_psi: SpinorWaveFunction,
                    setup: MeasurementSetup) -> SpinorWaveFunction:
    """Product of the system state with the pointer's ready packet |A0⟩."""
    ax = setup.pointer_axis_spec()
    total = system_psi.grid.total_points * ax.n
    if total > MAX_TOTAL_POINTS:
        raise GridCapExceeded(f"composite grid would hold {total} points")
    grid = Grid(system_psi.grid.axes + (ax,))
    a0 = pointer_ground_state(setup)
    amps = system_psi.amplitudes[..., None] * a0
    return normalize(SpinorWaveFunction(grid, amps, system_psi.time))


def composite_roles(system_roles: Sequence[AxisRole],
                    setup: MeasurementSetup) -> tuple[AxisRole, ...]:
    n_sys = len(system_roles)
    pointer = AxisRole(n_sys, ROLE_POINTER, n_sys, setup.pointer_mass)
    return tuple(system_roles) + (pointer,)


def _coupling_field(setup: MeasurementSetup, grid: Grid, n_spin: int) -> np.ndarray:
    obs = setup.observable
    values = np.zeros((n_spin,) + grid.shape)
    if obs.kind == OBSERVABLE_SPIN:
        for s, k in enumerate(obs.eigenvalues):
            values[s] = k
    else:
        ax = grid.axes[obs.system_axis]
        kx = np.zeros(ax.n)
        for (lo, hi), k in zip(obs.regions, obs.eigenvalues):
            kx[(ax.points >= lo) & (ax.points < hi)] = k
        shape = [1] * (grid.n_axes + 1)
        shape[obs.system_axis + 1] = ax.n
        values[:] = kx.reshape(shape[1:])
    return values


def measurement_hamiltonian(setup: MeasurementSetup, grid: Grid,
                            roles: Sequence[AxisRole],
                            system_potential: np.ndarray | None = None,
                            n_spin: int = 1, hbar: float = 1.0) -> Hamiltonian:
    """Schedule: free (or system-only) H, plus g·K̂⊗p̂_pointer inside the window."""
    pointer_axis = grid.n_axes - 1
    base_v = None
    if system_potential is not None:
        base_v = scalar_to_matrix_potential(system_potential, n_spin)
    coupling = PointerCoupling(_coupling_field(setup, grid, n_spin), pointer_axis,
                               setup.coupling)
    t_on, t_off = setup.window
    segments = (
        Segment(t_start=-np.inf, potential=base_v),
        Segment(t_start=t_on, potential=base_v, coupling=coupling),
        Segment(t_start=t_off, potential=base_v),
    )
    return Hamiltonian(grid, tuple(masses_from_roles(grid, roles)), n_spin, segments, hbar)


# =====================================================================
# Branch overlap and readout
# =====================================================================


def branch_pointer_densities(psi: SpinorWaveFunction,
                             setup: MeasurementSetup) -> list[np.ndarray]:
    """Unnormalized pointer marginal of each branch (mass = branch weight)."""
    obs = setup.observable
    grid = psi.grid
    pointer_axis = grid.n_axes - 1
    other = tuple(a for a in range(grid.n_axes) if a != pointer_axis)
    weight = float(np.prod([grid.axes[a].spacing for a in other])) if other else 1.0
    dens_spin = np.abs(psi.amplitudes) ** 2
    out = []
    if obs.kind == OBSERVABLE_SPIN:
        for s in range(obs.n_outcomes):
            branch = dens_spin[s]
            out.append(branch.sum(axis=other) * weight if other else branch)
    else:
        ax = grid.axes[obs.system_axis]
        for lo, hi in obs.regions:
            sel = (ax.points >= lo) & (ax.points < hi)
            shape = [1] * (grid.n_axes + 1)
            shape[obs.system_axis + 1] = ax.n
            masked = dens_spin * sel.reshape(shape)
            out.append(masked.sum(axis=(0,) + tuple(a + 1 for a in other)) * weight)
    return out


def overlap_matrix(psi: SpinorWaveFunction, setup: MeasurementSetup) -> np.ndarray:
    """O_ij = ∫ √ρ_i(y) √ρ_j(y) dy over the pointer coordinate.

    ρ_k is branch k's unnormalized pointer density, so the diagonal holds the
    branch masses and O_ij → √(mass_i·mass_j) for fully overlapping packets.
    """
    branches = branch_pointer_densities(psi, setup)
    dy = psi.grid.axes[-1].spacing
    roots = [np.sqrt(b) for b in branches]
    n = len(roots)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = float(np.sum(roots[i] * roots[j]) * dy)
    return out


def branch_targets(system_psi: SpinorWaveFunction, obs: DiscreteObservable) -> np.ndarray:
    """|c_k|² from the pre-measurement system state."""
    if obs.kind == OBSERVABLE_SPIN:
        dens_spin = np.abs(system_psi.amplitudes) ** 2
        dq = system_psi.grid.cell_volume
        return np.array([float(dens_spin[s].sum()) * dq for s in range(obs.n_outcomes)])
    rho = density(system_psi)
    out = []
    for lo, hi in obs.regions:
        region = []
        for a, ax in enumerate(rho.grid.axes):
            region.append((lo, hi) if a == obs.system_axis else (ax.lower, ax.upper))
        out.append(region_probability(rho, region))
    return np.array(out)


def readout(traj: TrajectorySet, setup: MeasurementSetup, targets: np.ndarray,
            overlap: np.ndarray | None = None,
            pointer_axis: int | None = None) -> OutcomeStatistics:
    """Assign each trajectory the outcome whose pointer region contains it."""
    axis = traj.grid.n_axes - 1 if pointer_axis is None else pointer_axis
    y = traj.grid.wrap(traj.positions)[:, axis]
    counts = np.zeros(setup.observable.n_outcomes, dtype=np.int64)
    assigned = np.zeros(traj.m, dtype=bool)
    for k, (lo, hi) in enumerate(setup.outcome_regions):
        sel = (y >= lo) & (y < hi) & ~assigned
        counts[k] = int(np.count_nonzero(sel))
        assigned |= sel
    unassigned = traj.m - int(counts.sum())
    if unassigned >= UNASSIGNED_LIMIT * traj.m:
        raise TooManyUnassigned(
            f"{unassigned} of {traj.m} trajectories fell outside every outcome region"
        )
    return OutcomeStatistics(setup.observable.eigenvalues, counts, np.asarray(targets),
                             overlap, unassigned, traj.m, traj.seed,
                             meta={"cap_triggers": traj.cap_triggers})


def born_rule_report(stats: OutcomeStatistics) -> np.ndarray:
    """z_k = (freq_k − |c_k|²) / √(|c_k|²(1−|c_k|²)/M)."""
    p = stats.targets
    se = np.sqrt(p * (1.0 - p) / stats.ensemble_size)
    return (stats.frequencies - p) / se


# =====================================================================
# Stern-Gerlach experiment
# =====================================================================


@dataclass(frozen=True)
class SternGerlachConfig:
    """Spin-1/2 packet split by a spin-dependent linear potential."""

    grid_points: int = 1024
    box_length: float = 64.0
    packet_width: float = 1.0
    spin_up_amplitude: complex = np.sqrt(0.5)
    spin_down_amplitude: complex = np.sqrt(0.5)
    gradient: float = 4.0          # μb: potential is ∓μb·z per spin component
    window: tuple[float, float] = (0.0, 1.0)
    readout_time: float = 4.0
    mass: float = 1.0
    hbar: float = 1.0
    ensemble_size: int = 10_000
    seed: int = 11
    dt: float = 0.002
    record_every: float | None = None


def stern_gerlach_setup(config: SternGerlachConfig) -> MeasurementSetup:
    """Readout setup for the deflection axis; validates outcome separation.

    The kick ±μb·T turns into packet separation gap·μb·T·(t_read − t_mid)/m,
    so the effective coupling below makes the setup's 6x-width construction
    check the physical separation at readout.
    """
    half = 0.5 * config.box_length
    t_on, t_off = config.window
    g_eff = config.gradient * (config.readout_time - 0.5 * (t_on + t_off)) / config.mass
    return MeasurementSetup(
        observable=DiscreteObservable((1.0, -1.0), OBSERVABLE_SPIN),
        pointer_points=config.grid_points,
        pointer_box=(-half, half),
        pointer_mass=config.mass,
        pointer_center=0.0,
        pointer_width=config.packet_width,
        coupling=g_eff,
        window=config.window,
        readout_time=config.readout_time,
        outcome_regions=((0.0, half), (-half, 0.0)),
    )


def stern_gerlach_experiment(config: SternGerlachConfig
                             ) -> tuple[OutcomeStatistics, TrajectoryHistory]:
    """Run the spin measurement; outcomes read from z > 0 / z < 0 at readout."""
    from .equilibrium import sample_density

    half = 0.5 * config.box_length
    grid = Grid.regular([(config.grid_points, -half, half)])
    z = grid.axes[0].points
    alpha, beta = config.spin_up_amplitude, config.spin_down_amplitude
    packet = gaussian_1d(z, 0.0, config.packet_width)
    amps = np.stack([alpha * packet, beta * packet])
    psi = normalize(SpinorWaveFunction(grid, amps, time=0.0))

    roles = (AxisRole(0, ROLE_POINTER, 0, config.mass),)
    t_on, t_off = config.window
    v_window = diagonal_spin_potential([-config.gradient * z, config.gradient * z])
    segments = (
        Segment(t_start=-np.inf),
        Segment(t_start=t_on, potential=v_window),
        Segment(t_start=t_off),
    )
    h = Hamiltonian(grid, (config.mass,), 2, segments, config.hbar)
    setup = stern_gerlach_setup(config)

    traj = sample_density(density(psi), config.ensemble_size, config.seed)
    record_every = config.record_every or 10 * config.dt
    record = sorted(set(float(t) for t in
                        np.arange(0.0, config.readout_time + 1e-12, record_every))
                    | {t_on, t_off, config.readout_time})
    speed_cap = 10.0 * grid.diameter() / config.readout_time
    psi_final, traj, history = transport(psi, h, traj, roles, config.readout_time,
                                         config.dt, record_times=record,
                                         speed_cap=speed_cap)

    targets = np.array([abs(alpha) ** 2, abs(beta) ** 2])
    targets = targets / targets.sum()
    overlap = overlap_matrix(psi_final, setup)
    stats = readout(traj, setup, targets, overlap, pointer_axis=0)
    meta = dict(stats.meta)
    meta["norm_drift"] = abs(psi_final.norm_squared() - psi.norm_squared())
    meta["energy_drift_rel_segments"] = segment_energy_drifts(
        psi, h, config.readout_time, config.dt)
    stats = OutcomeStatistics(stats.eigenvalues, stats.counts, stats.targets,
                              stats.overlap, stats.unassigned, stats.ensemble_size,
                              stats.seed, meta)
    return stats, history
