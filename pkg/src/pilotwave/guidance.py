"""Velocity fields and deterministic trajectory transport.

The velocity on axis a is

    v_a(q) = (ħ/m_a) · Im( Σ_α Ψ_α*(q) ∂_a Ψ_α(q) ) / Σ_α |Ψ_α(q)|²

with the gradient taken spectrally. Cells where the density falls below
node_epsilon × max(density) are masked; interpolated speeds touching the
mask (or exceeding the configured cap) are clipped, and every clip event
is counted so runs can report whether the regularization ever mattered.

Trajectories follow dQ/dt = v(Q, t) with classical RK4; stage velocities
interpolate multilinearly in space and linearly in time between the two
bracketing wavefunction snapshots.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, MaskedPoint
from .state import (
    AxisRole,
    Grid,
    SpinorWaveFunction,
    density,
    masses_from_roles,
)

NODE_EPSILON_REL = 1e-12


@dataclass(frozen=True)
class VelocityField:
    """Per-axis guidance velocities on a grid at one instant."""

    grid: Grid
    components: tuple[np.ndarray, ...]
    time: float
    node_mask: np.ndarray
    speed_cap: float = np.inf


@dataclass(frozen=True)
class TrajectorySet:
    """M configuration points sharing one clock; RNG lineage recorded."""

    grid: Grid
    positions: np.ndarray  # (M, n_axes)
    time: float
    seed: int | None = None
    cap_triggers: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != self.grid.n_axes:
            raise ValueError(f"positions shape {pos.shape} does not match grid axes")
        if pos.shape[0] < 1:
            raise ValueError("need at least one trajectory")
        object.__setattr__(self, "positions", self.grid.wrap(pos))

    @property
    def m(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class TrajectoryHistory:
    """Recorded ensemble positions: times (T,), positions (T, M, n_axes)."""

    grid: Grid
    times: np.ndarray
    positions: np.ndarray
    seed: int | None = None
    cap_triggers: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        axes = ",".join(f"q{a}" for a in range(self.grid.n_axes))
        buf.write(f"trajectory_id,time,{axes}\n")
        for ti, t in enumerate(self.times):
            for m in range(self.positions.shape[1]):
                coords = ",".join(repr(float(x)) for x in self.positions[ti, m])
                buf.write(f"{m},{float(t)!r},{coords}\n")
        return buf.getvalue()


def _spectral_gradient(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """d/dx along one spatial axis of (n_spin, *shape); Nyquist bin dropped."""
    k = grid.axes[axis].wavenumbers()
    k[grid.axes[axis].n // 2] = 0.0  # odd operator: the Nyquist mode carries no sign
    shape = [1] * (grid.n_axes + 1)
    shape[axis + 1] = grid.axes[axis].n
    ft = np.fft.fft(f, axis=axis + 1)
    return np.fft.ifft(1j * k.reshape(shape) * ft, axis=axis + 1)


def velocity_field(psi: SpinorWaveFunction, roles: Sequence[AxisRole],
                   hbar: float = 1.0, speed_cap: float = np.inf,
                   node_epsilon_rel: float = NODE_EPSILON_REL,
                   coupling=None) -> VelocityField:
    """Guidance velocities from a (spinor) wavefunction; nodes masked.

    While a g·K̂⊗p̂ pointer interaction is switched on, the probability
    current on the pointer axis carries the extra drift g·K, so the field
    gains g·(Σ_α K_α|Ψ_α|²)/ρ there; pass the active coupling to include it.
    """
    masses = masses_from_roles(psi.grid, roles)
    dens = np.sum(np.abs(psi.amplitudes) ** 2, axis=0)
    mask = dens < node_epsilon_rel * dens.max()
    safe = np.where(mask, 1.0, dens)
    comps = []
    for a in range(psi.grid.n_axes):
        grad = _spectral_gradient(psi.amplitudes, psi.grid, a)
        current = np.sum(np.imag(np.conj(psi.amplitudes) * grad), axis=0)
        v = (hbar / masses[a]) * current / safe
        if coupling is not None and a == coupling.pointer_axis:
            weighted = np.sum(coupling.values * np.abs(psi.amplitudes) ** 2, axis=0)
            v = v + coupling.strength * weighted / safe
        v[mask] = 0.0
        comps.append(v)
    return VelocityField(psi.grid, tuple(comps), psi.time, mask, speed_cap)


def continuity_residual(psi_t: SpinorWaveFunction, psi_t_plus_dt: SpinorWaveFunction,
                        v: VelocityField) -> float:
    """Grid L² norm of ∂ρ/∂t + ∇·(ρ v), centered time difference, spectral divergence.

    Most accurate when v is evaluated at the midpoint time of the two
    snapshots; serves as a transport-consistency diagnostic.
    """
    if psi_t.grid != psi_t_plus_dt.grid or psi_t.grid != v.grid:
        raise GridMismatch("snapshots and velocity field must share a grid")
    dt = psi_t_plus_dt.time - psi_t.time
    if dt == 0.0:
        raise ValueError("snapshots must be separated in time")
    rho1 = density(psi_t).values
    rho2 = density(psi_t_plus_dt).values
    res = (rho2 - rho1) / dt
    rho_mid = 0.5 * (rho1 + rho2)
    for a in range(v.grid.n_axes):
        flux = (rho_mid * v.components[a])[None]
        res = res + np.real(_spectral_gradient(flux, v.grid, a)[0])
    return float(np.sqrt(np.sum(res ** 2) * v.grid.cell_volume))


def _stencil(grid: Grid, points: np.ndarray):
    """Base indices and fractional weights of the surrounding 2^n cells."""
    idx0, frac = [], []
    for a, ax in enumerate(grid.axes):
        f = (points[:, a] - ax.lower) / ax.spacing - 0.5
        base = np.floor(f).astype(np.int64)
        frac.append(f - base)
        idx0.append(np.mod(base, ax.n))
    return idx0, frac


def _interp_components(field: VelocityField, points: np.ndarray):
    """Multilinear interpolation; returns (velocities (M, n), touched_mask (M,))."""
    grid = field.grid
    n = grid.n_axes
    m = points.shape[0]
    idx0, frac = _stencil(grid, points)
    vel = np.zeros((m, n))
    touched = np.zeros(m, dtype=bool)
    for corner in range(1 << n):
        w = np.ones(m)
        idx = []
        for a in range(n):
            if corner >> a & 1:
                idx.append(np.mod(idx0[a] + 1, grid.axes[a].n))
                w = w * frac[a]
            else:
                idx.append(idx0[a])
                w = w * (1.0 - frac[a])
        flat = np.ravel_multi_index(tuple(idx), grid.shape)
        touched |= field.node_mask.reshape(-1)[flat]
        for a in range(n):
            vel[:, a] += w * field.components[a].reshape(-1)[flat]
    return vel, touched


def _cap_speeds(vel: np.ndarray, cap: float):
    """Clip any speed above the cap (masked stencils pull values toward zero,
    so clipping covers both the node rule and runaway interpolants)."""
    speed = np.sqrt(np.sum(vel ** 2, axis=1))
    clip = speed > cap
    if np.any(clip):
        scale = cap / speed[clip]
        vel = vel.copy()
        vel[clip] *= scale[:, None]
    return vel, int(np.count_nonzero(clip))


def interpolate_velocity(field: VelocityField, point: np.ndarray) -> np.ndarray:
    """Velocity at one point (or a batch), node cells handled by the speed cap."""
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    pts = field.grid.wrap(pts)
    vel, _ = _interp_components(field, pts)
    vel, _ = _cap_speeds(vel, field.speed_cap)
    return vel[0] if np.asarray(point).ndim == 1 else vel


def _stage_velocity(v0: VelocityField, v1: VelocityField, pts: np.ndarray, theta: float):
    a, ta = _interp_components(v0, pts)
    b, tb = _interp_components(v1, pts)
    return (1.0 - theta) * a + theta * b, ta | tb


def advance_with_fields(traj: TrajectorySet, v0: VelocityField,
                        v1: VelocityField) -> TrajectorySet:
    """One RK4 step across [v0.time, v1.time] with time-linear field blending."""
    if traj.grid != v0.grid or v0.grid != v1.grid:
        raise GridMismatch("trajectories and velocity fields must share a grid")
    dt = v1.time - v0.time
    cap = min(v0.speed_cap, v1.speed_cap)
    grid = traj.grid
    x = traj.positions
    triggers = 0

    def vel(pts, theta):
        nonlocal triggers
        v, _ = _stage_velocity(v0, v1, grid.wrap(pts), theta)
        v, n = _cap_speeds(v, cap)
        triggers += n
        return v

    k1 = vel(x, 0.0)
    k2 = vel(x + 0.5 * dt * k1, 0.5)
    k3 = vel(x + 0.5 * dt * k2, 0.5)
    k4 = vel(x + dt * k3, 1.0)
    new = grid.wrap(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return replace(traj, positions=new, time=v1.time,
                   cap_triggers=traj.cap_triggers + triggers)


def advance_trajectories(traj: TrajectorySet, psi_t: SpinorWaveFunction,
                         psi_t_plus_dt: SpinorWaveFunction, roles: Sequence[AxisRole],
                         hbar: float = 1.0, speed_cap: float = np.inf,
                         coupling=None) -> TrajectorySet:
    """RK4 step bracketed by two wavefunction snapshots (fields built here)."""
    v0 = velocity_field(psi_t, roles, hbar, speed_cap, coupling=coupling)
    v1 = velocity_field(psi_t_plus_dt, roles, hbar, speed_cap, coupling=coupling)
    return advance_with_fields(traj, v0, v1)


def nonlocality_probe(psi: SpinorWaveFunction, roles: Sequence[AxisRole],
                      x1: float, x2_a: float, x2_b: float,
                      hbar: float = 1.0) -> tuple[float, float]:
    """Axis-0 velocity at (x1, x2_a) and (x1, x2_b) on a two-axis grid.

    For a product state the two values agree; entanglement makes the first
    particle's velocity depend on where the second one sits.
    """
    if psi.grid.n_axes != 2:
        raise GridMismatch("nonlocality probe needs a two-axis grid")
    field = velocity_field(psi, roles, hbar)
    pts = field.grid.wrap(np.array([[x1, x2_a], [x1, x2_b]]))
    vel, touched = _interp_components(field, pts)
    if np.any(touched):
        raise MaskedPoint("probe point sits on the node mask")
    return float(vel[0, 0]), float(vel[1, 0])


def first_crossing_times(history: TrajectoryHistory, axis: int,
                         threshold: float) -> np.ndarray:
    """Earliest crossing time of the plane q_axis = threshold per trajectory.

    Linear interpolation between recorded steps; intervals whose coordinate
    jump exceeds half the axis length are periodic wraps and are skipped.
    Trajectories that never cross report nan. This is a diagnostic of the
    flow, not a measured arrival time: only pointer-region statistics are
    instrument readings.
    """
    x = history.positions[:, :, axis]
    t = history.times
    length = history.grid.axes[axis].length
    s = x - threshold
    out = np.full(x.shape[1], np.nan)
    pending = np.ones(x.shape[1], dtype=bool)
    on_plane = np.abs(s[0]) == 0.0
    out[on_plane] = t[0]
    pending &= ~on_plane
    for i in range(len(t) - 1):
        jump = np.abs(x[i + 1] - x[i]) > 0.5 * length
        crossed = (s[i] * s[i + 1] <= 0.0) & (s[i + 1] != s[i]) & ~jump & pending
        if np.any(crossed):
            frac = s[i, crossed] / (s[i, crossed] - s[i + 1, crossed])
            out[crossed] = t[i] + frac * (t[i + 1] - t[i])
            pending &= ~crossed
    return out


def transport(psi: SpinorWaveFunction, hamiltonian, traj: TrajectorySet,
              roles: Sequence[AxisRole], t_final: float, dt: float,
              record_times: Sequence[float] | None = None,
              speed_cap: float = np.inf,
              observer: Callable[[SpinorWaveFunction, TrajectorySet], None] | None = None,
              ) -> tuple[SpinorWaveFunction, TrajectorySet, TrajectoryHistory]:
    """Step wavefunction and ensemble together from psi.time to t_final.

    One RK4 trajectory step per propagator step; legs break at schedule
    switch times and at the requested record times, with the final partial
    step of each leg shortened so recorded times are hit exactly.
    """
    from .propagator import evolve_step  # local import to avoid a cycle

    if not dt > 0:
        raise ValueError("dt must be positive")
    if record_times is None:
        record_times = [t_final]
    eps = 1e-12 * max(1.0, abs(t_final))
    record_set = sorted(set(float(r) for r in record_times))
    if record_set and (record_set[0] < psi.time - eps or record_set[-1] > t_final + eps):
        raise ValueError("record times must lie in [psi.time, t_final]")
    breaks = [t for t in sorted(set(record_set) | {t_final}
                                | set(hamiltonian.switch_times()))
              if psi.time + eps < t <= t_final + eps]

    rec_times = []
    rec_pos = []

    def maybe_record(time_point):
        if any(abs(time_point - r) <= eps for r in record_set):
            rec_times.append(time_point)
            rec_pos.append(traj.positions.copy())
            if observer is not None:
                observer(psi, traj)

    maybe_record(psi.time)
    for target in breaks:
        if psi.time < target - eps:
            # one schedule segment per leg: build both bracketing fields with
            # the coupling that actually drives this leg's dynamics
            _, seg = hamiltonian.segment_at(0.5 * (psi.time + target))
            v_old = velocity_field(psi, roles, hamiltonian.hbar, speed_cap,
                                   coupling=seg.coupling)
        while psi.time < target - eps:
            step = min(dt, target - psi.time)
            psi_new = evolve_step(psi, h=hamiltonian, dt=step)
            v_new = velocity_field(psi_new, roles, hamiltonian.hbar, speed_cap,
                                   coupling=seg.coupling)
            traj = advance_with_fields(traj, v_old, v_new)
            psi, v_old = psi_new, v_new
        psi = psi.with_amplitudes(psi.amplitudes, time=target)
        traj = replace(traj, time=target)
        maybe_record(target)
    history = TrajectoryHistory(traj.grid, np.array(rec_times), np.array(rec_pos),
                                traj.seed, traj.cap_triggers)
    return psi, traj, history
