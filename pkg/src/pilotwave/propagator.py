"""Unitary time evolution by symmetric split-operator stepping.

One step of size dt applies

    exp(-i V dt/2ħ) · exp(-i C dt/2ħ) · exp(-i T dt/ħ) · exp(-i C dt/2ħ) · exp(-i V dt/2ħ)

with T the kinetic energy (diagonal in momentum space, handled by FFT),
V a cell-local matrix potential over the spin indices, and C an optional
pointer coupling g·K(q)·p̂_pointer (diagonal once the pointer axis alone is
Fourier transformed). The arrangement is symmetric, hence second order in
dt, and exactly norm preserving.

Time dependence is restricted to a piecewise-constant schedule of
(potential, coupling) segments; `evolve_to` never lets a step straddle a
switch time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridMismatch, NonFiniteAmplitude
from .state import AxisRole, Grid, SpinorWaveFunction, masses_from_roles

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class PointerCoupling:
    """Interaction g·K(q)·p̂_axis with K diagonal in spin and position.

    `values` has shape (n_spin, *grid.shape) and must be constant along
    `pointer_axis` (K acts on everything but the pointer).
    """

    values: np.ndarray
    pointer_axis: int
    strength: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass(frozen=True)
class Segment:
    """One piecewise-constant piece of the Hamiltonian, active from t_start."""

    t_start: float
    potential: np.ndarray | None = None  # (n_spin, n_spin, *grid.shape)
    coupling: PointerCoupling | None = None


@dataclass(frozen=True)
class Hamiltonian:
    """H = Σ_a p̂_a²/2m_a + V(q) (+ optional pointer coupling), per segment."""

    grid: Grid
    masses: tuple[float, ...]
    n_spin: int = 1
    segments: tuple[Segment, ...] = (Segment(t_start=-np.inf),)
    hbar: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.masses) != self.grid.n_axes:
            raise ValueError("one mass per grid axis required")
        if any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        starts = [s.t_start for s in self.segments]
        if starts != sorted(starts):
            raise ValueError("segment start times must be sorted")
        for seg in self.segments:
            self._check_segment(seg)

    def _check_segment(self, seg: Segment) -> None:
        if seg.potential is not None:
            v = np.asarray(seg.potential)
            want = (self.n_spin, self.n_spin) + self.grid.shape
            if v.shape != want:
                raise ValueError(f"potential shape {v.shape}, expected {want}")
            if not np.all(np.isfinite(v)):
                raise ValueError("potential must be finite")
            herm = np.abs(v - np.conj(np.swapaxes(v, 0, 1))).max()
            if herm > HERMITICITY_TOL:
                raise ValueError(f"potential not Hermitian per cell (deviation {herm:.2e})")
        if seg.coupling is not None:
            c = seg.coupling
            want = (self.n_spin,) + self.grid.shape
            if c.values.shape != want:
                raise ValueError(f"coupling K shape {c.values.shape}, expected {want}")
            ax = c.pointer_axis + 1  # leading spin axis
            if c.values.shape[ax] > 1:
                spread = np.abs(c.values - c.values.take([0], axis=ax)).max()
                if spread > 0:
                    raise ValueError("coupling K must be constant along the pointer axis")

    @classmethod
    def free(cls, grid: Grid, roles: Sequence[AxisRole], n_spin: int = 1,
             hbar: float = 1.0) -> "Hamiltonian":
        return cls(grid, tuple(masses_from_roles(grid, roles)), n_spin, hbar=hbar)

    @classmethod
    def with_potential(cls, grid: Grid, roles: Sequence[AxisRole], potential: np.ndarray,
                       n_spin: int = 1, hbar: float = 1.0) -> "Hamiltonian":
        """Time-independent Hamiltonian; scalar potentials are lifted to spin matrices."""
        v = scalar_to_matrix_potential(potential, n_spin)
        seg = Segment(t_start=-np.inf, potential=v)
        return cls(grid, tuple(masses_from_roles(grid, roles)), n_spin, (seg,), hbar)

    def segment_at(self, t: float) -> tuple[int, Segment]:
        idx = 0
        for i, seg in enumerate(self.segments):
            if seg.t_start <= t:
                idx = i
        return idx, self.segments[idx]

    def switch_times(self) -> list[float]:
        return [s.t_start for s in self.segments if np.isfinite(s.t_start)]

    # -------------------- cached step operators --------------------

    def _kinetic_energy_grid(self) -> np.ndarray:
        key = ("ke",)
        if key not in self._cache:
            total = np.zeros(self.grid.shape)
            for a, ax in enumerate(self.grid.axes):
                k = ax.wavenumbers()
                shape = [1] * self.grid.n_axes
                shape[a] = ax.n
                total = total + (self.hbar ** 2 * k ** 2 / (2.0 * self.masses[a])).reshape(shape)
            self._cache[key] = total
        return self._cache[key]

    def _kinetic_phase(self, dt: float) -> np.ndarray:
        key = ("kin", dt)
        if key not in self._cache:
            self._cache[key] = np.exp(-1j * self._kinetic_energy_grid() * dt / self.hbar)
        return self._cache[key]

    def _potential_half_phase(self, seg_idx: int, dt: float) -> np.ndarray | None:
        seg = self.segments[seg_idx]
        if seg.potential is None:
            return None
        key = ("pot", seg_idx, dt)
        if key not in self._cache:
            self._cache[key] = _matrix_phase(seg.potential, -0.5 * dt / self.hbar)
        return self._cache[key]

    def _coupling_half_phase(self, seg_idx: int, dt: float) -> np.ndarray | None:
        seg = self.segments[seg_idx]
        if seg.coupling is None:
            return None
        key = ("cpl", seg_idx, dt)
        if key not in self._cache:
            c = seg.coupling
            ax = c.pointer_axis
            k = self.grid.axes[ax].wavenumbers()
            shape = [1] * (self.grid.n_axes + 1)
            shape[ax + 1] = self.grid.axes[ax].n
            p = self.hbar * k.reshape(shape)
            kvals = c.values.take([0], axis=ax + 1)
            self._cache[key] = np.exp(-0.5j * c.strength * kvals * p * dt / self.hbar)
        return self._cache[key]


def scalar_to_matrix_potential(values: np.ndarray, n_spin: int) -> np.ndarray:
    """Embed a scalar field as V·δ_αβ; pass (n_spin, n_spin, ...) through unchanged."""
    v = np.asarray(values)
    if v.ndim >= 2 and v.shape[0] == n_spin and v.shape[1] == n_spin:
        return v
    out = np.zeros((n_spin, n_spin) + v.shape, dtype=v.dtype)
    for s in range(n_spin):
        out[s, s] = v
    return out


def diagonal_spin_potential(per_spin: Sequence[np.ndarray]) -> np.ndarray:
    """Spin-diagonal matrix potential from one scalar field per component."""
    n = len(per_spin)
    base = np.asarray(per_spin[0])
    out = np.zeros((n, n) + base.shape, dtype=float)
    for s, f in enumerate(per_spin):
        out[s, s] = f
    return out


def _matrix_phase(v: np.ndarray, factor: float) -> np.ndarray:
    """exp(i·factor·V) per cell, for Hermitian V of shape (s, s, *cells)."""
    s = v.shape[0]
    if s == 1:
        return np.exp(1j * factor * v)
    cells = v.shape[2:]
    flat = np.moveaxis(v.reshape(s, s, -1), -1, 0)  # (ncells, s, s)
    w, u = np.linalg.eigh(flat)
    phase = np.exp(1j * factor * w)
    out = np.einsum("cij,cj,ckj->cik", u, phase, np.conj(u))
    return np.moveaxis(out, 0, -1).reshape((s, s) + cells)


def _apply_matrix_field(m: np.ndarray, amps: np.ndarray) -> np.ndarray:
    if m.shape[0] == 1:
        return m[0, 0][None] * amps
    return np.einsum("ab...,b...->a...", m, amps)


def _apply_coupling(phase: np.ndarray | None, amps: np.ndarray, axis: int) -> np.ndarray:
    if phase is None:
        return amps
    ft = np.fft.fft(amps, axis=axis + 1)
    return np.fft.ifft(phase * ft, axis=axis + 1)


def evolve_step(psi: SpinorWaveFunction, h: Hamiltonian, dt: float) -> SpinorWaveFunction:
    """Advance psi by one split step of size dt (dt may be negative).

    The active segment is chosen at the step midpoint; `evolve_to` takes
    care of never straddling a switch time.
    """
    if psi.grid != h.grid or psi.n_spin != h.n_spin:
        raise GridMismatch("wavefunction and Hamiltonian live on different grids")
    if dt == 0.0:
        return psi
    seg_idx, seg = h.segment_at(psi.time + 0.5 * dt)

    amps = psi.amplitudes
    pot = h._potential_half_phase(seg_idx, dt)
    cpl = h._coupling_half_phase(seg_idx, dt)
    kin = h._kinetic_phase(dt)
    cpl_axis = seg.coupling.pointer_axis if seg.coupling is not None else 0

    if pot is not None:
        amps = _apply_matrix_field(pot, amps)
    amps = _apply_coupling(cpl, amps, cpl_axis)
    spatial = tuple(range(1, h.grid.n_axes + 1))
    amps = np.fft.ifftn(kin[None] * np.fft.fftn(amps, axes=spatial), axes=spatial)
    amps = _apply_coupling(cpl, amps, cpl_axis)
    if pot is not None:
        amps = _apply_matrix_field(pot, amps)

    if not np.all(np.isfinite(amps)):
        raise NonFiniteAmplitude(
            "amplitudes became non-finite; dt is too large for the potential scale"
        )
    return psi.with_amplitudes(amps, time=psi.time + dt)


def default_dt(h: Hamiltonian, safety_potential: float = 0.05,
               safety_kinetic: float = 0.5) -> float:
    """Documented default step: max|V|·dt/ħ <= 0.05 and Nyquist kinetic phase <= 0.5 rad."""
    dt = np.inf
    for a, ax in enumerate(h.grid.axes):
        k_nyq = np.pi / ax.spacing
        dt = min(dt, safety_kinetic * 2.0 * h.masses[a] / (h.hbar * k_nyq ** 2))
    for seg in h.segments:
        if seg.potential is not None:
            vmax = float(np.abs(seg.potential).max()) * h.n_spin
            if vmax > 0:
                dt = min(dt, safety_potential * h.hbar / vmax)
    return float(dt)


def evolve_to(psi: SpinorWaveFunction, h: Hamiltonian, t_final: float,
              dt: float | None = None,
              snapshot_times: Sequence[float] | None = None) -> list[SpinorWaveFunction]:
    """March psi to t_final, returning snapshots exactly at the requested times.

    Steps are uniform of size dt with the final partial step of each leg
    shortened; legs break at snapshot times and at schedule switch times.
    """
    if t_final < psi.time:
        raise ValueError(f"t_final {t_final} is before psi.time {psi.time}")
    if dt is None:
        dt = default_dt(h)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if snapshot_times is None:
        snapshot_times = [t_final]
    snaps = list(snapshot_times)
    if sorted(snaps) != snaps:
        raise ValueError("snapshot times must be sorted")
    if snaps and (snaps[0] < psi.time or snaps[-1] > t_final):
        raise ValueError("snapshot times must lie in [psi.time, t_final]")

    eps = 1e-12 * max(1.0, abs(t_final))
    breaks = sorted(set(snaps) | {t_final}
                    | {s for s in h.switch_times() if psi.time < s < t_final})
    out: list[SpinorWaveFunction] = []
    want = iter(snaps)
    next_want = next(want, None)
    if next_want is not None and abs(next_want - psi.time) <= eps:
        out.append(psi)
        next_want = next(want, None)
    for target in breaks:
        while psi.time < target - eps:
            step = min(dt, target - psi.time)
            psi = evolve_step(psi, h, step)
        psi = psi.with_amplitudes(psi.amplitudes, time=target)
        while next_want is not None and abs(next_want - target) <= eps:
            out.append(psi)
            next_want = next(want, None)
    return out


def segment_energy_drifts(psi0: SpinorWaveFunction, h: Hamiltonian, t_final: float,
                          dt: float) -> list[float]:
    """Relative energy drift within each piecewise-constant schedule segment.

    Re-evolves the wavefunction alone (cheap) and pins the energy operator
    to each segment's interior, so switch-time discontinuities of a
    time-dependent schedule do not masquerade as drift.
    """
    bounds = [psi0.time] + [s for s in h.switch_times()
                            if psi0.time < s < t_final] + [t_final]
    snaps = evolve_to(psi0, h, t_final, dt, snapshot_times=bounds)
    out = []
    for i in range(len(bounds) - 1):
        mid = 0.5 * (bounds[i] + bounds[i + 1])
        e0 = energy_expectation(snaps[i], h, at_time=mid)
        e1 = energy_expectation(snaps[i + 1], h, at_time=mid)
        out.append(abs(e1 - e0) / max(abs(e0), 1e-30))
    return out


def energy_expectation(psi: SpinorWaveFunction, h: Hamiltonian,
                       at_time: float | None = None) -> float:
    """⟨ψ|Ĥ|ψ⟩; the active segment defaults to psi.time but can be pinned
    with at_time (needed to compare energies within one schedule segment
    whose boundary the state sits on)."""
    if psi.grid != h.grid or psi.n_spin != h.n_spin:
        raise GridMismatch("wavefunction and Hamiltonian live on different grids")
    dq = h.grid.cell_volume
    spatial = tuple(range(1, h.grid.n_axes + 1))
    ft = np.fft.fftn(psi.amplitudes, axes=spatial)
    ke = h._kinetic_energy_grid()
    kinetic = float(np.sum(ke[None] * np.abs(ft) ** 2)) * dq / h.grid.total_points

    _, seg = h.segment_at(psi.time if at_time is None else at_time)
    potential = 0.0 + 0.0j
    if seg.potential is not None:
        v_psi = _apply_matrix_field(seg.potential, psi.amplitudes)
        potential = np.vdot(psi.amplitudes, v_psi) * dq
    coupling = 0.0 + 0.0j
    if seg.coupling is not None:
        c = seg.coupling
        ax = c.pointer_axis
        k = h.grid.axes[ax].wavenumbers()
        shape = [1] * (h.grid.n_axes + 1)
        shape[ax + 1] = h.grid.axes[ax].n
        p_psi = np.fft.ifft(h.hbar * k.reshape(shape) * np.fft.fft(psi.amplitudes, axis=ax + 1),
                            axis=ax + 1)
        coupling = c.strength * np.vdot(psi.amplitudes, c.values * p_psi) * dq
    total = kinetic + potential + coupling
    if abs(total.imag) > 1e-10 * max(1.0, abs(total.real)):
        raise FloatingPointError(f"energy has imaginary residue {total.imag:.3e}")
    return float(total.real)
