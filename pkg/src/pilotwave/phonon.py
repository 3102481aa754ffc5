"""Periodic harmonic chain: one-phonon states in closed form.

N atoms of mass m on a ring with nearest-neighbour springs κ and spacing a
separate into real normal-mode oscillators. The single-excitation states

    Ψ(q, t) = [ Σ_p c_p f_p(q) e^{-iω(p)t} ] · Ψ₀(q) · e^{-iE₀t/ħ}

use the mode-coordinate raising factor f_p (linear in the cosine/sine pair
of momentum |p|), the vacuum Gaussian Ψ₀, and the acoustic dispersion
ω(p) = 2√(κ/m)·|sin(pa/2)|, whose small-p slope is the sound speed
c_s = a√(κ/m). The same coefficients c_p define the effective excitation
amplitude ψ(x, t) = Σ_p c_p e^{-i[ω(p)t − px]}, which obeys the sound-wave
equation up to lattice corrections of order (pa)².

Everything here is grid-free; chains up to N = 512 are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NodalPoint, SuperluminalBoost

NODE_EPSILON = 1e-12


@dataclass(frozen=True)
class LatticeChain:
    """Ring of n_atoms with mass, spring constant and lattice spacing."""

    n_atoms: int
    mass: float = 1.0
    spring: float = 1.0
    spacing: float = 1.0

    def __post_init__(self):
        if self.n_atoms < 2 or self.n_atoms % 2 != 0:
            raise ValueError("need an even atom count >= 2")
        if min(self.mass, self.spring, self.spacing) <= 0:
            raise ValueError("mass, spring and spacing must be positive")

    @property
    def sound_speed(self) -> float:
        return self.spacing * np.sqrt(self.spring / self.mass)

    def frequency(self, p) -> np.ndarray:
        """Acoustic branch ω(p) = 2√(κ/m)|sin(pa/2)|."""
        return 2.0 * np.sqrt(self.spring / self.mass) * np.abs(
            np.sin(np.asarray(p) * self.spacing / 2.0))

    def dynamical_matrix(self) -> np.ndarray:
        """Dense force-constant matrix divided by mass (oracle target)."""
        n = self.n_atoms
        d = np.zeros((n, n))
        for i in range(n):
            d[i, i] += 2.0 * self.spring / self.mass
            d[i, (i + 1) % n] -= self.spring / self.mass
            d[i, (i - 1) % n] -= self.spring / self.mass
        return d


@dataclass(frozen=True)
class PhononModeSet:
    """Real orthonormal normal modes of one chain.

    `basis` columns are ordered: translation (p=0), then (cos, sin) pairs of
    increasing |p|, then the zone-boundary alternating mode. `momenta` holds
    the signed mode momenta p_j = 2πj/(Na), j = −N/2+1 .. N/2.
    """

    chain: LatticeChain
    momenta: np.ndarray          # all N signed momenta, ascending
    frequencies: np.ndarray      # ω at `momenta`
    basis: np.ndarray            # (N, N) orthogonal, column per real mode
    column_frequencies: np.ndarray

    @property
    def nonzero_momenta(self) -> np.ndarray:
        return self.momenta[self.momenta != 0.0]

    def zero_point_energy(self, hbar: float = 1.0) -> float:
        return 0.5 * hbar * float(self.column_frequencies[1:].sum())


def normal_modes(chain: LatticeChain) -> PhononModeSet:
    """Analytic normal modes of the periodic chain."""
    n = chain.n_atoms
    sites = np.arange(n)
    momenta = 2.0 * np.pi * np.arange(-n // 2 + 1, n // 2 + 1) / (n * chain.spacing)
    frequencies = chain.frequency(momenta)

    basis = np.zeros((n, n))
    col_freq = np.zeros(n)
    basis[:, 0] = 1.0 / np.sqrt(n)
    col = 1
    for j in range(1, n // 2):
        theta = 2.0 * np.pi * j * sites / n
        w = chain.frequency(2.0 * np.pi * j / (n * chain.spacing))
        basis[:, col] = np.sqrt(2.0 / n) * np.cos(theta)
        basis[:, col + 1] = np.sqrt(2.0 / n) * np.sin(theta)
        col_freq[col] = col_freq[col + 1] = w
        col += 2
    if n >= 2:
        basis[:, col] = np.where(sites % 2 == 0, 1.0, -1.0) / np.sqrt(n)
        col_freq[col] = chain.frequency(np.pi / chain.spacing)
    return PhononModeSet(chain, momenta, frequencies, basis, col_freq)


@dataclass(frozen=True)
class OnePhononState:
    """Coefficients c_p over the nonzero signed momenta; Σ|c_p|² = 1."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128)
        total = float(np.sum(np.abs(c) ** 2))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"coefficients must have unit weight, got {total}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def single_mode(cls, modes: PhononModeSet, momentum: float) -> "OnePhononState":
        c = np.zeros(modes.nonzero_momenta.size, dtype=np.complex128)
        idx = int(np.argmin(np.abs(modes.nonzero_momenta - momentum)))
        c[idx] = 1.0
        return cls(c)

    @classmethod
    def gaussian_packet(cls, modes: PhononModeSet, center: float,
                        width: float) -> "OnePhononState":
        p = modes.nonzero_momenta
        c = np.exp(-((p - center) ** 2) / (4.0 * width ** 2)).astype(np.complex128)
        return cls(c / np.sqrt(np.sum(np.abs(c) ** 2)))


def _whitened_coefficients(modes: PhononModeSet, state: OnePhononState,
                           t: float, hbar: float = 1.0) -> np.ndarray:
    """ĝ_μ(t) per real-mode column: G(q,t) = Σ_μ ĝ_μ(t)·Q_μ/σ_μ, Σ|ĝ|² = 1."""
    chain = modes.chain
    n = chain.n_atoms
    p_nz = modes.nonzero_momenta
    w_nz = chain.frequency(p_nz)
    phased = state.coefficients * np.exp(-1j * w_nz * t)
    j_nz = np.rint(p_nz * n * chain.spacing / (2.0 * np.pi)).astype(int)
    g = np.zeros(n, dtype=np.complex128)
    for cj, j in zip(phased, j_nz):
        if j == n // 2:
            g[n - 1] += cj
        else:
            col = 1 + 2 * (abs(j) - 1)
            g[col] += cj / np.sqrt(2.0)
            g[col + 1] += np.sign(j) * 1j * cj / np.sqrt(2.0)
    return g


def _mode_sigmas(modes: PhononModeSet, hbar: float = 1.0) -> np.ndarray:
    """Vacuum width per real-mode column; zero mode is frozen (σ set to 0)."""
    w = modes.column_frequencies
    out = np.zeros_like(w)
    out[1:] = np.sqrt(hbar / (2.0 * modes.chain.mass * w[1:]))
    return out


def _excitation_amplitude(modes: PhononModeSet, state: OnePhononState,
                          q: np.ndarray, t: float, hbar: float = 1.0):
    """G(q,t) plus its q-independent gradient over atoms; q is (N,) or (M,N)."""
    g = _whitened_coefficients(modes, state, t, hbar)
    sig = _mode_sigmas(modes, hbar)
    scale = np.zeros_like(g)
    scale[1:] = g[1:] / sig[1:]
    coords = np.atleast_2d(q) @ modes.basis      # (M, N) mode coordinates
    big_g = coords @ scale
    grad = modes.basis @ scale                   # dG/du_n, same for every sample
    return big_g, grad


def vacuum_log_amplitude(modes: PhononModeSet, q: np.ndarray,
                         hbar: float = 1.0) -> np.ndarray:
    """log Ψ₀(q) over the nonzero modes (real Gaussian ground state)."""
    m = modes.chain.mass
    w = modes.column_frequencies[1:]
    coords = (np.atleast_2d(q) @ modes.basis)[:, 1:]
    log_norm = 0.25 * np.sum(np.log(m * w / (np.pi * hbar)))
    return log_norm - np.sum(m * w * coords ** 2, axis=1) / (2.0 * hbar)


def one_phonon_wavefunction(chain: LatticeChain, modes: PhononModeSet,
                            state: OnePhononState | None, q: np.ndarray, t: float,
                            hbar: float = 1.0) -> np.ndarray | complex:
    """Ψ(q,t) in closed form; state=None evaluates the vacuum."""
    q_arr = np.atleast_2d(np.asarray(q, dtype=float))
    log_vac = vacuum_log_amplitude(modes, q_arr, hbar)
    e0 = modes.zero_point_energy(hbar)
    out = np.exp(log_vac) * np.exp(-1j * e0 * t / hbar)
    if state is not None:
        big_g, _ = _excitation_amplitude(modes, state, q_arr, t, hbar)
        out = out * big_g
    return out[0] if np.asarray(q).ndim == 1 else out


def atom_velocities(chain: LatticeChain, modes: PhononModeSet,
                    state: OnePhononState | None, q: np.ndarray, t: float,
                    hbar: float = 1.0) -> np.ndarray:
    """v_n = (ħ/m)·Im(∂_n Ψ / Ψ); rational in the mode coordinates.

    The vacuum (state=None) is a real Gaussian, so its velocities vanish.
    Raises NodalPoint when |G|² is below the node floor (the vacuum factor
    never vanishes, so nodes are exactly the zeros of G).
    """
    q_arr = np.atleast_2d(np.asarray(q, dtype=float))
    if state is None:
        zeros = np.zeros_like(q_arr)
        return zeros[0] if np.asarray(q).ndim == 1 else zeros
    big_g, grad = _excitation_amplitude(modes, state, q_arr, t, hbar)
    if np.any(np.abs(big_g) ** 2 < NODE_EPSILON):
        raise NodalPoint("velocity requested on the nodal set of the excitation")
    v = (hbar / chain.mass) * np.imag(grad[None, :] / big_g[:, None])
    return v[0] if np.asarray(q).ndim == 1 else v


def _capped_velocities(chain, modes, state, q, t, hbar, cap):
    if state is None:
        return np.zeros_like(q), 0
    big_g, grad = _excitation_amplitude(modes, state, q, t, hbar)
    denom = big_g.copy()
    bad = np.abs(denom) ** 2 < NODE_EPSILON
    denom[bad] = np.sqrt(NODE_EPSILON)
    v = (hbar / chain.mass) * np.imag(grad[None, :] / denom[:, None])
    speed = np.sqrt(np.sum(v ** 2, axis=1))
    over = speed > cap
    if np.any(over):
        v[over] *= (cap / speed[over])[:, None]
    return v, int(np.count_nonzero(over) + np.count_nonzero(bad & ~over))


def sample_displacements(chain: LatticeChain, modes: PhononModeSet,
                         state: OnePhononState, m: int, seed: int,
                         hbar: float = 1.0, envelope: float = 64.0) -> np.ndarray:
    """Draw M atom-displacement vectors from |Ψ(·, 0)|².

    Vacuum-Gaussian proposals in whitened mode space, accept/reject with
    weight |G|² (mean 1 under the proposal). The envelope bound truncates
    proposal mass below 2e-15, far under every stated tolerance.
    """
    g = _whitened_coefficients(modes, state, 0.0, hbar)
    sig = _mode_sigmas(modes, hbar)
    rng = np.random.default_rng(seed)
    n = chain.n_atoms
    out = np.empty((m, n))
    have = 0
    chunk = max(4096, 4 * m)
    while have < m:
        z = rng.standard_normal((chunk, n))
        z[:, 0] = 0.0  # translation mode frozen
        weight = np.abs(z @ g) ** 2
        keep = rng.random(chunk) * envelope < weight
        take = min(int(np.count_nonzero(keep)), m - have)
        zk = z[keep][:take]
        out[have:have + take] = (zk * sig[None, :]) @ modes.basis.T
        have += take
    return out


def integrate_atoms(chain: LatticeChain, modes: PhononModeSet, state: OnePhononState,
                    q0: np.ndarray, t_final: float, dt: float, hbar: float = 1.0,
                    record_every: int = 1,
                    speed_cap: float | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """RK4 atom trajectories on the analytic field; returns (times, paths, cap_count)."""
    q = np.array(np.atleast_2d(q0), dtype=float)
    if speed_cap is None:
        spread = 20.0 * float(_mode_sigmas(modes, hbar).max()) * np.sqrt(chain.n_atoms)
        speed_cap = 10.0 * spread / max(t_final, dt)
    n_steps = int(np.ceil(t_final / dt - 1e-12))
    times = [0.0]
    paths = [q.copy()]
    caps = 0
    t = 0.0
    for step in range(n_steps):
        h = min(dt, t_final - t)
        k1, c1 = _capped_velocities(chain, modes, state, q, t, hbar, speed_cap)
        k2, c2 = _capped_velocities(chain, modes, state, q + 0.5 * h * k1, t + 0.5 * h,
                                    hbar, speed_cap)
        k3, c3 = _capped_velocities(chain, modes, state, q + 0.5 * h * k2, t + 0.5 * h,
                                    hbar, speed_cap)
        k4, c4 = _capped_velocities(chain, modes, state, q + h * k3, t + h,
                                    hbar, speed_cap)
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        caps += c1 + c2 + c3 + c4
        if (step + 1) % record_every == 0 or step == n_steps - 1:
            times.append(t)
            paths.append(q.copy())
    return np.array(times), np.array(paths), caps


def excitation_profile(modes: PhononModeSet, state: OnePhononState, t: float,
                       hbar: float = 1.0) -> np.ndarray:
    """Analytic per-atom second moment above vacuum: ⟨u_n²⟩ − ⟨u_n²⟩_vac = 2|h_n|²."""
    g = _whitened_coefficients(modes, state, t, hbar)
    sig = _mode_sigmas(modes, hbar)
    h = modes.basis @ (sig * g)
    return 2.0 * np.abs(h) ** 2


def ring_centroid(values: np.ndarray, spacing: float) -> float:
    """Center of a non-negative profile on the ring, via the circular mean."""
    n = values.size
    angles = 2.0 * np.pi * np.arange(n) / n
    z = np.sum(values * np.exp(1j * angles))
    return float(np.angle(z) / (2.0 * np.pi) * n * spacing)


# =====================================================================
# Quasiparticle wave and emergent wave equation
# =====================================================================


@dataclass(frozen=True)
class QuasiparticleWave:
    """ψ(x,t) = Σ_p c_p e^{-i[ω(p)t − px]} with analytic derivatives."""

    momenta: np.ndarray
    omegas: np.ndarray
    coefficients: np.ndarray
    sound_speed: float

    def _phases(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        t = np.asarray(t, dtype=float)[..., None]
        return np.exp(-1j * (self.omegas * t - self.momenta * x))

    def _sum(self, weights: np.ndarray, x, t) -> np.ndarray:
        return np.sum(self.coefficients * weights * self._phases(x, t), axis=-1)

    def value(self, x, t):
        return self._sum(np.ones_like(self.momenta), x, t)

    def d2_dx2(self, x, t):
        return self._sum(-self.momenta ** 2, x, t)

    def d2_dt2(self, x, t):
        return self._sum(-self.omegas ** 2, x, t)

    def d2_dxdt(self, x, t):
        return self._sum(self.momenta * self.omegas, x, t)

    def group_velocities(self, chain: LatticeChain) -> np.ndarray:
        return self.sound_speed * np.cos(self.momenta * chain.spacing / 2.0) * np.sign(
            self.momenta)


def quasiparticle_wave(state: OnePhononState, modes: PhononModeSet) -> QuasiparticleWave:
    p = modes.nonzero_momenta
    return QuasiparticleWave(p, modes.chain.frequency(p), state.coefficients,
                             modes.chain.sound_speed)


def linear_dispersion_wave(wave: QuasiparticleWave) -> QuasiparticleWave:
    """Surrogate with ω(p) = c_s|p| exactly (obeys the wave equation identically)."""
    return QuasiparticleWave(wave.momenta, wave.sound_speed * np.abs(wave.momenta),
                             wave.coefficients, wave.sound_speed)


def _residual_arrays(wave: QuasiparticleWave, xs, ts, v: float, c_s: float):
    """Wave-operator residual and curvature reference in a frame boosted by v."""
    gamma_sq = 1.0 / (1.0 - (v / c_s) ** 2)
    a_xx = gamma_sq * ((v / c_s) ** 2 - 1.0)
    a_xt = gamma_sq * (2.0 * v / c_s ** 2 - 2.0 * v / c_s ** 2)
    a_tt = gamma_sq * (1.0 / c_s ** 2 - v ** 2 / c_s ** 4)
    b_xx = gamma_sq * 1.0
    b_xt = gamma_sq * 2.0 * v / c_s ** 2
    b_tt = gamma_sq * v ** 2 / c_s ** 4

    xg, tg = np.meshgrid(np.asarray(xs, float), np.asarray(ts, float), indexing="ij")
    gamma = np.sqrt(gamma_sq)
    x_lab = gamma * (xg + v * tg)
    t_lab = gamma * (tg + v * xg / c_s ** 2)
    pxx = wave.d2_dx2(x_lab, t_lab)
    ptt = wave.d2_dt2(x_lab, t_lab)
    pxt = wave.d2_dxdt(x_lab, t_lab)
    residual = a_tt * ptt + a_xt * pxt + a_xx * pxx
    curvature = b_xx * pxx + b_xt * pxt + b_tt * ptt
    return residual, curvature


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(a) ** 2)))


def wave_equation_residual(wave: QuasiparticleWave, xs: Sequence[float],
                           ts: Sequence[float], c_s: float) -> float:
    """RMS of (1/c_s²)ψ_tt − ψ_xx over the sample box, relative to RMS ψ_xx."""
    residual, curvature = _residual_arrays(wave, xs, ts, 0.0, c_s)
    return _rms(residual) / _rms(curvature)


def lorentz_boost_check(wave: QuasiparticleWave, v: float, c_s: float,
                        xs: Sequence[float], ts: Sequence[float]) -> tuple[float, float]:
    """Wave-equation residual in the rest frame and in a frame boosted by v.

    The boost uses the invariant speed c̃ = c_s; for |v| ≥ c_s there is no
    such transformation.
    """
    if abs(v) >= c_s:
        raise SuperluminalBoost(f"|v| = {abs(v)} is not below c_s = {c_s}")
    rest_res, rest_curv = _residual_arrays(wave, xs, ts, 0.0, c_s)
    boost_res, boost_curv = _residual_arrays(wave, xs, ts, v, c_s)
    return _rms(rest_res) / _rms(rest_curv), _rms(boost_res) / _rms(boost_curv)


def interpretation1_trajectory(wave: QuasiparticleWave, chain: LatticeChain,
                               x0: float, t_final: float, dt: float,
                               node_floor: float = NODE_EPSILON
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Single quasiparticle track dX/dt = Re[ψ* (v̂ψ)]/|ψ|², v̂ diagonal with dω/dp.

    A diagnostic construction only: the chain's own dynamics is carried by
    the atoms, and reports should contrast this track with their ensemble.
    """
    gv = wave.group_velocities(chain)
    cap = wave.sound_speed

    def velocity(x, t):
        amps = wave.coefficients * wave._phases(np.asarray(x), np.asarray(t))
        psi = np.sum(amps, axis=-1)
        vpsi = np.sum(gv * amps, axis=-1)
        dens = np.abs(psi) ** 2
        if dens < node_floor:
            return cap
        v = float(np.real(np.conj(psi) * vpsi) / dens)
        return float(np.clip(v, -cap, cap))

    n_steps = int(np.ceil(t_final / dt - 1e-12))
    times = [0.0]
    xs = [x0]
    x, t = x0, 0.0
    for _ in range(n_steps):
        h = min(dt, t_final - t)
        k1 = velocity(x, t)
        k2 = velocity(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = velocity(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = velocity(x + h * k3, t + h)
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        times.append(t)
        xs.append(x)
    return np.array(times), np.array(xs)
