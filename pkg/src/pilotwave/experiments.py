"""The nine preset experiments behind the CLI.

Each preset resolves its parameters, runs end to end, and reports metrics
plus named pass/fail checks with the thresholds it was declared with.
Everything is deterministic for a given seed: reruns produce byte-identical
CSV and JSON artifacts.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import equilibrium as eq
from . import guidance as gd
from . import measurement as ms
from . import phonon as ph
from .propagator import Hamiltonian, energy_expectation, segment_energy_drifts
from .state import (
    AxisRole,
    Grid,
    ROLE_SYSTEM,
    SpinorWaveFunction,
    check_boundary_density,
    density,
    gaussian_1d,
    gaussian_wavefunction,
    marginal,
    normalize,
    region_probability,
    uniform_roles,
)


@dataclass(frozen=True)
class Check:
    """One named pass/fail comparison from a run."""

    name: str
    value: float
    op: str          # "<", "<=", ">", ">=", "=="
    threshold: float

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        return {"<": v < t, "<=": v <= t, ">": v > t, ">=": v >= t, "==": v == t}[self.op]

    def as_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "op": self.op,
                "threshold": float(self.threshold), "passed": bool(self.passed)}


@dataclass
class ExperimentResult:
    metrics: dict
    checks: list[Check]
    files: dict[str, str] = field(default_factory=dict)
    cap_triggers: int = 0


def _density_csv(rho) -> str:
    buf = io.StringIO()
    axes = ",".join(f"q{a}" for a in range(rho.grid.n_axes))
    buf.write(f"{axes},density\n")
    mesh = rho.grid.meshgrid()
    flat = [m.reshape(-1) for m in mesh]
    vals = rho.values.reshape(-1)
    for i in range(vals.size):
        coords = ",".join(repr(float(m[i])) for m in flat)
        buf.write(f"{coords},{float(vals[i])!r}\n")
    return buf.getvalue()


def _table_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(x)) if isinstance(x, (int, float, np.floating))
                           else str(x) for x in row) + "\n")
    return buf.getvalue()


def _no_crossing_fraction(history: gd.TrajectoryHistory, axis: int = 0) -> float:
    """Fraction of recorded steps preserving the initial position ordering."""
    x = history.positions[:, :, axis]
    order = np.argsort(x[0], kind="stable")
    ok = sum(1 for t in range(x.shape[0]) if np.all(np.diff(x[t][order]) >= 0))
    return ok / x.shape[0]


# =====================================================================
# free-gaussian
# =====================================================================

FREE_GAUSSIAN_DEFAULTS = dict(
    grid_points=1024, box_length=36.0, sigma=1.0, mass=1.0, hbar=1.0,
    ensemble_size=10_000, dt=0.02, coarse_bins=32, seed=42,
)


def run_free_gaussian(p: dict) -> ExperimentResult:
    half = 0.5 * p["box_length"]
    grid = Grid.regular([(p["grid_points"], -half, half)])
    roles = uniform_roles(grid, mass=p["mass"])
    psi = gaussian_wavefunction(grid, [0.0], [p["sigma"]], hbar=p["hbar"])
    h = Hamiltonian.free(grid, roles, hbar=p["hbar"])

    tau0 = 2.0 * p["mass"] * p["sigma"] ** 2 / p["hbar"]
    t_end = 2.0 * tau0
    e0 = energy_expectation(psi, h)
    n0 = psi.norm_squared()

    traj = eq.sample_density(density(psi), p["ensemble_size"], p["seed"])
    cap = 10.0 * grid.diameter() / t_end
    psi_f, traj, history = gd.transport(psi, h, traj, roles, t_end, p["dt"],
                                        record_times=[0.0, tau0, t_end], speed_cap=cap)
    rho_f = density(psi_f)

    cg = eq.CoarseGraining((p["coarse_bins"],))
    tv = eq.total_variation(traj, rho_f, cg)
    baseline = eq.tv_resampled_baseline(rho_f, cg, traj.m, p["seed"] + 1)
    tv_iid = eq.tv_expected_iid(rho_f, cg, traj.m)

    x = grid.axes[0].points
    var = float((rho_f.values * x ** 2).sum()) * grid.cell_volume
    sigma_t = p["sigma"] * np.sqrt(1.0 + (t_end / tau0) ** 2)
    sigma_err = abs(np.sqrt(var) - sigma_t) / sigma_t

    metrics = {
        "total_variation": tv,
        "tv_baseline_resampled": baseline,
        "tv_baseline_closed_form": tv_iid,
        "norm_drift": abs(psi_f.norm_squared() - n0),
        "energy_drift_rel": abs(energy_expectation(psi_f, h) - e0) / abs(e0),
        "sigma_final_rel_err": sigma_err,
        "boundary_density_fraction": check_boundary_density(rho_f),
        "no_crossing_fraction": _no_crossing_fraction(history),
    }
    checks = [
        Check("equivariance_tv_vs_2x_baseline", tv, "<=", 2.0 * baseline),
        Check("norm_drift", metrics["norm_drift"], "<", 1e-10),
        Check("energy_drift_rel", metrics["energy_drift_rel"], "<", 1e-6),
        Check("gaussian_width_closed_form", sigma_err, "<", 1e-6),
        Check("boundary_density", metrics["boundary_density_fraction"], "<", 1e-10),
        Check("no_crossing", metrics["no_crossing_fraction"], "==", 1.0),
    ]
    files = {
        "trajectories.csv": history.to_csv(),
        "final_density.csv": _density_csv(rho_f),
    }
    return ExperimentResult(metrics, checks, files, traj.cap_triggers)


# =====================================================================
# double-slit
# =====================================================================

DOUBLE_SLIT_DEFAULTS = dict(
    grid_points=1024, box_length=36.0, sigma=1.0, separation=12.0, speed=1.5,
    mass=1.0, hbar=1.0, ensemble_size=10_000, dt=0.002, coarse_bins=32, seed=43,
)


def run_double_slit(p: dict) -> ExperimentResult:
    half = 0.5 * p["box_length"]
    grid = Grid.regular([(p["grid_points"], -half, half)])
    roles = uniform_roles(grid, mass=p["mass"])
    x = grid.axes[0].points
    x0 = 0.5 * p["separation"]
    u = p["speed"]
    left = gaussian_1d(x, -x0, p["sigma"], momentum=p["mass"] * u, hbar=p["hbar"])
    right = gaussian_1d(x, x0, p["sigma"], momentum=-p["mass"] * u, hbar=p["hbar"])
    psi = normalize(SpinorWaveFunction(grid, (left + right)[None]))
    h = Hamiltonian.free(grid, roles, hbar=p["hbar"])

    t_end = x0 / u  # packets meet at the origin
    e0 = energy_expectation(psi, h)
    n0 = psi.norm_squared()
    traj = eq.sample_density(density(psi), p["ensemble_size"], p["seed"])
    cap = 10.0 * grid.diameter() / t_end
    psi_f, traj, history = gd.transport(psi, h, traj, roles, t_end, p["dt"],
                                        record_times=[0.0, 0.5 * t_end, t_end],
                                        speed_cap=cap)
    rho_f = density(psi_f)

    cg = eq.CoarseGraining((p["coarse_bins"],))
    tv = eq.total_variation(traj, rho_f, cg)
    baseline = eq.tv_resampled_baseline(rho_f, cg, traj.m, p["seed"] + 1)

    # fringe visibility over the central interference window
    sel = np.abs(x) < 2.0 * p["sigma"]
    central = rho_f.values[sel]
    visibility = float((central.max() - central.min()) / (central.max() + central.min()))

    metrics = {
        "total_variation": tv,
        "tv_baseline_resampled": baseline,
        "fringe_visibility": visibility,
        "norm_drift": abs(psi_f.norm_squared() - n0),
        "energy_drift_rel": abs(energy_expectation(psi_f, h) - e0) / abs(e0),
        "boundary_density_fraction": check_boundary_density(rho_f),
        "no_crossing_fraction": _no_crossing_fraction(history),
    }
    checks = [
        Check("equivariance_tv_vs_2x_baseline", tv, "<=", 2.0 * baseline),
        Check("fringe_visibility", visibility, ">", 0.9),
        Check("norm_drift", metrics["norm_drift"], "<", 1e-10),
        Check("energy_drift_rel", metrics["energy_drift_rel"], "<", 1e-6),
        Check("boundary_density", metrics["boundary_density_fraction"], "<", 1e-10),
        Check("no_crossing", metrics["no_crossing_fraction"], "==", 1.0),
    ]
    files = {
        "trajectories.csv": history.to_csv(),
        "final_density.csv": _density_csv(rho_f),
    }
    return ExperimentResult(metrics, checks, files, traj.cap_triggers)


# =====================================================================
# stern-gerlach
# =====================================================================

STERN_GERLACH_DEFAULTS = dict(
    grid_points=1024, box_length=64.0, packet_width=1.0, up_weight=0.3,
    gradient=4.0, t_on=0.0, t_off=1.0, readout_time=4.0, mass=1.0, hbar=1.0,
    ensemble_size=10_000, dt=0.002, seed=11,
)


def run_stern_gerlach(p: dict) -> ExperimentResult:
    cfg = ms.SternGerlachConfig(
        grid_points=p["grid_points"], box_length=p["box_length"],
        packet_width=p["packet_width"],
        spin_up_amplitude=np.sqrt(p["up_weight"]),
        spin_down_amplitude=np.sqrt(1.0 - p["up_weight"]),
        gradient=p["gradient"], window=(p["t_on"], p["t_off"]),
        readout_time=p["readout_time"], mass=p["mass"], hbar=p["hbar"],
        ensemble_size=p["ensemble_size"], seed=p["seed"], dt=p["dt"],
    )
    stats, history = ms.stern_gerlach_experiment(cfg)
    z = ms.born_rule_report(stats)
    se = np.sqrt(p["up_weight"] * (1 - p["up_weight"]) / p["ensemble_size"])
    energy_drift = max(stats.meta["energy_drift_rel_segments"])

    metrics = {
        "frequency_up": float(stats.frequencies[0]),
        "target_up": float(stats.targets[0]),
        "z_scores": [float(v) for v in z],
        "overlap_offdiag": stats.max_offdiagonal_overlap(),
        "unassigned": stats.unassigned,
        "no_crossing_fraction": _no_crossing_fraction(history),
        "norm_drift": stats.meta["norm_drift"],
        "energy_drift_rel": energy_drift,
        "energy_drift_rel_segments": stats.meta["energy_drift_rel_segments"],
    }
    checks = [
        Check("born_frequency_up_3sigma",
              abs(stats.frequencies[0] - p["up_weight"]), "<=", 3.0 * se),
        Check("pointer_overlap", stats.max_offdiagonal_overlap(), "<", 1e-4),
        Check("no_crossing", metrics["no_crossing_fraction"], "==", 1.0),
        Check("unassigned_fraction", stats.unassigned / stats.ensemble_size, "<", 1e-3),
        Check("norm_drift", metrics["norm_drift"], "<", 1e-10),
        Check("energy_drift_rel", energy_drift, "<", 1e-6),
    ]
    stats.meta["config"] = {k: p[k] for k in sorted(p)}
    files = {
        "outcome_statistics.json": stats.to_json(),
        "trajectories.csv": history.to_csv(),
    }
    return ExperimentResult(metrics, checks, files, history.cap_triggers)


# =====================================================================
# two-outcome-measurement
# =====================================================================

TWO_OUTCOME_DEFAULTS = dict(
    system_points=256, system_box=32.0, packet_offset=7.0, packet_width=1.0,
    weight_1=0.3, pointer_points=256, pointer_box=32.0, pointer_width=1.0,
    pointer_mass=50.0, coupling=6.0, t_on=0.0, t_off=1.0, readout_time=1.25,
    mass=1.0, hbar=1.0, ensemble_size=10_000, dt=0.005, seed=21,
)


def build_two_outcome(p: dict):
    """System state, setup, Hamiltonian and roles for the two-outcome run."""
    half_x = 0.5 * p["system_box"]
    gx = Grid.regular([(p["system_points"], -half_x, half_x)])
    x = gx.axes[0].points
    lobe_l = gaussian_1d(x, -p["packet_offset"], p["packet_width"])
    lobe_l /= np.sqrt((np.abs(lobe_l) ** 2).sum() * gx.cell_volume)
    lobe_r = gaussian_1d(x, p["packet_offset"], p["packet_width"])
    lobe_r /= np.sqrt((np.abs(lobe_r) ** 2).sum() * gx.cell_volume)
    amp = np.sqrt(p["weight_1"]) * lobe_l + np.sqrt(1.0 - p["weight_1"]) * lobe_r
    sys_psi = normalize(SpinorWaveFunction(gx, amp[None]))

    half_y = 0.5 * p["pointer_box"]
    obs = ms.DiscreteObservable((-1.0, 1.0), ms.OBSERVABLE_REGION,
                                regions=((-half_x, 0.0), (0.0, half_x)))
    setup = ms.MeasurementSetup(
        observable=obs, pointer_points=p["pointer_points"],
        pointer_box=(-half_y, half_y), pointer_mass=p["pointer_mass"],
        pointer_center=0.0, pointer_width=p["pointer_width"],
        coupling=p["coupling"], window=(p["t_on"], p["t_off"]),
        readout_time=p["readout_time"],
        outcome_regions=((-half_y, 0.0), (0.0, half_y)),
    )
    psi = ms.compose_initial(sys_psi, setup)
    roles = ms.composite_roles([AxisRole(0, ROLE_SYSTEM, 0, p["mass"])], setup)
    h = ms.measurement_hamiltonian(setup, psi.grid, roles, hbar=p["hbar"])
    return sys_psi, psi, setup, roles, h, obs


def run_two_outcome_core(p: dict, speed_cap_factor: float = 10.0,
                         with_drift: bool = True):
    """Full pipeline; returns (stats, psi_final, traj) for reuse by robustness scans."""
    sys_psi, psi, setup, roles, h, obs = build_two_outcome(p)
    targets = ms.branch_targets(sys_psi, obs)
    traj = eq.sample_density(density(psi), p["ensemble_size"], p["seed"])
    cap = speed_cap_factor * psi.grid.diameter() / setup.readout_time
    psi_f, traj, _ = gd.transport(psi, h, traj, roles, setup.readout_time, p["dt"],
                                  record_times=[setup.readout_time], speed_cap=cap)
    overlap = ms.overlap_matrix(psi_f, setup)
    stats = ms.readout(traj, setup, targets, overlap)
    meta = dict(stats.meta)
    meta["norm_drift"] = abs(psi_f.norm_squared() - psi.norm_squared())
    if with_drift:
        meta["energy_drift_rel_segments"] = segment_energy_drifts(
            psi, h, setup.readout_time, p["dt"])
    stats = ms.OutcomeStatistics(stats.eigenvalues, stats.counts, stats.targets,
                                 stats.overlap, stats.unassigned, stats.ensemble_size,
                                 stats.seed, meta)
    return stats, psi_f, traj, setup


def run_two_outcome(p: dict) -> ExperimentResult:
    stats, psi_f, traj, setup = run_two_outcome_core(p)
    w1 = p["weight_1"]
    se = np.sqrt(w1 * (1 - w1) / p["ensemble_size"])
    rho_y = marginal(density(psi_f), [psi_f.grid.n_axes - 1])

    # trajectory counts must agree with the pointer-marginal region masses
    mass_per_region = np.array([region_probability(rho_y, [r])
                                for r in setup.outcome_regions])
    multinomial_se = np.sqrt(mass_per_region * (1 - mass_per_region) / traj.m)
    agreement = np.abs(stats.frequencies - mass_per_region) / multinomial_se

    energy_drift = max(stats.meta["energy_drift_rel_segments"])
    metrics = {
        "frequency_1": float(stats.frequencies[0]),
        "target_1": float(stats.targets[0]),
        "z_scores": [float(v) for v in ms.born_rule_report(stats)],
        "overlap_offdiag": stats.max_offdiagonal_overlap(),
        "pointer_region_masses": [float(v) for v in mass_per_region],
        "trajectory_vs_marginal_max_z": float(agreement.max()),
        "unassigned": stats.unassigned,
        "boundary_density_fraction": check_boundary_density(density(psi_f)),
        "norm_drift": stats.meta["norm_drift"],
        "energy_drift_rel": energy_drift,
        "energy_drift_rel_segments": stats.meta["energy_drift_rel_segments"],
    }
    checks = [
        Check("born_frequency_1_3sigma", abs(stats.frequencies[0] - w1), "<=", 3.0 * se),
        Check("pointer_overlap", stats.max_offdiagonal_overlap(), "<", 1e-4),
        Check("trajectory_vs_marginal_3sigma",
              metrics["trajectory_vs_marginal_max_z"], "<=", 3.0),
        Check("unassigned_fraction", stats.unassigned / stats.ensemble_size, "<", 1e-3),
        Check("norm_drift", metrics["norm_drift"], "<", 1e-10),
        Check("energy_drift_rel", energy_drift, "<", 1e-6),
    ]
    stats.meta["config"] = {k: p[k] for k in sorted(p)}
    files = {
        "outcome_statistics.json": stats.to_json(),
        "pointer_marginal.csv": _density_csv(rho_y),
    }
    return ExperimentResult(metrics, checks, files, traj.cap_triggers)


# =====================================================================
# entangled-pair
# =====================================================================

ENTANGLED_PAIR_DEFAULTS = dict(
    grid_points=128, box_length=20.0, packet_width=1.5, packet_offset=2.0,
    relative_phase=1.5707963267948966, probe_x1=0.5, probe_x2_a=1.0,
    probe_x2_b=-1.0, mass=1.0, hbar=1.0, dv_threshold=0.1, seed=5,
)


def run_entangled_pair(p: dict) -> ExperimentResult:
    half = 0.5 * p["box_length"]
    grid = Grid.regular([(p["grid_points"], -half, half)] * 2)
    roles = uniform_roles(grid, mass=p["mass"])
    x = grid.axes[0].points

    def packet(center):
        f = gaussian_1d(x, center, p["packet_width"])
        return f / np.sqrt((np.abs(f) ** 2).sum() * grid.axes[0].spacing)

    offset = p["packet_offset"]
    phi_a, phi_b = packet(-offset), packet(offset)
    product = normalize(SpinorWaveFunction(
        grid, (packet(0.0)[:, None] * packet(0.0)[None, :])[None]))
    amp = (phi_a[:, None] * phi_a[None, :]
           + np.exp(1j * p["relative_phase"]) * phi_b[:, None] * phi_b[None, :])
    entangled = normalize(SpinorWaveFunction(grid, amp[None] / np.sqrt(2.0)))

    va_p, vb_p = gd.nonlocality_probe(product, roles, p["probe_x1"],
                                      p["probe_x2_a"], p["probe_x2_b"], p["hbar"])
    va_e, vb_e = gd.nonlocality_probe(entangled, roles, p["probe_x1"],
                                      p["probe_x2_a"], p["probe_x2_b"], p["hbar"])
    va_s, vb_s = gd.nonlocality_probe(entangled, roles, p["probe_x1"],
                                      p["probe_x2_b"], p["probe_x2_a"], p["hbar"])

    metrics = {
        "product_dv1": abs(va_p - vb_p),
        "entangled_dv1": abs(va_e - vb_e),
        "swap_consistency": max(abs(va_e - vb_s), abs(vb_e - va_s)),
        "entangled_v1_a": va_e,
        "entangled_v1_b": vb_e,
    }
    checks = [
        Check("product_state_local", metrics["product_dv1"], "<", 1e-10),
        Check("entangled_state_nonlocal", metrics["entangled_dv1"], ">", p["dv_threshold"]),
        Check("probe_swap_symmetry", metrics["swap_consistency"], "==", 0.0),
    ]
    files = {
        "probe.csv": _table_csv(
            ["state", "v1_at_a", "v1_at_b", "dv1"],
            [["product", va_p, vb_p, abs(va_p - vb_p)],
             ["entangled", va_e, vb_e, abs(va_e - vb_e)]]),
    }
    return ExperimentResult(metrics, checks, files)


# =====================================================================
# relaxation
# =====================================================================

RELAXATION_DEFAULTS = dict(
    grid_points=64, box_length=2.0 * np.pi, mode_range=2, n_modes=16,
    phase_seed=20260808, ensemble_size=10_000, duration=16.0, dt=0.01,
    record_every=0.5, coarse_bins=32, hbar=1.0, mass=1.0, seed=7,
)


def run_relaxation(p: dict) -> ExperimentResult:
    cfg = eq.RelaxationConfig(
        grid_points=p["grid_points"], box_length=p["box_length"],
        mode_range=p["mode_range"], n_modes=p["n_modes"],
        phase_seed=p["phase_seed"], ensemble_size=p["ensemble_size"],
        sample_seed=p["seed"], duration=p["duration"], dt=p["dt"],
        record_every=p["record_every"], coarse_bins=p["coarse_bins"],
        hbar=p["hbar"], mass=p["mass"],
    )
    series = eq.relaxation_experiment(cfg)
    h0, h_end = float(series.h_values[0]), float(series.h_values[-1])
    floor = eq.equilibrium_h_floor(p["coarse_bins"] ** 2, p["ensemble_size"])

    metrics = {
        "h_initial": h0,
        "h_final": h_end,
        "h_ratio": h_end / h0,
        "slope": series.slope(),
        "statistical_floor": floor,
        "norm_drift": float(series.params["norm_drift"]),
        "energy_drift_rel": float(series.params["energy_drift_rel"]),
    }
    checks = [
        Check("h_initial_above_1", h0, ">", 1.0),
        Check("h_final_below_third", h_end, "<", h0 / 3.0),
        Check("h_slope_negative", series.slope(), "<", 0.0),
        Check("norm_drift", metrics["norm_drift"], "<", 1e-10),
        Check("energy_drift_rel", metrics["energy_drift_rel"], "<", 1e-6),
    ]
    files = {"h_series.csv": series.to_csv()}
    return ExperimentResult(metrics, checks, files,
                            int(series.params.get("cap_triggers", 0)))


# =====================================================================
# phonon-dispersion
# =====================================================================

PHONON_DISPERSION_DEFAULTS = dict(
    chain_sizes=[8, 64, 256], mass=1.0, spring=1.0, spacing=1.0,
    packet_scales=[0.05, 0.1, 0.2], packet_width_fraction=0.2, seed=1,
)


def run_phonon_dispersion(p: dict) -> ExperimentResult:
    worst_nonzero = 0.0
    worst_zero = 0.0
    for n in p["chain_sizes"]:
        chain = ph.LatticeChain(int(n), p["mass"], p["spring"], p["spacing"])
        modes = ph.normal_modes(chain)
        lam = np.linalg.eigvalsh(chain.dynamical_matrix())
        dense_w = np.sqrt(np.clip(lam, 0.0, None))
        analytic = np.sort(modes.column_frequencies)
        dense = np.sort(dense_w)
        worst_zero = max(worst_zero, abs(dense[0] ** 2 - analytic[0] ** 2))
        worst_nonzero = max(worst_nonzero, float(np.abs(dense[1:] - analytic[1:]).max()))

    # sound speed from the small-p limit, second-order extrapolation in p
    chain = ph.LatticeChain(256, p["mass"], p["spring"], p["spacing"])
    modes = ph.normal_modes(chain)
    pos = np.sort(modes.nonzero_momenta[modes.nonzero_momenta > 0])
    p1, p2 = pos[0], pos[1]
    f1 = chain.frequency(p1) / p1
    f2 = chain.frequency(p2) / p2
    c_s_extrap = (4.0 * f1 - f2) / 3.0
    c_s_err = abs(c_s_extrap - chain.sound_speed) / chain.sound_speed

    # single-mode wave-equation residual against the dispersion identity
    p0 = 0.1 / p["spacing"]
    wave = ph.QuasiparticleWave(np.array([p0]), np.array([float(chain.frequency(p0))]),
                                np.array([1.0 + 0.0j]), chain.sound_speed)
    xs = np.linspace(0.0, chain.n_atoms * p["spacing"], 40)
    ts = np.linspace(0.0, 10.0, 7)
    res = ph.wave_equation_residual(wave, xs, ts, chain.sound_speed)
    identity = abs(1.0 - (chain.frequency(p0) / (chain.sound_speed * p0)) ** 2)

    # packet residual scaling against (p0 a)^2
    scales = [float(s) for s in p["packet_scales"]]
    residuals = []
    for s in scales:
        center = s / p["spacing"]
        st = ph.OnePhononState.gaussian_packet(modes, center,
                                               p["packet_width_fraction"] * center)
        w = ph.quasiparticle_wave(st, modes)
        residuals.append(ph.wave_equation_residual(w, xs, ts, chain.sound_speed))
    ratios = [residuals[i + 1] / residuals[i] *
              (scales[i] / scales[i + 1]) ** 2 for i in range(len(scales) - 1)]
    scaling_dev = max(abs(r - 1.0) for r in ratios)

    metrics = {
        "dense_diag_max_dev_nonzero": worst_nonzero,
        "dense_diag_zero_mode_lambda_dev": worst_zero,
        "sound_speed_extrapolated": float(c_s_extrap),
        "sound_speed_rel_err": c_s_err,
        "single_mode_residual": res,
        "dispersion_identity": identity,
        "packet_residuals": residuals,
        "scaling_deviation": scaling_dev,
    }
    checks = [
        Check("dispersion_matches_dense_diag", worst_nonzero, "<", 1e-10),
        Check("zero_mode_squared_frequency", worst_zero, "<", 1e-12),
        Check("sound_speed_small_p_limit", c_s_err, "<", 1e-6),
        Check("single_mode_residual_identity", abs(res - identity), "<", 1e-6),
        Check("residual_scaling_quadratic", scaling_dev, "<", 0.2),
    ]
    rows = [[float(pm), float(wm), float(wm / (chain.sound_speed * pm)) if pm != 0 else 1.0]
            for pm, wm in zip(modes.momenta, modes.frequencies)]
    files = {
        "dispersion.csv": _table_csv(["p", "omega", "omega_over_cs_p"], rows),
        "residual_scaling.csv": _table_csv(
            ["p0_a", "residual"], [[s, r] for s, r in zip(scales, residuals)]),
    }
    return ExperimentResult(metrics, checks, files)


# =====================================================================
# phonon-trajectories
# =====================================================================

PHONON_TRAJECTORIES_DEFAULTS = dict(
    n_atoms=64, mass=1.0, spring=1.0, spacing=1.0, mode_momentum=0.3,
    packet_center=0.2, packet_width_fraction=0.25, ensemble_size=1500,
    duration=6.0, dt=0.05, seed=17,
)


def run_phonon_trajectories(p: dict) -> ExperimentResult:
    chain = ph.LatticeChain(p["n_atoms"], p["mass"], p["spring"], p["spacing"])
    modes = ph.normal_modes(chain)

    # stationarity: single-mode ensemble variance per atom stays at the
    # analytic value within sampling error
    p0 = modes.nonzero_momenta[np.argmin(np.abs(modes.nonzero_momenta
                                                - p["mode_momentum"]))]
    st = ph.OnePhononState.single_mode(modes, p0)
    q0 = ph.sample_displacements(chain, modes, st, p["ensemble_size"], p["seed"])
    times, paths, caps = ph.integrate_atoms(chain, modes, st, q0, p["duration"],
                                            p["dt"], record_every=20)
    from .phonon import _mode_sigmas
    var_analytic = (modes.basis ** 2 @ _mode_sigmas(modes) ** 2
                    + ph.excitation_profile(modes, st, 0.0))
    var_final = (paths[-1] ** 2).mean(axis=0)
    se = (paths[-1] ** 2).std(axis=0) / np.sqrt(p["ensemble_size"])
    stationarity_z = float((np.abs(var_final - var_analytic) / se).max())

    # quasiparticle packet: interpretation-1 track vs atom excitation centroid
    center = p["packet_center"] / p["spacing"]
    stp = ph.OnePhononState.gaussian_packet(modes, center,
                                            p["packet_width_fraction"] * center)
    wave = ph.quasiparticle_wave(stp, modes)
    vg = chain.sound_speed * np.cos(center * p["spacing"] / 2.0)
    t_track = 10.0 * p["spacing"] / chain.sound_speed
    t1_times, t1_xs = ph.interpretation1_trajectory(wave, chain, 0.0, t_track, p["dt"])
    psi_mag0 = abs(wave.value(t1_xs[0], 0.0))
    envelope_ok = min(abs(wave.value(xv, tv)) for xv, tv in zip(t1_xs, t1_times))

    cent_times = np.linspace(0.0, t_track, 9)
    centroids = []
    prev = ph.ring_centroid(ph.excitation_profile(modes, stp, 0.0), p["spacing"])
    unwrapped = prev
    ring = chain.n_atoms * p["spacing"]
    for t in cent_times:
        c = ph.ring_centroid(ph.excitation_profile(modes, stp, float(t)), p["spacing"])
        delta = (c - prev + 0.5 * ring) % ring - 0.5 * ring
        unwrapped += delta
        prev = c
        centroids.append(unwrapped)
    centroid_speed = float(np.polyfit(cent_times, centroids, 1)[0])
    track_speed = float(np.polyfit(t1_times, t1_xs, 1)[0])

    metrics = {
        "stationarity_max_z": stationarity_z,
        "interpretation1_speed": track_speed,
        "excitation_centroid_speed": centroid_speed,
        "group_velocity": float(vg),
        "envelope_min_amplitude_ratio": float(envelope_ok / psi_mag0),
        "cap_triggers": caps,
    }
    checks = [
        Check("single_mode_stationarity", stationarity_z, "<", 4.5),
        Check("interpretation1_envelope_tracking",
              metrics["envelope_min_amplitude_ratio"], ">", 0.5),
        Check("centroid_tracks_interpretation1",
              abs(centroid_speed - track_speed) / abs(track_speed), "<", 0.1),
        Check("group_velocity_match", abs(track_speed - vg) / vg, "<", 0.01),
    ]
    rows = []
    for t, xv in zip(t1_times[::4], t1_xs[::4]):
        rows.append([1, float(t), float(xv)])
    for t, c in zip(cent_times, centroids):
        rows.append([2, float(t), float(c)])
    files = {
        "interpretation_comparison.csv": _table_csv(
            ["interpretation", "time", "position"], rows),
    }
    return ExperimentResult(metrics, checks, files, caps)


# =====================================================================
# boost-check
# =====================================================================

BOOST_CHECK_DEFAULTS = dict(
    n_atoms=256, mass=1.0, spring=1.0, spacing=1.0, packet_center=0.1,
    packet_width_fraction=0.2, boost_fraction=0.5, seed=1,
)


def run_boost_check(p: dict) -> ExperimentResult:
    chain = ph.LatticeChain(p["n_atoms"], p["mass"], p["spring"], p["spacing"])
    modes = ph.normal_modes(chain)
    c_s = chain.sound_speed
    center = p["packet_center"] / p["spacing"]
    st = ph.OnePhononState.gaussian_packet(modes, center,
                                           p["packet_width_fraction"] * center)
    wave = ph.quasiparticle_wave(st, modes)
    xs = np.linspace(0.0, chain.n_atoms * p["spacing"], 48)
    ts = np.linspace(0.0, 12.0, 9)

    v = p["boost_fraction"] * c_s
    rest, boosted = ph.lorentz_boost_check(wave, v, c_s, xs, ts)
    rest0, boosted0 = ph.lorentz_boost_check(wave, 0.0, c_s, xs, ts)
    lin = ph.linear_dispersion_wave(wave)
    _, lin_boosted = ph.lorentz_boost_check(lin, v, c_s, xs, ts)

    metrics = {
        "residual_rest": rest,
        "residual_boosted": boosted,
        "identity_boost_difference": abs(rest0 - boosted0),
        "linear_surrogate_boosted_residual": lin_boosted,
        "boost_speed": v,
    }
    checks = [
        Check("rest_residual_small", rest, "<", 5e-3),
        Check("boosted_residual_small", boosted, "<", 5e-3),
        Check("identity_boost_bitwise", metrics["identity_boost_difference"], "==", 0.0),
        Check("linear_surrogate_invariant", lin_boosted, "<", 1e-10),
    ]
    files = {
        "residuals.csv": _table_csv(
            ["case", "residual"],
            [["rest", rest], ["boosted", boosted],
             ["linear_surrogate_boosted", lin_boosted]]),
    }
    return ExperimentResult(metrics, checks, files)


# =====================================================================
# Registry
# =====================================================================


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    module: str
    defaults: dict
    run: Callable[[dict], ExperimentResult]


PRESETS: dict[str, Preset] = {
    "free-gaussian": Preset(
        "free-gaussian",
        "Spreading Gaussian packet: ensemble stays Born-distributed (equivariance).",
        "guidance", FREE_GAUSSIAN_DEFAULTS, run_free_gaussian),
    "double-slit": Preset(
        "double-slit",
        "Two converging packets interfere; trajectories reproduce the fringes.",
        "guidance", DOUBLE_SLIT_DEFAULTS, run_double_slit),
    "stern-gerlach": Preset(
        "stern-gerlach",
        "Spin-1/2 packet split by a gradient field; spin read from deflection.",
        "measurement", STERN_GERLACH_DEFAULTS, run_stern_gerlach),
    "two-outcome-measurement": Preset(
        "two-outcome-measurement",
        "Region observable coupled to a pointer; outcome frequencies hit |c_k|^2.",
        "measurement", TWO_OUTCOME_DEFAULTS, run_two_outcome),
    "entangled-pair": Preset(
        "entangled-pair",
        "Velocity of particle 1 responds to where particle 2 sits (entangled only).",
        "guidance", ENTANGLED_PAIR_DEFAULTS, run_entangled_pair),
    "relaxation": Preset(
        "relaxation",
        "Coarse-grained H function decays toward the equilibrium floor.",
        "equilibrium", RELAXATION_DEFAULTS, run_relaxation),
    "phonon-dispersion": Preset(
        "phonon-dispersion",
        "Chain normal modes, sound speed, and the emergent wave-equation residual.",
        "phonon", PHONON_DISPERSION_DEFAULTS, run_phonon_dispersion),
    "phonon-trajectories": Preset(
        "phonon-trajectories",
        "Atom ensembles under one-phonon states versus the quasiparticle track.",
        "phonon", PHONON_TRAJECTORIES_DEFAULTS, run_phonon_trajectories),
    "boost-check": Preset(
        "boost-check",
        "Wave-equation residual before and after a subsonic boost.",
        "phonon", BOOST_CHECK_DEFAULTS, run_boost_check),
}
