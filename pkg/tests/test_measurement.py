"""Pointer measurements: composition, coupling, overlap, readout, statistics."""

import numpy as np
import pytest

from pilotwave.equilibrium import sample_density
from pilotwave.errors import TooManyUnassigned
from pilotwave.guidance import TrajectorySet, transport
from pilotwave.measurement import (
    OBSERVABLE_REGION,
    OBSERVABLE_SPIN,
    DiscreteObservable,
    MeasurementSetup,
    OutcomeStatistics,
    SternGerlachConfig,
    born_rule_report,
    branch_targets,
    compose_initial,
    overlap_matrix,
    pointer_ground_state,
    readout,
    stern_gerlach_experiment,
    stern_gerlach_setup,
)
from pilotwave.state import (
    Grid,
    SpinorWaveFunction,
    density,
    gaussian_1d,
    gaussian_wavefunction,
    marginal,
    normalize,
    region_probability,
)
from pilotwave.experiments import TWO_OUTCOME_DEFAULTS, build_two_outcome, run_two_outcome_core


def small_two_outcome_params(**kw):
    p = dict(TWO_OUTCOME_DEFAULTS)
    p.update(system_points=128, pointer_points=128, ensemble_size=2000, dt=0.01)
    p.update(kw)
    return p


class TestObservableValidation:
    def test_degenerate_spectrum_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            DiscreteObservable((1.0, 1.0), OBSERVABLE_SPIN)

    def test_overlapping_regions_rejected(self):
        with pytest.raises(ValueError, match="disjoint"):
            DiscreteObservable((0.0, 1.0), OBSERVABLE_REGION,
                               regions=((-1.0, 0.5), (0.0, 1.0)))

    def test_separation_floor_enforced(self):
        obs = DiscreteObservable((-1.0, 1.0), OBSERVABLE_REGION,
                                 regions=((-8.0, 0.0), (0.0, 8.0)))
        with pytest.raises(ValueError, match="separation"):
            MeasurementSetup(observable=obs, pointer_points=128,
                             pointer_box=(-8.0, 8.0), pointer_mass=10.0,
                             pointer_center=0.0, pointer_width=1.0,
                             coupling=0.5, window=(0.0, 1.0), readout_time=1.0,
                             outcome_regions=((-8.0, 0.0), (0.0, 8.0)))


class TestComposition:
    def setup_obj(self):
        obs = DiscreteObservable((-1.0, 1.0), OBSERVABLE_REGION,
                                 regions=((-8.0, 0.0), (0.0, 8.0)))
        return MeasurementSetup(observable=obs, pointer_points=128,
                                pointer_box=(-10.0, 10.0), pointer_mass=40.0,
                                pointer_center=0.0, pointer_width=1.0,
                                coupling=4.0, window=(0.0, 2.0), readout_time=2.0,
                                outcome_regions=((-10.0, 0.0), (0.0, 10.0)))

    def test_product_state_normalized(self):
        setup = self.setup_obj()
        gx = Grid.regular([(128, -8.0, 8.0)])
        sys_psi = gaussian_wavefunction(gx, [-3.0], [1.0])
        psi = compose_initial(sys_psi, setup)
        assert psi.norm_squared() == pytest.approx(1.0, abs=1e-12)

    def test_system_marginal_recovers_system_density(self):
        setup = self.setup_obj()
        gx = Grid.regular([(128, -8.0, 8.0)])
        sys_psi = gaussian_wavefunction(gx, [-3.0], [1.0])
        psi = compose_initial(sys_psi, setup)
        rho_x = marginal(density(psi), [0])
        assert np.max(np.abs(rho_x.values - density(sys_psi).values)) < 1e-12

    def test_pointer_marginal_is_ready_packet(self):
        setup = self.setup_obj()
        gx = Grid.regular([(128, -8.0, 8.0)])
        sys_psi = gaussian_wavefunction(gx, [-3.0], [1.0])
        psi = compose_initial(sys_psi, setup)
        rho_y = marginal(density(psi), [1])
        a0 = pointer_ground_state(setup)
        assert np.max(np.abs(rho_y.values - np.abs(a0) ** 2)) < 1e-10

    def test_grid_cap_enforced(self):
        from pilotwave.errors import GridCapExceeded

        setup = self.setup_obj()  # 128-point pointer axis
        gx = Grid.regular([(2048, -8.0, 8.0), (1024, -8.0, 8.0)])
        sys_psi = gaussian_wavefunction(gx, [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(GridCapExceeded):
            compose_initial(sys_psi, setup)


class TestCouplingDynamics:
    def test_eigenstate_input_moves_pointer_only(self):
        # system entirely inside the +1 region: a measurement of the first kind
        p = small_two_outcome_params(weight_1=1e-12)
        sys_psi, psi, setup, roles, h, obs = build_two_outcome(p)
        from pilotwave.propagator import evolve_to
        (out,) = evolve_to(psi, h, setup.readout_time, dt=p["dt"])
        rho_y = marginal(density(out), [1])
        y = rho_y.grid.axes[0].points
        center = float((rho_y.values * y).sum()) * rho_y.grid.cell_volume
        drift = setup.coupling * 1.0 * (setup.window[1] - setup.window[0])
        assert center == pytest.approx(drift, abs=1e-6)
        # system density only spreads as it would freely; what remains is the
        # O(dt^2) splitting error from [K(x)p_y, p_x^2]
        rho_x = marginal(density(out), [0])
        from pilotwave.propagator import Hamiltonian
        from pilotwave.state import uniform_roles
        gx = sys_psi.grid
        (free_sys,) = evolve_to(sys_psi, Hamiltonian.free(gx, uniform_roles(gx)),
                                setup.readout_time, dt=p["dt"])
        assert np.max(np.abs(rho_x.values - density(free_sys).values)) < 1e-6

    def test_superposition_pointer_goes_bimodal(self):
        p = small_two_outcome_params()
        sys_psi, psi, setup, roles, h, obs = build_two_outcome(p)
        from pilotwave.propagator import evolve_to
        (out,) = evolve_to(psi, h, setup.readout_time, dt=p["dt"])
        rho_y = marginal(density(out), [1])
        half = 0.5 * p["pointer_box"]
        lower = region_probability(rho_y, [(-half, 0.0)])
        upper = region_probability(rho_y, [(0.0, half)])
        assert lower == pytest.approx(0.3, abs=1e-4)
        assert upper == pytest.approx(0.7, abs=1e-4)


class TestOverlapMatrix:
    def build_lobes(self, d, c1=np.sqrt(0.3), c2=np.sqrt(0.7), sigma=1.0):
        """Post-measurement analytic state with pointer lobes d apart.

        The system packets are hard-truncated to their own half-axes so the
        branch decomposition is exact and the pointer Gaussians alone set
        the overlap (the closed-form oracle).
        """
        g = Grid.regular([(128, -10.0, 10.0), (256, -24.0, 24.0)])
        x, y = g.axes[0].points, g.axes[1].points
        dx, dy = g.axes[0].spacing, g.axes[1].spacing

        def norm1d(f, dq):
            return f / np.sqrt((np.abs(f) ** 2).sum() * dq)

        phi1 = norm1d(np.where(x < 0, gaussian_1d(x, -4.0, 1.0), 0.0), dx)
        phi2 = norm1d(np.where(x > 0, gaussian_1d(x, 4.0, 1.0), 0.0), dx)
        a1 = norm1d(gaussian_1d(y, -0.5 * d, sigma), dy)
        a2 = norm1d(gaussian_1d(y, 0.5 * d, sigma), dy)
        amp = c1 * phi1[:, None] * a1[None, :] + c2 * phi2[:, None] * a2[None, :]
        psi = normalize(SpinorWaveFunction(g, amp[None]))
        obs = DiscreteObservable((-1.0, 1.0), OBSERVABLE_REGION,
                                 regions=((-10.0, 0.0), (0.0, 10.0)))
        setup = MeasurementSetup(observable=obs, pointer_points=256,
                                 pointer_box=(-24.0, 24.0), pointer_mass=40.0,
                                 pointer_center=0.0, pointer_width=sigma,
                                 coupling=max(d, 7.0), window=(0.0, 1.0),
                                 readout_time=1.0,
                                 outcome_regions=((-24.0, 0.0), (0.0, 24.0)))
        return psi, setup

    def test_gaussian_overlap_matches_closed_form(self):
        # oracle: integral of |A1 A2| for unit Gaussians d apart = exp(-d^2/8 sigma^2)
        for d in (6.0, 10.0, 14.0):
            psi, setup = self.build_lobes(d)
            ov = overlap_matrix(psi, setup)
            oracle = np.sqrt(0.3 * 0.7) * np.exp(-d ** 2 / 8.0)
            assert ov[0, 1] == pytest.approx(oracle, rel=1e-6, abs=1e-12)
            assert ov[0, 0] == pytest.approx(0.3, abs=1e-9)
            assert ov[1, 1] == pytest.approx(0.7, abs=1e-9)

    def test_branch_masses_sum_to_one(self):
        psi, setup = self.build_lobes(12.0)
        ov = overlap_matrix(psi, setup)
        assert np.trace(ov) == pytest.approx(1.0, abs=1e-9)

    def test_identical_packets_give_geometric_mean(self):
        psi, setup = self.build_lobes(0.0)
        ov = overlap_matrix(psi, setup)
        assert ov[0, 1] == pytest.approx(np.sqrt(0.3 * 0.7), abs=1e-9)

    def test_single_branch_is_unit(self):
        g = Grid.regular([(128, -10.0, 10.0), (128, -12.0, 12.0)])
        psi = gaussian_wavefunction(g, [4.0, 0.0], [1.0, 1.0])
        obs = DiscreteObservable((1.0,), OBSERVABLE_REGION, regions=((-10.0, 10.0),))
        setup = MeasurementSetup(observable=obs, pointer_points=128,
                                 pointer_box=(-12.0, 12.0), pointer_mass=40.0,
                                 pointer_center=0.0, pointer_width=1.0,
                                 coupling=99.0, window=(0.0, 1.0), readout_time=1.0,
                                 outcome_regions=((-12.0, 12.0),))
        ov = overlap_matrix(psi, setup)
        assert ov.shape == (1, 1)
        assert ov[0, 0] == pytest.approx(1.0, abs=1e-9)


class TestReadout:
    def test_eigenstate_gives_single_outcome(self):
        p = small_two_outcome_params(weight_1=1e-12, ensemble_size=1000)
        stats, _, _, _ = run_two_outcome_core(p, with_drift=False)
        assert stats.counts[1] == 1000 - stats.unassigned
        assert stats.unassigned == 0

    def test_binomial_frequencies(self):
        p = small_two_outcome_params()
        stats, _, _, _ = run_two_outcome_core(p, with_drift=False)
        se = np.sqrt(0.3 * 0.7 / p["ensemble_size"])
        assert abs(stats.frequencies[0] - 0.3) <= 3.0 * se

    def test_z_scores_within_three_sigma_across_seeds(self):
        # repeated-run oracle for the Born report: equilibrium ensembles keep
        # every outcome's |z| below 3 in nearly all seeds
        good = 0
        for seed in range(200, 210):
            p = small_two_outcome_params(ensemble_size=1500, seed=seed)
            stats, _, _, _ = run_two_outcome_core(p, with_drift=False)
            if np.all(np.abs(born_rule_report(stats)) < 3.0):
                good += 1
        assert good >= 9

    def test_too_many_unassigned_raises(self):
        p = small_two_outcome_params(ensemble_size=100)
        sys_psi, psi, setup, roles, h, obs = build_two_outcome(p)
        g = psi.grid
        # park every trajectory pointer far outside both outcome regions
        pos = np.zeros((100, 2))
        pos[:, 1] = np.nan  # wrapped below; use explicit parked coordinates
        pos[:, 0] = 0.0
        pos[:, 1] = 0.0
        shrunk = MeasurementSetup(
            observable=setup.observable, pointer_points=setup.pointer_points,
            pointer_box=setup.pointer_box, pointer_mass=setup.pointer_mass,
            pointer_center=setup.pointer_center, pointer_width=setup.pointer_width,
            coupling=setup.coupling, window=setup.window,
            readout_time=setup.readout_time,
            outcome_regions=((-15.0, -14.0), (14.0, 15.0)))
        traj = TrajectorySet(g, pos, 0.0)
        with pytest.raises(TooManyUnassigned):
            readout(traj, shrunk, np.array([0.3, 0.7]))

    def test_outcome_assignment_stable_after_separation(self):
        p = small_two_outcome_params()
        sys_psi, psi, setup, roles, h, obs = build_two_outcome(p)
        targets = branch_targets(sys_psi, obs)
        traj = sample_density(density(psi), p["ensemble_size"], p["seed"])
        cap = 10.0 * psi.grid.diameter() / setup.readout_time
        psi_1, traj_1, _ = transport(psi, h, traj, roles, setup.readout_time,
                                     p["dt"], speed_cap=cap)
        stats_1 = readout(traj_1, setup, targets)
        psi_2, traj_2, _ = transport(psi_1, h, traj_1, roles,
                                     setup.readout_time + 0.3, p["dt"],
                                     speed_cap=cap)
        stats_2 = readout(traj_2, setup, targets)
        y1 = traj_1.positions[:, 1] > 0
        y2 = traj_2.positions[:, 1] > 0
        stable = float(np.count_nonzero(y1 == y2)) / traj_1.m
        assert stable >= 0.999
        assert abs(int(stats_1.counts[0]) - int(stats_2.counts[0])) <= 2


class TestBornReport:
    def make_stats(self, freq, m=10_000, target=0.3):
        counts = np.array([int(round(freq * m)), m - int(round(freq * m))])
        return OutcomeStatistics((-1.0, 1.0), counts,
                                 np.array([target, 1.0 - target]), None, 0, m)

    def test_exact_frequency_gives_zero(self):
        stats = self.make_stats(0.3)
        assert np.allclose(born_rule_report(stats), 0.0, atol=1e-12)

    def test_three_sigma_offset_gives_three(self):
        m, target = 10_000, 0.3
        se = np.sqrt(target * (1 - target) / m)
        offset = 3.0 * se
        counts = np.array([target * m + 3.0 * se * m, 0.0])
        counts[1] = m - counts[0]
        stats = OutcomeStatistics((-1.0, 1.0), counts,
                                  np.array([target, 1.0 - target]), None, 0, m)
        z = born_rule_report(stats)
        assert z[0] == pytest.approx(3.0, abs=1e-12)


class TestSternGerlach:
    def test_pure_up_spinor_all_deflect_up(self):
        cfg = SternGerlachConfig(spin_up_amplitude=1.0, spin_down_amplitude=0.0,
                                 ensemble_size=500, dt=0.004)
        stats, hist = stern_gerlach_experiment(cfg)
        assert stats.counts[0] == 500
        assert np.all(hist.positions[-1, :, 0] > 0)

    def test_weighted_spinor_hits_born_weights(self):
        cfg = SternGerlachConfig(spin_up_amplitude=np.sqrt(0.3),
                                 spin_down_amplitude=np.sqrt(0.7),
                                 ensemble_size=4000, dt=0.004)
        stats, _ = stern_gerlach_experiment(cfg)
        se = np.sqrt(0.3 * 0.7 / 4000)
        assert abs(stats.frequencies[0] - 0.3) <= 3.0 * se

    def test_field_reversal_mirrors_state_and_swaps_populations(self):
        # mirror symmetry: reversing the gradient turns the evolved density
        # into its spatial mirror (exact on the symmetric grid), so the
        # outcome-region quantum masses swap exactly; the seeded trajectory
        # counts swap up to samples straddling the quantile threshold
        from pilotwave.propagator import Hamiltonian, Segment, evolve_to
        from pilotwave.propagator import diagonal_spin_potential

        g = Grid.regular([(512, -32.0, 32.0)])
        z = g.axes[0].points
        packet = gaussian_1d(z, 0.0, 1.0)
        amps = np.stack([np.sqrt(0.3) * packet, np.sqrt(0.7) * packet])
        psi = normalize(SpinorWaveFunction(g, amps))

        def evolved(gradient):
            v = diagonal_spin_potential([-gradient * z, gradient * z])
            h = Hamiltonian(g, (1.0,), 2,
                            (Segment(-np.inf), Segment(0.0, potential=v),
                             Segment(1.0)), 1.0)
            (out,) = evolve_to(psi, h, 3.0, dt=0.004)
            return density(out).values

        rho_fwd = evolved(4.0)
        rho_rev = evolved(-4.0)
        assert np.max(np.abs(rho_rev - rho_fwd[::-1])) < 1e-12

        base = dict(spin_up_amplitude=np.sqrt(0.3), spin_down_amplitude=np.sqrt(0.7),
                    ensemble_size=2000, dt=0.004)
        stats_a, _ = stern_gerlach_experiment(SternGerlachConfig(**base))
        stats_b, _ = stern_gerlach_experiment(
            SternGerlachConfig(**base, gradient=-SternGerlachConfig().gradient))
        # spin branch masses are untouched by the reversal
        assert np.allclose(np.diag(stats_a.overlap), np.diag(stats_b.overlap),
                           atol=1e-12)
        swap_gap = abs(int(stats_a.counts[0]) - int(stats_b.counts[1]))
        assert swap_gap <= 5.0 * np.sqrt(2000 * 0.3 * 0.7)

    def test_setup_construction_validates_separation(self):
        cfg = SternGerlachConfig(gradient=0.05)
        with pytest.raises(ValueError, match="separation"):
            stern_gerlach_setup(cfg)

    def test_equal_weights_split_by_initial_rank(self):
        # no-crossing + symmetry oracle: the k trajectories that land in the
        # upper region are exactly the k highest initial positions
        cfg = SternGerlachConfig(ensemble_size=3000, dt=0.004)
        stats, hist = stern_gerlach_experiment(cfg)
        se = np.sqrt(0.25 / 3000)
        assert abs(stats.frequencies[0] - 0.5) <= 3.0 * se
        z0 = hist.positions[0, :, 0]
        z_end = hist.positions[-1, :, 0]
        k = int(np.count_nonzero(z_end > 0.0))
        top_k = set(np.argsort(z0)[-k:])
        landed_up = set(np.flatnonzero(z_end > 0.0))
        assert top_k == landed_up
