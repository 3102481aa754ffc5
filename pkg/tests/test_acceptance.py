"""End-to-end acceptance criteria.

Each test prints one pass/fail line; run with `pytest tests/test_acceptance.py -v -s`
to see them all. Expensive preset runs are shared through module fixtures and
timed against their stated budgets.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from pilotwave.experiments import TWO_OUTCOME_DEFAULTS, run_two_outcome_core
from pilotwave.runner import run

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"

_criteria: list[str] = []


def report(number: int, label: str, passed: bool, detail: str) -> None:
    state = "PASS" if passed else "FAIL"
    line = f"[{state}] criterion {number:2d} ({label}): {detail}"
    _criteria.append(line)
    print(line)
    assert passed, line


def timed_run(name: str, tmp_dir: Path):
    start = time.monotonic()
    artifacts = run(CONFIGS / f"{name}.toml", tmp_dir)
    return artifacts, time.monotonic() - start


def checks_by_name(artifacts):
    return {c["name"]: c for c in artifacts.summary["checks"]}


@pytest.fixture(scope="module")
def free_gaussian_run(tmp_path_factory):
    return timed_run("free-gaussian", tmp_path_factory.mktemp("fg"))


@pytest.fixture(scope="module")
def double_slit_run(tmp_path_factory):
    return timed_run("double-slit", tmp_path_factory.mktemp("ds"))


@pytest.fixture(scope="module")
def stern_gerlach_run(tmp_path_factory):
    return timed_run("stern-gerlach", tmp_path_factory.mktemp("sg"))


@pytest.fixture(scope="module")
def two_outcome_run(tmp_path_factory):
    return timed_run("two-outcome-measurement", tmp_path_factory.mktemp("to"))


@pytest.fixture(scope="module")
def relaxation_run(tmp_path_factory):
    return timed_run("relaxation", tmp_path_factory.mktemp("rx"))


def test_criterion_01_equivariance(free_gaussian_run):
    artifacts, elapsed = free_gaussian_run
    m = artifacts.summary["metrics"]
    tv, base = m["total_variation"], m["tv_baseline_resampled"]
    ok = tv <= 2.0 * base and elapsed <= 60.0
    report(1, "equivariance", ok,
           f"TV {tv:.4f} vs 2x baseline {2 * base:.4f}; {elapsed:.1f}s of 60s")


def test_criterion_02_instrumental_born_rule(two_outcome_run):
    artifacts, elapsed = two_outcome_run
    m = artifacts.summary["metrics"]
    dev = abs(m["frequency_1"] - 0.30)
    tol = 3.0 * np.sqrt(0.21 / 10_000)
    ok = dev <= tol and m["overlap_offdiag"] < 1e-4 and elapsed <= 120.0
    report(2, "instrumental Born rule", ok,
           f"|freq-0.3| {dev:.4f} <= {tol:.4f}, overlap "
           f"{m['overlap_offdiag']:.2e} < 1e-4; {elapsed:.1f}s of 120s")


def test_criterion_03_stern_gerlach(stern_gerlach_run):
    artifacts, _ = stern_gerlach_run
    m = artifacts.summary["metrics"]
    dev = abs(m["frequency_up"] - 0.30)
    tol = 3.0 * np.sqrt(0.21 / 10_000)
    ok = dev <= tol and m["no_crossing_fraction"] == 1.0
    report(3, "Stern-Gerlach spin", ok,
           f"|freq_up-0.3| {dev:.4f} <= {tol:.4f}, "
           f"no-crossing fraction {m['no_crossing_fraction']:.3f}")


def test_criterion_04_unitarity_and_energy(free_gaussian_run, double_slit_run,
                                           stern_gerlach_run, two_outcome_run,
                                           relaxation_run):
    worst_norm, worst_energy = 0.0, 0.0
    for artifacts, _ in (free_gaussian_run, double_slit_run, stern_gerlach_run,
                         two_outcome_run, relaxation_run):
        m = artifacts.summary["metrics"]
        worst_norm = max(worst_norm, m["norm_drift"])
        worst_energy = max(worst_energy, m["energy_drift_rel"])
    ok = worst_norm < 1e-10 and worst_energy < 1e-6
    report(4, "unitarity and energy", ok,
           f"worst norm drift {worst_norm:.2e} < 1e-10, "
           f"worst segment energy drift {worst_energy:.2e} < 1e-6")


def test_criterion_05_nonlocality(tmp_path):
    artifacts, _ = timed_run("entangled-pair", tmp_path)
    m = artifacts.summary["metrics"]
    threshold = artifacts.summary["config"]["params"]["dv_threshold"]
    ok = m["product_dv1"] < 1e-10 and m["entangled_dv1"] > threshold
    report(5, "non-locality", ok,
           f"product dv1 {m['product_dv1']:.2e} < 1e-10, "
           f"entangled dv1 {m['entangled_dv1']:.3f} > {threshold}")


def test_criterion_06_h_theorem_relaxation(relaxation_run):
    artifacts, elapsed = relaxation_run
    m = artifacts.summary["metrics"]
    ok = (m["h_initial"] > 1.0 and m["h_final"] < m["h_initial"] / 3.0
          and m["slope"] < 0.0 and elapsed <= 300.0)
    report(6, "H-theorem relaxation", ok,
           f"H0 {m['h_initial']:.3f} > 1, Hend {m['h_final']:.3f} < "
           f"{m['h_initial'] / 3:.3f}, slope {m['slope']:.4f} < 0; "
           f"{elapsed:.1f}s of 300s")


def test_criterion_07_phonon_dispersion(tmp_path):
    artifacts, _ = timed_run("phonon-dispersion", tmp_path)
    m = artifacts.summary["metrics"]
    ok = (m["dense_diag_max_dev_nonzero"] < 1e-10
          and m["dense_diag_zero_mode_lambda_dev"] < 1e-12
          and m["sound_speed_rel_err"] < 1e-6)
    report(7, "phonon dispersion", ok,
           f"dense-diag dev {m['dense_diag_max_dev_nonzero']:.2e} < 1e-10 "
           f"(zero mode, squared: {m['dense_diag_zero_mode_lambda_dev']:.2e}), "
           f"sound speed err {m['sound_speed_rel_err']:.2e} < 1e-6")


def test_criterion_08_emergent_wave_equation(tmp_path):
    artifacts, _ = timed_run("phonon-dispersion", tmp_path)
    m = artifacts.summary["metrics"]
    identity_dev = abs(m["single_mode_residual"] - m["dispersion_identity"])
    ok = identity_dev < 1e-6 and m["scaling_deviation"] < 0.2
    report(8, "emergent wave equation", ok,
           f"residual {m['single_mode_residual']:.6e} matches identity "
           f"{m['dispersion_identity']:.6e} within {identity_dev:.1e}; "
           f"quadratic-scaling deviation {m['scaling_deviation']:.2%} < 20%")


def test_criterion_09_lorentz_boost(tmp_path):
    artifacts, _ = timed_run("boost-check", tmp_path)
    m = artifacts.summary["metrics"]
    ok = (m["residual_rest"] < 5e-3 and m["residual_boosted"] < 5e-3
          and m["identity_boost_difference"] == 0.0
          and m["linear_surrogate_boosted_residual"] < 1e-10)
    report(9, "Lorentz boost", ok,
           f"rest {m['residual_rest']:.2e}, boosted {m['residual_boosted']:.2e} "
           f"< 5e-3; v=0 bitwise diff {m['identity_boost_difference']:.1e}; "
           f"linear surrogate {m['linear_surrogate_boosted_residual']:.1e} < 1e-10")


def test_criterion_10_robustness_of_perceptibles(two_outcome_run):
    artifacts, _ = two_outcome_run
    base_freq = artifacts.summary["metrics"]["frequency_1"]
    two_sigma = 2.0 * np.sqrt(0.21 / TWO_OUTCOME_DEFAULTS["ensemble_size"])

    variations = {}
    p = dict(TWO_OUTCOME_DEFAULTS)
    p["dt"] = p["dt"] / 2.0
    stats, _, _, _ = run_two_outcome_core(p, with_drift=False)
    variations["dt halved"] = float(stats.frequencies[0])

    stats, _, _, _ = run_two_outcome_core(dict(TWO_OUTCOME_DEFAULTS),
                                          speed_cap_factor=100.0, with_drift=False)
    variations["node cap x10"] = float(stats.frequencies[0])

    for factor, label in ((0.8, "width x0.8"), (1.2, "width x1.2")):
        p = dict(TWO_OUTCOME_DEFAULTS)
        p["pointer_width"] = p["pointer_width"] * factor
        stats, _, _, _ = run_two_outcome_core(p, with_drift=False)
        variations[label] = float(stats.frequencies[0])

    shifts = {k: abs(v - base_freq) for k, v in variations.items()}
    ok = all(s < two_sigma for s in shifts.values())
    detail = ", ".join(f"{k}: {s:.4f}" for k, s in shifts.items())
    report(10, "robustness of perceptibles", ok,
           f"max shift vs 2 sigma {two_sigma:.4f} -- {detail}")


def test_criterion_11_determinism(tmp_path):
    a = run(CONFIGS / "free-gaussian.toml", tmp_path / "a")
    b = run(CONFIGS / "free-gaussian.toml", tmp_path / "b")
    identical = True
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        if (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes():
            identical = False
    report(11, "determinism", identical,
           "rerun with identical config+seed reproduces byte-identical artifacts")


def test_zz_all_criteria_summary():
    print()
    for line in _criteria:
        print(line)
    assert len(_criteria) == 11
