"""Config parsing, validation, artifact writing, and CLI behavior."""

import hashlib
import json
from pathlib import Path

import pytest

from pilotwave.cli import main
from pilotwave.errors import ConfigError
from pilotwave.experiments import PRESETS
from pilotwave.runner import (
    default_output_dir,
    list_experiments,
    parse_override,
    run,
    validate,
)

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"


def write_config(tmp_path, body):
    path = tmp_path / "cfg.toml"
    path.write_text(body)
    return path


class TestValidation:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_shipped_configs_validate(self, name):
        resolved_name, params = validate(CONFIGS / f"{name}.toml")
        assert resolved_name == name
        assert params == dict(PRESETS[name].defaults)

    def test_nonpositive_dt_names_field(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[params]\ndt = -0.5\n')
        with pytest.raises(ConfigError, match="dt"):
            validate(cfg)

    def test_zero_ensemble_names_field(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[params]\nensemble_size = 0\n')
        with pytest.raises(ConfigError, match="ensemble_size"):
            validate(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[params]\ngrid_pts = 64\n')
        with pytest.raises(ConfigError, match="grid_pts"):
            validate(cfg)

    def test_unknown_experiment_rejected(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "frobnicate"\n')
        with pytest.raises(ConfigError, match="frobnicate"):
            validate(cfg)

    def test_unknown_section_rejected(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[extras]\nfoo = 1\n')
        with pytest.raises(ConfigError, match="extras"):
            validate(cfg)

    def test_weak_pointer_coupling_fails_separation_check(self, tmp_path):
        cfg = write_config(tmp_path,
                           '[experiment]\nname = "two-outcome-measurement"\n'
                           '[params]\ncoupling = 0.5\n')
        with pytest.raises(ValueError, match="separation"):
            validate(cfg)

    def test_type_mismatch_rejected(self, tmp_path):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[params]\ngrid_points = 12.5\n')
        with pytest.raises(ConfigError, match="integer"):
            validate(cfg)

    def test_malformed_toml_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "not really [toml\n===")
        with pytest.raises(ConfigError, match="TOML"):
            validate(cfg)

    def test_override_parsing(self):
        assert parse_override("params.dt=0.5") == ("params.dt", 0.5)
        assert parse_override("seed=9") == ("seed", 9)
        with pytest.raises(ConfigError):
            parse_override("no-equals-sign")


class TestCatalog:
    def test_exactly_nine_presets(self):
        assert len(list_experiments()) == 9

    def test_entries_name_their_module(self):
        for entry in list_experiments():
            assert entry["module"] in {"guidance", "measurement", "equilibrium",
                                       "phonon"}
            assert entry["description"]

    def test_catalog_is_stable(self):
        assert list_experiments() == list_experiments()


class TestRunArtifacts:
    def test_run_writes_manifest_and_summary(self, tmp_path):
        out = tmp_path / "run"
        artifacts = run(CONFIGS / "entangled-pair.toml", out)
        assert artifacts.all_passed
        manifest = json.loads((out / "manifest.json").read_text())
        for fname, digest in manifest.items():
            payload = (out / fname).read_bytes()
            assert hashlib.sha256(payload).hexdigest() == digest
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["params"] == dict(
            PRESETS["entangled-pair"].defaults)
        assert summary["seed"] == PRESETS["entangled-pair"].defaults["seed"]
        assert "node_cap_triggers" in summary

    def test_csv_cells_round_trip_as_floats(self, tmp_path):
        for name in ("free-gaussian", "boost-check", "phonon-dispersion"):
            out = tmp_path / name
            run(CONFIGS / f"{name}.toml", out)
            for csv_path in out.glob("*.csv"):
                lines = csv_path.read_text().strip().split("\n")
                for line in lines[1:]:
                    for cell in line.split(","):
                        try:
                            float(cell)
                        except ValueError:
                            is_tag = cell.replace("_", "").isalpha()
                            assert is_tag and not cell.startswith("np."), \
                                f"{csv_path.name}: unparseable cell {cell!r}"

    def test_rerun_is_byte_identical(self, tmp_path):
        a = run(CONFIGS / "boost-check.toml", tmp_path / "a")
        b = run(CONFIGS / "boost-check.toml", tmp_path / "b")
        files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_seed_override_lands_in_summary(self, tmp_path):
        artifacts = run(CONFIGS / "entangled-pair.toml", tmp_path / "s", seed=123)
        assert artifacts.summary["seed"] == 123

    def test_config_echo_revalidates_to_same_params(self, tmp_path):
        artifacts = run(CONFIGS / "boost-check.toml", tmp_path / "echo",
                        overrides=["boost_fraction=0.25"])
        name, params = validate(tmp_path / "echo" / "config.toml")
        assert name == "boost-check"
        assert params == artifacts.summary["config"]["params"]

    def test_set_override_applies(self, tmp_path):
        artifacts = run(CONFIGS / "phonon-dispersion.toml", tmp_path / "o",
                        overrides=["chain_sizes=[8, 16]"])
        assert artifacts.summary["config"]["params"]["chain_sizes"] == [8, 16]

    def test_output_root_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("PILOTWAVE_OUT", str(tmp_path / "root"))
        assert default_output_dir("foo") == tmp_path / "root" / "foo"


class TestCli:
    def test_list_exits_zero(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        assert out.count("\n") == 9

    def test_validate_good_config(self, capsys):
        assert main(["validate", "--config", str(CONFIGS / "boost-check.toml")]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_bad_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path, '[experiment]\nname = "free-gaussian"\n'
                                     '[params]\ndt = 0\n')
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "dt" in capsys.readouterr().err

    def test_run_exit_zero_on_pass(self, tmp_path, capsys):
        code = main(["run", "--config", str(CONFIGS / "entangled-pair.toml"),
                     "--out", str(tmp_path / "ok")])
        assert code == 0
        assert "[PASS]" in capsys.readouterr().out

    def test_run_exit_one_on_failed_check(self, tmp_path, capsys):
        code = main(["run", "--config", str(CONFIGS / "entangled-pair.toml"),
                     "--out", str(tmp_path / "fail"),
                     "--set", "dv_threshold=10.0"])
        assert code == 1
        assert "[FAIL]" in capsys.readouterr().out
