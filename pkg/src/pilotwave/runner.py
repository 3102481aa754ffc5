"""Config-driven experiment runner with reproducible artifacts.

Configs are TOML with two sections:

    [experiment]
    name = "free-gaussian"        # one of the preset names

    [params]                      # optional per-preset overrides
    ensemble_size = 10000

Unknown sections, unknown keys, and out-of-range values are hard errors.
A run writes its output directory with a resolved-config echo, a JSON
summary (metrics plus pass/fail checks at their declared thresholds), the
preset's CSV/JSON data files, and a manifest of SHA-256 content hashes.
Rerunning with the same config and seed reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .equilibrium import CoarseGraining, RelaxationConfig, multimode_state
from .errors import ConfigError
from .experiments import PRESETS, ExperimentResult, build_two_outcome
from .measurement import SternGerlachConfig, stern_gerlach_setup
from .state import Grid

OUTPUT_ROOT_ENV = "PILOTWAVE_OUT"


@dataclass(frozen=True)
class RunArtifacts:
    out_dir: Path
    summary: dict
    files: tuple[str, ...]

    @property
    def all_passed(self) -> bool:
        return bool(self.summary["all_passed"])


# =====================================================================
# Parsing and validation
# =====================================================================


def parse_config(path: str | Path) -> dict:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return data


def parse_override(text: str):
    """--set key=value with a TOML-typed value; bare keys target [params]."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return key, parsed


_INT_PARAMS = {"grid_points", "system_points", "pointer_points", "ensemble_size",
               "seed", "phase_seed", "n_modes", "mode_range", "coarse_bins",
               "n_atoms"}
_POSITIVE_PARAMS = {"dt", "duration", "box_length", "sigma", "packet_width",
                    "pointer_width", "pointer_mass", "mass", "hbar", "spring",
                    "spacing", "record_every", "system_box", "pointer_box",
                    "speed", "separation", "packet_offset", "dv_threshold",
                    "readout_time", "mode_momentum", "packet_center",
                    "packet_width_fraction"}
_UNIT_INTERVAL_PARAMS = {"up_weight", "weight_1", "boost_fraction", "patch_fraction"}


def _check_value(name: str, value, default) -> object:
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"parameter {name} must be a boolean")
    if isinstance(default, (int, float)) and isinstance(value, bool):
        raise ConfigError(f"parameter {name} must be a number, got a boolean")
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int):
            raise ConfigError(f"parameter {name} must be an integer, got {value!r}")
    elif isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"parameter {name} must be a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"parameter {name} must be a string, got {value!r}")
    elif isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"parameter {name} must be a list, got {value!r}")
    if name in _INT_PARAMS and value < (0 if "seed" in name else 1):
        raise ConfigError(f"parameter {name} must be positive, got {value!r}")
    if name in _POSITIVE_PARAMS and not value > 0:
        raise ConfigError(f"parameter {name} must be positive, got {value!r}")
    if name in _UNIT_INTERVAL_PARAMS and not 0.0 < value < 1.0:
        raise ConfigError(f"parameter {name} must lie strictly between 0 and 1, "
                          f"got {value!r}")
    return value


def _deep_validate(name: str, params: dict) -> None:
    """Construct the preset's cheap objects so structural invariants fire now."""
    if name == "free-gaussian" or name == "double-slit":
        half = 0.5 * params["box_length"]
        grid = Grid.regular([(params["grid_points"], -half, half)])
        CoarseGraining((params["coarse_bins"],)).validate(grid)
    elif name == "stern-gerlach":
        cfg = SternGerlachConfig(
            grid_points=params["grid_points"], box_length=params["box_length"],
            packet_width=params["packet_width"],
            spin_up_amplitude=np.sqrt(params["up_weight"]),
            spin_down_amplitude=np.sqrt(1.0 - params["up_weight"]),
            gradient=params["gradient"], window=(params["t_on"], params["t_off"]),
            readout_time=params["readout_time"], mass=params["mass"],
            hbar=params["hbar"], ensemble_size=params["ensemble_size"],
            seed=params["seed"], dt=params["dt"])
        stern_gerlach_setup(cfg)
    elif name == "two-outcome-measurement":
        build_two_outcome(params)
    elif name == "relaxation":
        cfg = RelaxationConfig(
            grid_points=params["grid_points"], box_length=params["box_length"],
            mode_range=params["mode_range"], n_modes=params["n_modes"],
            coarse_bins=params["coarse_bins"])
        psi, _ = multimode_state(cfg)
        CoarseGraining((params["coarse_bins"],) * 2).validate(psi.grid)
    elif name == "entangled-pair":
        half = 0.5 * params["box_length"]
        Grid.regular([(params["grid_points"], -half, half)] * 2)
    elif name in ("phonon-dispersion", "phonon-trajectories", "boost-check"):
        from .phonon import LatticeChain
        for n in params.get("chain_sizes", [params.get("n_atoms", 8)]):
            LatticeChain(int(n), params["mass"], params["spring"], params["spacing"])


def resolve_config(data: dict, seed: int | None = None,
                   overrides: Sequence[str] = ()) -> tuple[str, dict]:
    """Merge defaults with the parsed config; reject anything unknown."""
    unknown_sections = set(data) - {"experiment", "params"}
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {sorted(unknown_sections)}")
    exp = data.get("experiment")
    if not isinstance(exp, dict) or "name" not in exp:
        raise ConfigError("config needs an [experiment] section with a name")
    extra = set(exp) - {"name"}
    if extra:
        raise ConfigError(f"unknown [experiment] key(s): {sorted(extra)}")
    name = exp["name"]
    if name not in PRESETS:
        raise ConfigError(f"unknown experiment {name!r}; "
                          f"known: {', '.join(PRESETS)}")
    preset = PRESETS[name]
    params = dict(preset.defaults)
    given = data.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("[params] must be a table")
    for key, value in given.items():
        if key not in preset.defaults:
            raise ConfigError(f"unknown parameter {key!r} for experiment {name}")
        params[key] = _check_value(key, value, preset.defaults[key])
    for text in overrides:
        key, value = parse_override(text)
        key = key.removeprefix("params.")
        if key not in preset.defaults:
            raise ConfigError(f"unknown parameter {key!r} for experiment {name}")
        params[key] = _check_value(key, value, preset.defaults[key])
    if seed is not None:
        params["seed"] = _check_value("seed", seed, 0)
    _deep_validate(name, params)
    return name, params


def validate(config_path: str | Path, seed: int | None = None,
             overrides: Sequence[str] = ()) -> tuple[str, dict]:
    """Full validation without running; returns the resolved (name, params)."""
    return resolve_config(parse_config(config_path), seed, overrides)


# =====================================================================
# Running and artifact writing
# =====================================================================


def _config_echo_toml(name: str, params: dict) -> str:
    lines = ["[experiment]", f'name = "{name}"', "", "[params]"]
    for key in sorted(params):
        value = params[key]
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        elif isinstance(value, list):
            rendered = "[" + ", ".join(repr(v) for v in value) + "]"
        else:
            rendered = repr(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def default_output_dir(name: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / name


def run(config_path: str | Path, out_dir: str | Path | None = None,
        seed: int | None = None, overrides: Sequence[str] = ()) -> RunArtifacts:
    name, params = validate(config_path, seed, overrides)
    out = Path(out_dir) if out_dir is not None else default_output_dir(name)
    out.mkdir(parents=True, exist_ok=True)

    result: ExperimentResult = PRESETS[name].run(params)

    summary = {
        "experiment": name,
        "config": {"experiment": {"name": name}, "params": _jsonable(params)},
        "metrics": _jsonable(result.metrics),
        "checks": [c.as_dict() for c in result.checks],
        "all_passed": all(c.passed for c in result.checks),
        "node_cap_triggers": int(result.cap_triggers),
        "seed": params.get("seed"),
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }

    files = dict(result.files)
    files["config.toml"] = _config_echo_toml(name, params)
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"

    manifest = {}
    for fname in sorted(files):
        payload = files[fname].encode("utf-8")
        (out / fname).write_bytes(payload)
        manifest[fname] = hashlib.sha256(payload).hexdigest()
    (out / "manifest.json").write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))

    return RunArtifacts(out, summary, tuple(sorted(files)) + ("manifest.json",))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def list_experiments() -> list[dict]:
    """Static catalog: name, one-line description, implementing module."""
    return [{"name": p.name, "description": p.description, "module": p.module}
            for p in PRESETS.values()]
