#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Layered run configuration: defaults, user file, --config file, command line
"""

from datetime import datetime
from einsum_gestures.aoa import FieldOfView
from einsum_gestures.circuit import CircuitSpec
from einsum_gestures.fusion import FUSION_MODES
from einsum_gestures.preprocess import PreprocessParams
from einsum_gestures.simulation import ArrayGeometry, NlosPath, SimConfig
from importlib.metadata import PackageNotFoundError, version
import json
from logging import getLogger
from pathlib import Path
from platformdirs import user_config_dir
import pytz

APP_NAME = "einsum_gestures"
FALLBACK_VERSION = "0.1.0+unknown"

DEFAULTS = {
    # dataset
    "classes": 21,
    "samples_per_class": 20,
    "seed": 0,
    "duration_s": 2.0,
    # channel
    "element_spacing": 0.8,
    "noise_variance": 0.003,
    "reads_per_second": 1600.0,
    "nlos_gain_ratio": 0.2,
    "nlos_azimuth_deg": 25.0,
    "nlos_range_m": 4.0,
    "misdetect_rss_floor_db": -2.5,
    # angle of arrival
    "window": 64,
    "hop": 32,
    "grid_step_deg": 0.05,
    "min_pairs": 16,
    "fov_half_width_deg": 18.0,
    "process_noise": 1.0,
    "measurement_noise": 0.05,
    "keep_spectra": False,
    # preprocessing
    "savgol_window": 11,
    "savgol_polyorder": 3,
    "gaussian_sigma": 2.0,
    # circuits
    "depth_spr": 6,
    "depth_sa": 4,
    "depth_wa": 5,
    "sum_components": 2,
    "leaf_distributions": 10,
    "repetitions": 10,
    "structure_seed": 0,
    "epochs": 30,
    "smoothing": 0.01,
    "variance_floor": 1e-3,
    # evaluation
    "test_fraction": 0.2,
    "split_seed": 0,
    "fusion": "product",
    # execution
    "workers": 0,
    "deterministic": False,
}
# keys fixed by simulate; later stages take them from the dataset
DATASET_KEYS = (
    "classes",
    "samples_per_class",
    "seed",
    "duration_s",
    "element_spacing",
    "noise_variance",
    "reads_per_second",
    "nlos_gain_ratio",
    "nlos_azimuth_deg",
    "nlos_range_m",
    "misdetect_rss_floor_db",
)

logger = getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def package_version() -> str:
    try:
        return version(APP_NAME)
    except PackageNotFoundError:
        return FALLBACK_VERSION


def user_config_path() -> Path:
    return Path(user_config_dir(APP_NAME)) / "config.json"


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    raise ConfigError(
        f"Configuration key {key!r} expects {type(default).__name__}, got {value!r}."
    )


def check_layer(layer: dict, source: str) -> dict:
    """Validate one configuration layer; unknown keys and wrong types are errors."""
    if not isinstance(layer, dict):
        raise ConfigError(f"Configuration in {source} must be a JSON object.")
    unknown = sorted(set(layer) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"Unknown configuration keys in {source}: {', '.join(unknown)}.")
    return {k: _coerce(k, v) for k, v in layer.items()}


def load_config_file(path: Path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Configuration file {path} does not exist.")
    except json.JSONDecodeError as err:
        raise ConfigError(f"Configuration file {path} is not valid JSON: {err}")
    # a resolved config.json written by a previous run nests the values
    if isinstance(d, dict) and "config" in d and "version" in d:
        d = d["config"]
    return check_layer(d, str(path))


def resolve_config(
    overrides: dict = dict(), config_path: Path | None = None, use_user_file: bool = True
) -> dict:
    """Defaults, then the per-user file, then config_path, then overrides (None ignored)."""
    resolved = dict(DEFAULTS)
    user_path = user_config_path()
    if use_user_file and user_path.exists():
        logger.info(f"Reading user configuration {user_path}")
        resolved.update(load_config_file(user_path))
    if config_path is not None:
        resolved.update(load_config_file(config_path))
    resolved.update(
        check_layer({k: v for k, v in overrides.items() if v is not None}, "command line")
    )
    validate(resolved)
    logger.debug(f"Resolved configuration: {resolved}")
    return resolved


def validate(config: dict):
    positive = (
        "classes",
        "samples_per_class",
        "window",
        "hop",
        "min_pairs",
        "sum_components",
        "leaf_distributions",
        "repetitions",
        "depth_spr",
        "depth_sa",
        "depth_wa",
        "savgol_window",
    )
    for key in positive:
        if config[key] < 1:
            raise ConfigError(f"{key} must be at least 1, got {config[key]}.")
    for key in ("duration_s", "reads_per_second", "grid_step_deg", "gaussian_sigma"):
        if config[key] <= 0:
            raise ConfigError(f"{key} must be positive, got {config[key]}.")
    if not 0.0 < config["test_fraction"] < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {config['test_fraction']}.")
    if config["fusion"] not in FUSION_MODES:
        raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {config['fusion']!r}.")
    if config["workers"] < 0:
        raise ConfigError(f"workers must be non-negative, got {config['workers']}.")


def adopt_dataset(config: dict, workspace: Path) -> dict:
    """
    Replace the dataset keys of config with those recorded in the workspace config.json.

    Workspaces without a config.json leave config unchanged.
    """
    path = Path(workspace) / "config.json"
    if not path.exists():
        return config
    recorded = load_config_file(path)
    adopted = dict(config)
    for key in DATASET_KEYS:
        if key in recorded and recorded[key] != config[key]:
            logger.info(
                f"Dataset in {workspace} has {key}={recorded[key]!r}; ignoring {config[key]!r}."
            )
            adopted[key] = recorded[key]
    validate(adopted)
    return adopted


def worker_count(config: dict) -> int:
    """1 under --deterministic, else the configured count (0 lets the pool decide)."""
    if config["deterministic"]:
        return 1
    return config["workers"] or None


def array_geometry(config: dict) -> ArrayGeometry:
    return ArrayGeometry(element_spacing_wavelengths=config["element_spacing"])


def sim_config(config: dict, seed: int) -> SimConfig:
    return SimConfig(
        noise_variance=config["noise_variance"],
        nlos_paths=(
            NlosPath(
                gain_ratio=config["nlos_gain_ratio"],
                azimuth_deg=config["nlos_azimuth_deg"],
                range_m=config["nlos_range_m"],
            ),
        ),
        reads_per_second=config["reads_per_second"],
        misdetect_rss_floor_db=config["misdetect_rss_floor_db"],
        rng_seed=seed,
    )


def field_of_view(config: dict) -> FieldOfView:
    return FieldOfView.from_geometry(array_geometry(config), config["fov_half_width_deg"])


def preprocess_params(config: dict) -> PreprocessParams:
    return PreprocessParams(
        savgol_window=config["savgol_window"],
        savgol_polyorder=config["savgol_polyorder"],
        gaussian_sigma=config["gaussian_sigma"],
    )


def circuit_spec(config: dict, kind: str, num_variables: int) -> CircuitSpec:
    return CircuitSpec(
        depth=config[f"depth_{kind}"],
        sum_components=config["sum_components"],
        leaf_distributions=config["leaf_distributions"],
        repetitions=config["repetitions"],
        classes=config["classes"],
        num_variables=num_variables,
        structure_seed=config["structure_seed"],
    )


def write_config(directory: Path, config: dict):
    """config.json: the resolved configuration and the code version."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    d = {"version": package_version(), "config": dict(sorted(config.items()))}
    with open(directory / "config.json", "w", encoding="utf-8") as f:
        json.dump(d, f, indent=1)


def write_provenance(directory: Path, command: str, started: datetime, status: int):
    """provenance.json: UTC start and finish times; not part of reproducible outputs."""
    d = {
        "command": command,
        "version": package_version(),
        "started": started.isoformat(),
        "finished": datetime.now(tz=pytz.utc).isoformat(),
        "exit_status": status,
    }
    with open(Path(directory) / "provenance.json", "w", encoding="utf-8") as f:
        json.dump(d, f, indent=1)
