"""Config-driven scenario runner, manifests and CLI."""

from .config import (
    ConfigError,
    ScenarioConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    parse_config,
    serialize_config,
)
from .manifest import ManifestEntry, RunManifest, build_manifest, read_manifest, write_manifest
from .render import RenderError, load_grid_csv, render_csv_to_pgm
from .runner import (
    MultibsResult,
    PositioningResult,
    SweepResult,
    build_pilot_grid,
    compare_estimators,
    run_multibs_trials,
    run_positioning_trials,
    run_scenario,
    run_sweep,
    snr_offset_db,
)

__all__ = [
    "ConfigError",
    "ManifestEntry",
    "MultibsResult",
    "PositioningResult",
    "RenderError",
    "RunManifest",
    "ScenarioConfig",
    "SweepResult",
    "build_manifest",
    "build_pilot_grid",
    "compare_estimators",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "load_config",
    "load_grid_csv",
    "parse_config",
    "read_manifest",
    "render_csv_to_pgm",
    "run_multibs_trials",
    "run_positioning_trials",
    "run_scenario",
    "run_sweep",
    "snr_offset_db",
    "serialize_config",
    "write_manifest",
]
