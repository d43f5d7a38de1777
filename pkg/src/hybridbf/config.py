"""Experiment configuration: YAML tree, strict keys, reproducible hashing.

An empty (or missing) file yields the full defaults: a 64x16 system at
28 GHz with half-wavelength spacing, 5 clusters of 5 rays, 4 RF chains,
and the stock training recipe (100 epochs, batches of 250, learning rate
1e-4, 80/10/10 split).  Unknown keys anywhere in the tree are hard
errors so typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .exceptions import ConfigError

EXPERIMENT_IDS = ("fig6", "fig7", "fig8", "fig9", "beampattern", "fig12", "fig13", "all")


@dataclass(frozen=True)
class TrainBlock:
    """Training hyperparameters (defaults mirror the reference setup)."""

    n_samples: int = 20000
    epochs: int = 100
    batch_size: int = 250
    learning_rate: float = 1e-4
    noise_sigma: float = 0.1
    tau: float = 0.1
    encoder_units: tuple = (300, 128)
    decoder_units: tuple = (100, 64)
    input_projection: int | None = None


@dataclass(frozen=True)
class BeamBlock:
    """Beam-pattern experiment: pointing direction, grid, angular spread."""

    center_az_deg: float = 55.0
    center_el_deg: float = 20.0
    grid_az: int = 181
    grid_el: int = 91
    az_min_deg: float = -90.0
    az_max_deg: float = 90.0
    el_min_deg: float = 0.0
    el_max_deg: float = 90.0
    spread_deg: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "all"
    n_t: int = 64
    n_r: int = 16
    n_rf_t: int = 4
    n_rf_r: int = 4
    n_s: int = 1
    n_cl: int = 5
    n_ray: int = 5
    structure: str = "fully_connected"
    carrier_ghz: float = 28.0
    spacing_factor: float = 0.5
    rng: str = "philox4x64"
    snr_grid_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    n_t_grid: tuple = (16, 32, 64)
    fixed_snr_db: float = 0.0
    dictionary: str = "genie"
    grid_az: int = 64
    grid_el: int = 16
    trials: int = 100
    ber_snr_grid_db: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    ber_n_rf: int = 5
    ber_bits_per_point: int = 1_000_000
    ber_channels: int = 20
    transmit_power_dbm: float = 12.0
    seed: int = 12345
    out_dir: str = "results"
    train: TrainBlock = field(default_factory=TrainBlock)
    beam: BeamBlock = field(default_factory=BeamBlock)


_LIST_FIELDS = {"snr_grid_db", "n_t_grid", "ber_snr_grid_db", "encoder_units", "decoder_units"}


def _coerce(name: str, value, default):
    if name in _LIST_FIELDS:
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            raise ConfigError(f"{name} must be a non-empty list")
        return tuple(type(default[0])(v) for v in value) if default else tuple(value)
    if default is None or value is None:
        return value
    return type(default)(value)


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {path or 'top level'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path + key!r}")
        f = fields[key]
        if f.name == "train":
            kwargs[key] = _build(TrainBlock, value, path + "train.")
        elif f.name == "beam":
            kwargs[key] = _build(BeamBlock, value, path + "beam.")
        else:
            default = getattr(cls(), key)
            kwargs[key] = _coerce(key, value, default)
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENT_IDS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENT_IDS}")
    if cfg.structure not in ("fully_connected", "sub_connected"):
        raise ConfigError(f"unknown structure {cfg.structure!r}")
    if cfg.structure == "sub_connected" and cfg.n_t % cfg.n_rf_t != 0:
        raise ConfigError(
            f"sub-connected mode needs n_t divisible by n_rf_t, got {cfg.n_t}/{cfg.n_rf_t}")
    if cfg.dictionary not in ("genie", "grid"):
        raise ConfigError(f"dictionary must be 'genie' or 'grid', got {cfg.dictionary!r}")
    if cfg.rng != "philox4x64":
        raise ConfigError(f"unsupported rng {cfg.rng!r}; only 'philox4x64' is implemented")
    if cfg.n_s > min(cfg.n_rf_t, cfg.n_rf_r):
        raise ConfigError(f"n_s={cfg.n_s} must not exceed the RF chain counts")
    for name in ("n_t", "n_r", "n_rf_t", "n_rf_r", "n_s", "n_cl", "n_ray", "trials"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    return cfg


def load_config(path=None) -> ExperimentConfig:
    """Parse and validate a YAML config file; None or empty file means defaults."""
    if path is None:
        return _validate(ExperimentConfig())
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        return _validate(ExperimentConfig())
    cfg = _build(ExperimentConfig, data, "")
    return _validate(cfg)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key in _LIST_FIELDS & set(d):
        d[key] = list(d[key])
    for block in ("train",):
        for key in _LIST_FIELDS & set(d[block]):
            d[block][key] = list(d[block][key])
    return d


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML form (sorted keys); load/serialize round-trips exactly."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable 16-hex-digit digest; excludes out_dir so results relocate freely."""
    d = config_to_dict(cfg)
    d.pop("out_dir", None)
    blob = json.dumps(d, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def training_hash(cfg: ExperimentConfig, n_t: int | None = None) -> str:
    """Digest of the fields a trained checkpoint depends on."""
    d = config_to_dict(cfg)
    view = {k: d[k] for k in ("n_r", "n_rf_t", "n_s", "n_cl", "n_ray",
                              "carrier_ghz", "spacing_factor", "seed", "rng")}
    view["n_t"] = int(n_t if n_t is not None else cfg.n_t)
    view["train"] = d["train"]
    blob = json.dumps(view, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
