"""Run configuration: JSON parsing, validation, defaults, and manifests."""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass, field

import numpy as np

from . import nn, pinn
from .dynamics import InputDomain, SmibParams
from .experiment import GridSpec


class ConfigError(ValueError):
    pass


def _default_config() -> dict:
    return {
        "system": {"m": 0.4, "d": 0.15, "b12": 0.2, "v1": 1.0, "v2": 1.0},
        "tableau": {"scheme": "gauss-legendre", "stages": 4},
        "network": {"hidden": [50], "normalize_inputs": True},
        "training": {
            "epochs": 100_000,
            "validation_points": 1000,
            "early_stop_patience": 5000,
            "log_every": 100,
            "lambda_stage": 1.0,
            "lambda_dt": 1.0,
            "lr_epoch_scale": 1.0,
        },
        "grid": {
            "dt_step": 0.1,
            "p_step": 0.004,
            "delta0_step": np.pi / 50,
            "dt_range": [0.0, 10.0],
            "p_range": [0.0, 0.2],
            "delta0_range": [-np.pi / 2, np.pi / 2],
            "omega0": 0.1,
        },
        "experiment": {
            "stages": [4],
            "collocation_sizes": [1000],
            "seeds": [0, 1, 2, 3, 4],
            "test_points": 2000,
            "percentile_ks": [100, 90, 50, 10],
        },
    }


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = dict(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    """Fully validated run configuration; `raw` is the effective JSON document."""

    raw: dict
    system_params: SmibParams
    scheme: str
    stages: int
    hidden: list
    normalize_inputs: bool
    training: pinn.TrainingConfig
    grid_spec: GridSpec
    stages_list: list
    collocation_sizes: list
    seeds: list
    test_points: int
    percentile_ks: list
    lr_epoch_scale: float

    def config_hash(self) -> str:
        return nn.config_hash(self.raw)


def _require(cond: bool, name: str, message: str):
    if not cond:
        raise ConfigError(f"invalid {name!r}: {message}")


def config_from_dict(user: dict) -> RunConfig:
    doc = _merge(_default_config(), user)
    sysc = doc["system"]
    try:
        params = SmibParams(sysc["m"], sysc["d"], sysc["b12"], sysc["v1"], sysc["v2"])
    except ValueError as exc:
        raise ConfigError(f"invalid 'system': {exc}") from None

    tb = doc["tableau"]
    _require(tb["scheme"] in ("gauss-legendre", "forward_euler", "backward_euler",
                              "trapezoidal", "rk4_classic"),
             "tableau.scheme", f"unknown scheme {tb['scheme']!r}")
    _require(isinstance(tb["stages"], int) and 1 <= tb["stages"] <= 64,
             "tableau.stages", "must be an integer in [1, 64]")

    net = doc["network"]
    _require(isinstance(net["hidden"], list) and net["hidden"]
             and all(isinstance(h, int) and h > 0 for h in net["hidden"]),
             "network.hidden", "must be a non-empty list of positive integers")
    _require(isinstance(net["normalize_inputs"], bool),
             "network.normalize_inputs", "must be a boolean")

    tr = doc["training"]
    for key in ("epochs", "validation_points", "early_stop_patience", "log_every"):
        _require(isinstance(tr[key], int) and tr[key] >= 1,
                 f"training.{key}", "must be a positive integer")
    for key in ("lambda_stage", "lambda_dt"):
        _require(tr[key] >= 0, f"training.{key}", "must be non-negative")
    _require(tr["lambda_stage"] > 0 or tr["lambda_dt"] > 0,
             "training", "at least one loss weight must be positive")
    _require(tr["lr_epoch_scale"] > 0, "training.lr_epoch_scale", "must be positive")

    g = doc["grid"]
    try:
        domain = InputDomain(tuple(g["dt_range"]), tuple(g["p_range"]),
                             tuple(g["delta0_range"]), g["omega0"])
        grid_spec = GridSpec(g["dt_step"], g["p_step"], g["delta0_step"], domain)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid 'grid': {exc}") from None

    ex = doc["experiment"]
    _require(all(isinstance(s, int) and 1 <= s <= 64 for s in ex["stages"]),
             "experiment.stages", "entries must be integers in [1, 64]")
    _require(all(isinstance(n, int) and n >= 1 for n in ex["collocation_sizes"]),
             "experiment.collocation_sizes", "entries must be positive integers")
    _require(all(isinstance(s, int) for s in ex["seeds"]),
             "experiment.seeds", "entries must be integers")
    _require(isinstance(ex["test_points"], int) and ex["test_points"] >= 1,
             "experiment.test_points", "must be a positive integer")

    training = pinn.TrainingConfig(
        epochs=tr["epochs"],
        validation_points=tr["validation_points"],
        early_stop_patience=tr["early_stop_patience"],
        seed=0,
        loss_weights=None,  # built per stage count at run time
        log_every=tr["log_every"],
        lr_epoch_scale=float(tr["lr_epoch_scale"]),
    )
    return RunConfig(
        raw=doc,
        system_params=params,
        scheme=tb["scheme"],
        stages=tb["stages"],
        hidden=list(net["hidden"]),
        normalize_inputs=net["normalize_inputs"],
        training=training,
        grid_spec=grid_spec,
        stages_list=list(ex["stages"]),
        collocation_sizes=list(ex["collocation_sizes"]),
        seeds=list(ex["seeds"]),
        test_points=ex["test_points"],
        percentile_ks=list(ex["percentile_ks"]),
        lr_epoch_scale=float(tr["lr_epoch_scale"]),
    )


def parse_config(path) -> RunConfig:
    """Load and validate a JSON config file; omitted fields take case-study defaults."""
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(user)


def write_manifest(path, config: RunConfig | None, seed, wall_time: float,
                   extra: dict | None = None) -> None:
    doc = {
        "config_hash": config.config_hash() if config else None,
        "config": config.raw if config else None,
        "seed": seed,
        "wall_time_s": wall_time,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=float)
        fh.write("\n")
