import json

import numpy as np
import pytest

from rkpinn.config import ConfigError, config_from_dict, parse_config, write_manifest


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.system_params.m == 0.4
    assert cfg.scheme == "gauss-legendre"
    assert cfg.stages == 4
    assert cfg.hidden == [50]
    assert cfg.normalize_inputs is True
    assert cfg.training.epochs == 100_000
    assert cfg.seeds == [0, 1, 2, 3, 4]
    assert cfg.lr_epoch_scale == 1.0
    assert len(cfg.config_hash()) == 64


def test_partial_override():
    cfg = config_from_dict({"training": {"epochs": 500},
                            "experiment": {"seeds": [7]}})
    assert cfg.training.epochs == 500
    assert cfg.seeds == [7]
    # untouched sections keep defaults
    assert cfg.training.log_every == 100
    assert cfg.stages == 4


def test_unknown_field_rejected_with_path():
    with pytest.raises(ConfigError, match="training.lr"):
        config_from_dict({"training": {"lr": 0.01}})
    with pytest.raises(ConfigError, match="epochz"):
        config_from_dict({"training": {"epochz": 10}})


@pytest.mark.parametrize("override", [
    {"system": {"m": -1.0}},
    {"tableau": {"stages": 0}},
    {"tableau": {"scheme": "radau"}},
    {"network": {"hidden": []}},
    {"network": {"normalize_inputs": 1}},
    {"training": {"epochs": 0}},
    {"training": {"lr_epoch_scale": 0.0}},
    {"grid": {"dt_step": -0.1}},
    {"experiment": {"test_points": 0}},
])
def test_invalid_values_rejected(override):
    with pytest.raises(ConfigError):
        config_from_dict(override)


def test_hash_tracks_content():
    a = config_from_dict({})
    b = config_from_dict({"training": {"epochs": 123}})
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == config_from_dict({}).config_hash()


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"tableau": {"stages": 8}}))
    cfg = parse_config(path)
    assert cfg.stages == 8


def test_parse_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        parse_config(path)
    path2 = tmp_path / "list.json"
    path2.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(path2)


def test_write_manifest(tmp_path):
    cfg = config_from_dict({})
    path = tmp_path / "manifest.json"
    write_manifest(path, cfg, seed=3, wall_time=1.5, extra={"command": "train"})
    doc = json.loads(path.read_text())
    assert doc["seed"] == 3
    assert doc["command"] == "train"
    assert doc["config_hash"] == cfg.config_hash()
    assert doc["versions"]["numpy"] == np.__version__
