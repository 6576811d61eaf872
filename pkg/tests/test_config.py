import json

import pytest

from noise_forge.config import ENV_CONFIG, ConfigError, PipelineConfig, parse_config


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def test_defaults():
    cfg = parse_config()
    assert cfg == PipelineConfig()
    assert cfg.n_images == 100
    assert cfg.channels == 4
    assert cfg.t_obj == 0.5
    assert cfg.t_bg == 0.1
    assert cfg.backend_kind == "synthetic"
    assert cfg.backend_d == 64
    assert cfg.canvas == 512


def test_file_overrides_defaults(tmp_path):
    path = write_config(tmp_path, {"n_images": 7, "t_obj": 0.8})
    cfg = parse_config(path)
    assert cfg.n_images == 7
    assert cfg.t_obj == 0.8
    assert cfg.t_bg == 0.1


def test_overrides_beat_file(tmp_path):
    path = write_config(tmp_path, {"n_images": 7, "seed": 3})
    cfg = parse_config(path, overrides={"n_images": 9})
    assert cfg.n_images == 9
    assert cfg.seed == 3


def test_none_overrides_are_skipped(tmp_path):
    path = write_config(tmp_path, {"t_obj": 0.7})
    cfg = parse_config(path, overrides={"t_obj": None})
    assert cfg.t_obj == 0.7


def test_env_var_supplies_file(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"channels": 8})
    monkeypatch.setenv(ENV_CONFIG, str(path))
    assert parse_config().channels == 8


def test_explicit_path_beats_env(tmp_path, monkeypatch):
    env_path = write_config(tmp_path, {"seed": 11, "channels": 8}, name="env.json")
    arg_path = write_config(tmp_path, {"seed": 22}, name="arg.json")
    monkeypatch.setenv(ENV_CONFIG, str(env_path))
    cfg = parse_config(arg_path)
    assert cfg.seed == 22
    # env file still contributes keys the explicit file does not set
    assert cfg.channels == 8


def test_nested_backend_section(tmp_path):
    path = write_config(tmp_path, {"backend": {"kind": "import", "d": 32, "seed": 5}})
    cfg = parse_config(path)
    assert cfg.backend_kind == "import"
    assert cfg.backend_d == 32
    assert cfg.backend_seed == 5


def test_unknown_key_is_named(tmp_path):
    path = write_config(tmp_path, {"n_imagez": 5})
    with pytest.raises(ConfigError, match="n_imagez"):
        parse_config(path)


def test_unknown_backend_key_is_named(tmp_path):
    path = write_config(tmp_path, {"backend": {"kind": "synthetic", "depth": 3}})
    with pytest.raises(ConfigError, match="backend.depth"):
        parse_config(path)


def test_unknown_override_key_is_named():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(overrides={"bogus": 1})


def test_missing_file_raises(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.json")


def test_malformed_file_raises(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{invalid")
    with pytest.raises(ConfigError):
        parse_config(path)


@pytest.mark.parametrize("payload", [
    {"n_images": 0},
    {"n_images": -3},
    {"channels": 0},
    {"t_obj": -0.1},
    {"t_obj": 1.5},
    {"t_bg": 2.0},
    {"seed": -1},
    {"backend": {"kind": "magic"}},
    {"backend": {"d": 0}},
    {"canvas": 0},
])
def test_range_validation(tmp_path, payload):
    path = write_config(tmp_path, payload)
    with pytest.raises(ConfigError):
        parse_config(path)


def test_bool_is_not_an_int(tmp_path):
    path = write_config(tmp_path, {"n_images": True})
    with pytest.raises(ConfigError):
        parse_config(path)


def test_config_is_frozen():
    cfg = parse_config()
    with pytest.raises(AttributeError):
        cfg.n_images = 5
