"""Layered JSON configuration: defaults, deep merge, typed accessors."""

import json

import pytest

from percolab.config import Config, ConfigError, load_config


def test_defaults_load_and_validate():
    cfg = Config.from_dict({})
    assert cfg.spec().d == 2
    assert cfg.percolation().p == 0.5
    assert cfg.percolation().seed == 2024
    params = cfg.scale_params()
    assert params.mode == "toy" and params.k1 == 1
    ev = cfg.event()
    assert ev.name == "two-east-edges" and ev.L == 1


def test_seed_override_wins():
    cfg = Config.from_dict({})
    assert cfg.percolation(seed=7).seed == 7


def test_deep_merge_preserves_siblings():
    cfg = Config.from_dict({"sample": {"p": 0.55}})
    assert cfg.percolation().p == 0.55
    assert cfg.percolation().seed == 2024  # sibling default untouched
    assert cfg.section("estimation")["n_samples"] == 2000


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError, match="typo_section"):
        Config.from_dict({"typo_section": {}})
    with pytest.raises(ConfigError, match="sample"):
        Config.from_dict({"sample": {"pee": 0.5}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        Config.from_dict({"lattice": {"d": 0}})
    with pytest.raises(ConfigError):
        Config.from_dict({"sample": {"p": 1.5}})
    with pytest.raises(ConfigError):
        Config.from_dict({"supercritical": {"r_pair": [32, 16]}})
    with pytest.raises(ConfigError):
        Config.from_dict({"supercritical": {"p_list": [0.51, 0.55]}})
    with pytest.raises(ConfigError):
        Config.from_dict({"hopf": {"size_min": 5, "size_max": 3}})


def test_families_constructed_from_config():
    cfg = Config.from_dict({"iic": {"families": ["box_boundary",
                                                "vertex_set_with_obstacle"],
                                    "n_list": [4, 8]}})
    fams = cfg.iic_families()
    assert [f.kind for f in fams] == ["box_boundary",
                                     "vertex_set_with_obstacle"]
    assert fams[0].n_list == (4, 8)


def test_faithful_mode_requires_admissible_k1():
    with pytest.raises(ConfigError, match="floor|k1"):
        Config.from_dict({"scales": {"mode": "faithful", "k1": 10}})


def test_custom_event_pattern():
    cfg = Config.from_dict({"event": {
        "name": "custom", "L": 1,
        "pattern": [[[[0, 0], [1, 0]], True]]}})
    ev = cfg.event()
    assert ev.name == "custom"
    assert ev.L == 1


def test_echo_round_trips_to_json(tmp_path):
    cfg = Config.from_dict({"sample": {"seed": 42}})
    blob = json.dumps(cfg.echo(), sort_keys=True)
    again = Config.from_dict(json.loads(blob))
    assert again.percolation().seed == 42
    assert json.dumps(again.echo(), sort_keys=True) == blob


def test_load_config_paths(tmp_path):
    assert load_config(None).percolation().seed == 2024
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"sample": {"seed": 1}}))
    assert load_config(str(p)).percolation().seed == 1
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
