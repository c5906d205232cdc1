import json

import pytest

from distsde.config import CHECKS, PRESETS, ConfigError, config_hash, load_config, parse_config, validate


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_valid(name):
    cfg = parse_config(f'preset = "{name}"')
    assert cfg["preset"] == name
    assert validate(cfg) == []
    assert set(cfg["run"]["checks"]) <= set(CHECKS)


def test_explicit_keys_override_preset():
    cfg = parse_config('preset = "ou"\n[run]\nM = 2000\nseed = 7\n')
    assert cfg["run"]["M"] == 2000 and cfg["run"]["seed"] == 7
    assert cfg["drift"]["b1"] == "linear"


def test_integer_fields_accept_integral_floats():
    cfg = parse_config("[run]\nM = 1e4\n")
    assert cfg["run"]["M"] == 10_000 and isinstance(cfg["run"]["M"], int)


def test_integer_fields_reject_fractions():
    with pytest.raises(ConfigError, match="integer"):
        parse_config("[run]\nM = 10.5\n")


def test_numbers_become_floats():
    cfg = parse_config("[grid]\nL = 16\n")
    assert isinstance(cfg["grid"]["L"], float)


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError, match="parse"):
        parse_config("[run\nM = 1\n")


@pytest.mark.parametrize("text", ['preset = "nope"', "[nosuch]\nx = 1\n", "[run]\nbogus = 1\n"])
def test_unknown_names_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_alpha_window_message():
    cfg = parse_config("[sobolev]\nalpha = 0.6\n")
    assert any("α ∈ (0,1/2]" in v for v in validate(cfg))


def test_strict_window_message():
    cfg = parse_config("[sobolev]\nalpha = 0.45\np = 4.0\n")
    assert validate(cfg) == []
    assert any("p > d/(1/2−α)" in v for v in validate(cfg, strict=True))


def test_validate_collects_structural_problems():
    cfg = parse_config('[grid]\nN = 1000\n[run]\ndt = 0.3\npipeline = "other"\nchecks = ["zvonkin", "bogus"]\n')
    out = "\n".join(validate(cfg))
    for needle in ("power of two", "multiple of dt", "unknown pipeline", "unknown checks", "distributional drift"):
        assert needle in out


def test_validate_never_raises_on_malformed_values():
    cfg = parse_config("")
    cfg["grid"]["N"] = "many"
    assert any("malformed" in v for v in validate(cfg))


def test_config_hash_is_canonical():
    a = parse_config('preset = "ou"\n[run]\nseed = 1\n[grid]\nN = 512\n')
    b = parse_config('preset = "ou"\n[grid]\nN = 512\n[run]\nseed = 1\n')
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(parse_config('preset = "ou"\n[run]\nseed = 2\n'))


def test_manifest_round_trip(tmp_path):
    cfg = parse_config('preset = "weierstrass-ergodic"')
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"config": cfg}))
    assert load_config(path) == cfg
    assert config_hash(load_config(path)) == config_hash(cfg)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
