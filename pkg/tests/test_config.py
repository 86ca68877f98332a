import math

import pytest

from guidance_lab import guidance as G
from guidance_lab.config import (
    COMMANDS, config_hash, config_to_dict, default_config, parse_config, serialize_config,
    with_overrides,
)
from guidance_lab.errors import ConfigError


def test_minimal_verify_config_fills_defaults():
    cfg = parse_config(b"command: verify\n")
    assert cfg == default_config("verify")
    assert cfg.verify.harnack_pairs == 10_000 and cfg.verify.alpha_h == (1.5, 2.0, 4.0)
    assert cfg.schedule.to_dict()["beta_const"] == 2.0


def test_toy2d_defaults():
    cfg = default_config("toy2d")
    assert cfg.n_samples == 5000 and cfg.seeds == tuple(range(10))
    assert [g.kind for g in cfg.guidance] == ["fixed", "c2fg", "beta_pdf"]
    assert cfg.distribution.radius == 3.0 and cfg.distribution.labels == ["orange", "gray"]
    assert default_config("sweep").sweep.lam[3] == pytest.approx(math.log(2))


def test_interval_constraint_names_field():
    text = """
command: toy2d
guidance:
  - kind: interval
    omega: 2.0
    t_low: 0.8
    t_high: 0.2
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == "guidance.interval"
    assert "guidance.interval" in str(info.value)


def test_weight_sum_names_field():
    text = """
command: toy2d
distribution:
  components:
    - {weight: 0.5, label: orange, mean: [0, 0], cov: 1.0}
    - {weight: 0.4, label: gray, mean: [1, 1], cov: 1.0}
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == "distribution.components.weight"


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError) as info:
        parse_config("command: verify\nverify: {probes: [1, 2\n")
    assert info.value.line is not None and info.value.column is not None
    assert "line" in str(info.value)


@pytest.mark.parametrize("text,field", [
    ("command: verify\nbogus: 1\n", "bogus"),
    ("command: verify\nverify: {probes: 8, pairs: 3}\n", "verify.pairs"),
    ("command: toy2d\nsampler: {kind: ddim, stepz: 3}\n", "sampler.stepz"),
])
def test_unknown_fields_rejected(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert field in str(info.value)


def test_value_errors():
    with pytest.raises(ConfigError) as info:
        parse_config("command: toy2d\ntarget_class: blue\n")
    assert info.value.field == "target_class"
    with pytest.raises(ConfigError):
        parse_config("command: toy2d\nseeds: []\n")
    with pytest.raises(ConfigError):
        parse_config("command: toy2d\nn_samples: 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("command: toy2d\nmetrics: {mass: 1.0}\n")
    with pytest.raises(ConfigError):
        parse_config("command: verify\n", command="toy2d")
    with pytest.raises(ConfigError):
        parse_config("command: nonsense\n")
    with pytest.raises(ConfigError):
        parse_config(b"\xff\xfe")
    with pytest.raises(ConfigError):
        parse_config("command: toy2d\nschedule: {kind: ve-geometric-sigma}\nsampler: {kind: ddim}\n")


@pytest.mark.parametrize("command", COMMANDS)
def test_round_trip(command):
    cfg = default_config(command)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)
    assert config_hash(again) == config_hash(cfg)


def test_round_trip_custom():
    text = """
command: toy2d
schedule: {kind: vp-linear-beta, beta_min: 0.2, beta_max: 15.0, t_max: 2.0}
guidance:
  - {kind: c2fg, omega0: 1.7, lambda: 0.15}
  - {kind: ratio_adaptive, omega_max: 5.0}
sampler: {kind: pf_ode, steps: 40, ode_method: midpoint}
n_samples: 100
seeds: [3, 4]
"""
    cfg = parse_config(text)
    assert cfg.guidance[0] == G.C2FG(1.7, 0.15, 2.0)
    assert parse_config(serialize_config(cfg)) == cfg


def test_hash_is_stable_and_ignores_threads():
    cfg = default_config("toy2d")
    h = config_hash(cfg)
    assert len(h) == 16 and int(h, 16) >= 0
    assert config_hash(with_overrides(cfg, threads=8, out="/tmp/elsewhere")) == h
    assert config_hash(with_overrides(cfg, seed=100)) != h
    assert config_to_dict(cfg)["threads"] == 1


def test_seed_override_shifts_list():
    cfg = with_overrides(default_config("toy2d"), seed=7)
    assert cfg.seeds == tuple(range(7, 17))
    with pytest.raises(ConfigError):
        with_overrides(default_config("toy2d"), threads=0)
