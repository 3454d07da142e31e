import dataclasses

import pytest

from vislander.config import (ConfigError, RunConfig, config_hash, defaults_reference, dumps, load, loads,
                              to_dict)


def test_round_trip_byte_equal(tmp_path):
    cfg = loads("", ["ppo.gamma=0.9", "seed=7", "eval.freqs=[0.1, 0.3]"])
    text = dumps(cfg)
    (tmp_path / "c.toml").write_text(text)
    again = load(tmp_path / "c.toml")
    assert dumps(again) == text
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_defaults_cover_every_field():
    import tomli
    data = tomli.loads(defaults_reference())

    def walk(obj, node, prefix=""):
        for f in dataclasses.fields(obj):
            assert f.name in node, prefix + f.name
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, node[f.name], prefix + f.name + ".")
    walk(RunConfig(), data)


def test_unknown_key_reports_line():
    text = "seed = 1\n\n[ppo]\ngamma = 0.9\ngama = 0.8\n"
    with pytest.raises(ConfigError) as exc:
        loads(text, source="run.toml")
    assert "run.toml:5" in str(exc.value)
    assert "ppo.gama" in str(exc.value)


def test_type_errors():
    with pytest.raises(ConfigError, match="ppo.num_envs"):
        loads("[ppo]\nnum_envs = 'many'\n")
    with pytest.raises(ConfigError, match="expected a section"):
        loads("ppo = 3\n")
    with pytest.raises(ConfigError):
        loads("seed = \n")


def test_overrides_take_precedence():
    cfg = loads("[ppo]\ngamma = 0.9\n", ["ppo.gamma=0.5", "curriculum.freeze=true", "output_dir=out"])
    assert cfg.ppo.gamma == 0.5 and cfg.curriculum.freeze and cfg.output_dir == "out"
    with pytest.raises(ConfigError, match="unknown key ppo.gama"):
        loads("", ["ppo.gama=3"])
    with pytest.raises(ConfigError, match="section.key=value"):
        loads("", ["ppo.gamma"])


def test_defaults_match_reference_settings():
    cfg = RunConfig()
    r = cfg.reward
    lams = [getattr(r, f"lambda{i}") for i in range(1, 17)]
    assert lams == [1, 0.05, 5, 0.02, 10, -0.1, 0.02, 5, 0.1, 10, 0.1, 0.2, 0.5, 10, 0.02, 1]
    assert cfg.ppo.num_envs * cfg.ppo.rollout_steps == 16_384
    assert to_dict(cfg)["encoder"]["embed_dim"] == 128
