import json

import pytest

from chanode.channel import ConfigError
from chanode.config import load_config, parse_overrides, resolve


def test_empty_file_gives_table_defaults(tmp_path):
    (tmp_path / "c.json").write_text("")
    cfg = load_config(tmp_path / "c.json")
    c = cfg.channel
    assert (c.N, c.fc, c.d_over_lambda, c.Np, c.Lc, c.Ts) == (64, 60e9, 0.5, 6, 50, 0.05e-6)
    assert c.v == pytest.approx(70 / 3.6)
    assert cfg.net["L"] == 48 and cfg.train.batch_size == 80 and cfg.train.epochs == 1000
    assert cfg.train.lr0 == 0.004 and cfg.train.halve_every == 50
    assert cfg.dataset["count"] == 19910 and cfg.dataset["train_fraction"] == 0.8


def test_override_ratio():
    assert load_config(None, ["observation.r=0.5"]).M == 32


def test_invalid_antenna_count():
    with pytest.raises(ConfigError, match="channel.N"):
        load_config(None, ["channel.N=0"])


def test_unknown_keys(tmp_path):
    with pytest.raises(ConfigError, match="channel.Q"):
        load_config(None, ["channel.Q=3"])
    (tmp_path / "c.json").write_text(json.dumps({"train": {"lr": 1}}))
    with pytest.raises(ConfigError, match="train.lr"):
        load_config(tmp_path / "c.json")


def test_layering(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"profile": "desk", "observation": {"r": 0.25}}))
    cfg = load_config(tmp_path / "c.json", ["observation.r=0.125", "observation.snr_db=null"])
    assert cfg.channel.N == 16 and cfg.channel.Tu == 16 and cfg.dataset["count"] == 2000
    assert cfg.train.epochs == 200
    assert cfg.observation.r == 0.125 and cfg.observation.snr_db is None and cfg.M == 2


def test_echo_roundtrip(tmp_path):
    cfg = load_config(None, ["observation.r=0.25", "net.method=euler", "paths.theta_range_deg=[-30,30]"])
    cfg.dump(tmp_path / "echo.json")
    again = load_config(tmp_path / "echo.json")
    assert again == cfg
    again.dump(tmp_path / "echo2.json")
    assert (tmp_path / "echo.json").read_text() == (tmp_path / "echo2.json").read_text()


@pytest.mark.parametrize("override,key", [
    ("observation.r=0", "observation.r"),
    ("observation.snr_db=\"x\"", "observation"),
    ("train.batch_size=0", "train"),
    ("net.method=\"midpoint\"", "net"),
    ("dataset.count=3", "dataset.count"),
])
def test_rejections_name_the_key(override, key):
    with pytest.raises(ConfigError, match=key):
        load_config(None, [override])


def test_override_syntax():
    assert parse_overrides(["a.b=1", "c.d=null", "e.f=text"]) == {"a.b": 1, "c.d": None, "e.f": "text"}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])


def test_unknown_profile():
    with pytest.raises(ConfigError, match="profile"):
        resolve({"profile": "huge"})
