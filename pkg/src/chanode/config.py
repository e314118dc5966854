"""Layered JSON configuration: profile defaults, then file, then ``key=value`` overrides."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .channel import ChannelScenario, ConfigError, ObservationConfig, PathDistribution
from .network import NetConfig
from .training import TrainConfig

FULL_PROFILE: dict[str, dict[str, Any]] = {
    "channel": dataclasses.asdict(ChannelScenario()),
    "paths": {k: list(v) if isinstance(v, tuple) else v
              for k, v in dataclasses.asdict(PathDistribution()).items()},
    "observation": dataclasses.asdict(ObservationConfig()),
    "dataset": {"count": 19910, "seed": 0, "train_fraction": 0.8, "path_file": None},
    "net": {"L": 48, "hidden": 40, "method": "rk4", "substeps": 4, "skip_first_obs": False},
    "train": dataclasses.asdict(TrainConfig()),
}

DESK_PROFILE = copy.deepcopy(FULL_PROFILE)
DESK_PROFILE["channel"].update(N=16, Tu=16, Td=16)
DESK_PROFILE["dataset"]["count"] = 2000
DESK_PROFILE["train"]["epochs"] = 200

PROFILES = {"full": FULL_PROFILE, "desk": DESK_PROFILE}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved and validated configuration."""

    profile: str
    channel: ChannelScenario
    paths: PathDistribution
    observation: ObservationConfig
    dataset: dict
    net: dict
    train: TrainConfig

    @property
    def M(self) -> int:
        return self.observation.num_observed(self.channel.N)

    def net_config(self) -> NetConfig:
        c = self.channel
        return NetConfig(N=c.N, M=self.M, Tu=c.Tu, Td=c.Td, **self.net)

    def to_dict(self) -> dict:
        paths = {k: list(v) if isinstance(v, tuple) else v
                 for k, v in dataclasses.asdict(self.paths).items()}
        return {
            "profile": self.profile,
            "channel": dataclasses.asdict(self.channel),
            "paths": paths,
            "observation": dataclasses.asdict(self.observation),
            "dataset": dict(self.dataset),
            "net": dict(self.net),
            "train": dataclasses.asdict(self.train),
        }

    def with_overrides(self, overrides: Iterable[str] | dict) -> "RunConfig":
        return resolve(self.to_dict(), overrides)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "override must look like section.key=value")
        out[key.strip()] = parse_value(value.strip())
    return out


def _merge(base: dict, layer: dict, prefix: str = "") -> None:
    for key, value in layer.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(name, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(name, "expected an object")
            _merge(base[key], value, name + ".")
        else:
            base[key] = value


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError(dotted, "unknown key")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(dotted, "unknown key")
    node[parts[-1]] = value


def _build(section: str, cls, values: dict):
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        msg = str(e)
        key = msg.split(" ")[0] if msg.startswith(section + ".") else section
        raise ConfigError(key, msg) from None


def resolve(raw: dict | None = None, overrides: Iterable[str] | dict | None = None) -> RunConfig:
    raw = copy.deepcopy(raw or {})
    profile = raw.pop("profile", "full")
    if profile not in PROFILES:
        raise ConfigError("profile", f"unknown profile {profile!r}")
    tree = copy.deepcopy(PROFILES[profile])
    _merge(tree, raw)
    if overrides:
        items = overrides.items() if isinstance(overrides, dict) else parse_overrides(overrides).items()
        for key, value in items:
            if key == "profile":
                raise ConfigError(key, "set the profile in the config file")
            _set_dotted(tree, key, value)

    paths = {k: tuple(v) if isinstance(v, list) else v for k, v in tree["paths"].items()}
    channel = _build("channel", ChannelScenario, tree["channel"])
    cfg = RunConfig(
        profile=profile,
        channel=channel,
        paths=_build("paths", PathDistribution, paths),
        observation=_build("observation", ObservationConfig, tree["observation"]),
        dataset=tree["dataset"],
        net=tree["net"],
        train=_build("train", TrainConfig, tree["train"]),
    )
    ds = cfg.dataset
    if not isinstance(ds["count"], int) or ds["count"] < 10:
        raise ConfigError("dataset.count", "need an integer >= 10")
    if not 0 < ds["train_fraction"] <= 1:
        raise ConfigError("dataset.train_fraction", "must lie in (0, 1]")
    cfg.M  # r*N >= 1
    try:
        cfg.net_config()
    except (TypeError, ValueError) as e:
        raise ConfigError("net", str(e)) from None
    return cfg


def load_config(path: str | Path | None = None, overrides: Iterable[str] | dict | None = None) -> RunConfig:
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        if text.strip():
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(str(path), f"not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "top level must be an object")
    return resolve(raw, overrides)
