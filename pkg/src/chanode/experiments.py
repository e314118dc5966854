"""Dataset/model construction from a :class:`RunConfig` and parameter sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelDataset, ConfigError, build_dataset, dataset_from_paths, load_path_file
from .config import RunConfig
from .network import ModelParams
from .training import RunMetrics, evaluate, train

AXES = ("snr", "r", "td", "epoch")
THREADS_ENV = "CHANODE_THREADS"


def make_dataset(cfg: RunConfig) -> ChannelDataset:
    ds = cfg.dataset
    if ds.get("path_file"):
        samples = load_path_file(ds["path_file"], cfg.channel)
        return dataset_from_paths(cfg.channel, cfg.observation, samples, ds["seed"], ds["train_fraction"])
    return build_dataset(cfg.channel, cfg.observation, ds["count"], ds["seed"],
                         ds["train_fraction"], cfg.paths)


def train_from_config(cfg: RunConfig, dataset: ChannelDataset | None = None,
                      callback=None) -> tuple[ModelParams, RunMetrics, ChannelDataset]:
    dataset = dataset if dataset is not None else make_dataset(cfg)
    params, metrics = train(dataset, cfg.net_config(), cfg.train, callback=callback)
    return params, metrics, dataset


def parse_axis_value(axis: str, text) -> float | None:
    if axis not in AXES:
        raise ConfigError("sweep.axis", f"unknown axis {axis!r}; expected one of {AXES}")
    if axis == "snr" and (text is None or str(text).strip().lower() in ("none", "inf", "noise-free", "null")):
        return None
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ConfigError("sweep.values", f"cannot parse {text!r}") from None
    if axis == "snr" and not math.isfinite(value):
        raise ConfigError("sweep.values", "snr must be finite or noise-free")
    if axis == "r" and not 0 < value <= 1:
        raise ConfigError("sweep.values", f"r={value} outside (0, 1]")
    if axis in ("td", "epoch"):
        if value != int(value) or value < 1:
            raise ConfigError("sweep.values", f"{axis}={value} must be an integer >= 1")
        value = int(value)
    return value


def axis_sort_key(value) -> float:
    return math.inf if value is None else float(value)


def format_axis_value(value) -> str:
    return "inf" if value is None else repr(value) if isinstance(value, float) else str(value)


@dataclass
class PointResult:
    axis: str
    value: float | None
    seed: int
    nmse: float
    per_block: list[float] = field(default_factory=list)

    @property
    def nmse_db(self) -> float:
        return 10 * math.log10(self.nmse) if self.nmse > 0 else -math.inf


def seeded(cfg: RunConfig, seed: int) -> RunConfig:
    return cfg.with_overrides({"dataset.seed": seed, "train.seed": seed})


def _run_group(cfg: RunConfig, axis: str, values: list, seed: int) -> list[PointResult]:
    """One training run covering ``values`` (td/epoch) or a single value (snr/r)."""
    cfg = seeded(cfg, seed)
    if axis in ("snr", "r"):
        (value,) = values
        key = "observation.snr_db" if axis == "snr" else "observation.r"
        params, _, ds = train_from_config(cfg.with_overrides({key: value}))
        rep = evaluate(params, ds.validation)
        return [PointResult(axis, value, seed, rep.nmse, rep.per_block.tolist())]
    if axis == "td":
        params, _, ds = train_from_config(cfg.with_overrides({"channel.Td": max(values)}))
        val = ds.validation
        out = []
        for td in values:
            rep = evaluate(params, val, Td=td)
            out.append(PointResult(axis, td, seed, rep.nmse, rep.per_block.tolist()))
        return out
    # epoch
    _, metrics, _ = train_from_config(cfg.with_overrides({"train.epochs": max(values)}))
    return [PointResult(axis, e, seed, metrics.val_nmse[e - 1]) for e in values]


def run_sweep(cfg: RunConfig, axis: str, values, seeds=(0,), workers: int | None = None) -> list[PointResult]:
    """Evaluate validation NMSE along ``axis``; rows sorted by (value, seed)."""
    vals = [parse_axis_value(axis, v) for v in values]
    if not vals:
        raise ConfigError("sweep.values", "need at least one value")
    vals = sorted(set(vals), key=axis_sort_key)
    groups = [(cfg, axis, [v], s) for v in vals for s in seeds] if axis in ("snr", "r") \
        else [(cfg, axis, vals, s) for s in seeds]
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_group_star, groups))
    else:
        chunks = [_run_group(*g) for g in groups]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (axis_sort_key(r.value), r.seed))
    return rows


def _run_group_star(args):
    return _run_group(*args)


def median_by_value(rows: list[PointResult]) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(r.value, []).append(r.nmse_db)
    return {k: float(np.median(v)) for k, v in out.items()}
