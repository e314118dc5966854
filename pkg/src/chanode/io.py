"""Binary containers for datasets (``LODC``) and checkpoints (``LODM``).

Both files share one layout::

    magic       4 bytes   b"LODC" or b"LODM"
    version     u32 LE    1
    header_len  u32 LE    byte length of the JSON header
    header      UTF-8 JSON
    payload     little-endian reals

Dataset payload: for each sample, ``H`` (N x (Tu+Td)) then ``H_obs``
(M x Tu), each row-major (antenna-major, block-minor) with interleaved
``re, im`` float32 pairs.

Checkpoint payload: every layer in the order theta1, psi.update, psi.reset,
psi.candidate, phi1, theta2, phi2; per layer the weight matrix
(fan_in x fan_out, row-major) then the bias, as float64.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tensor
from .channel import ChannelDataset, ChannelScenario, ObservationConfig, PathDistribution
from .network import Layer, ModelParams, NetConfig

VERSION = 1
DATASET_MAGIC = b"LODC"
MODEL_MAGIC = b"LODM"
_PREFIX = struct.Struct("<4sII")


class FormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        where = f" (byte offset {offset})" if offset is not None else ""
        super().__init__(message + where)
        self.offset = offset


def _write(path, magic: bytes, header: dict, payload: bytes) -> None:
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, VERSION, len(head)))
        fh.write(head)
        fh.write(payload)


def _read(path, magic: bytes) -> tuple[dict, bytes, int]:
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise FormatError("file shorter than the fixed prefix", len(blob))
    got, version, head_len = _PREFIX.unpack_from(blob)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    start = _PREFIX.size
    if len(blob) < start + head_len:
        raise FormatError("truncated header", len(blob))
    try:
        header = json.loads(blob[start:start + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable header: {e}", start) from None
    return header, blob, start + head_len


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape + (2,), dtype="<f4")
    out[..., 0] = z.real
    out[..., 1] = z.imag
    return out


# ---------------------------------------------------------------- datasets

def write_dataset(path, dataset: ChannelDataset) -> None:
    s = dataset.scenario
    K = len(dataset)
    M = len(dataset.antenna_set)
    header = {
        "format": "chanode-dataset",
        "code_version": __version__,
        "scenario": dataclasses.asdict(s),
        "observation": dataclasses.asdict(dataset.observation),
        "path_distribution": dataclasses.asdict(dataset.path_dist),
        "antenna_set": list(map(int, dataset.antenna_set)),
        "scale": dataset.scale,
        "seed": dataset.seed,
        "sample_count": K,
        "n_train": dataset.n_train,
        "shapes": {"H": [s.N, s.T], "H_obs": [M, s.Tu]},
    }
    chunks = []
    for k in range(K):
        chunks.append(_interleave(dataset.H[k]).tobytes())
        chunks.append(_interleave(dataset.H_obs[k]).tobytes())
    _write(path, DATASET_MAGIC, header, b"".join(chunks))


def read_dataset(path) -> ChannelDataset:
    header, blob, offset = _read(path, DATASET_MAGIC)
    try:
        scenario = ChannelScenario(**header["scenario"])
        obs = ObservationConfig(**header["observation"])
        dist_raw = header.get("path_distribution", {})
        dist = PathDistribution(**{k: tuple(v) if isinstance(v, list) else v for k, v in dist_raw.items()})
        K = int(header["sample_count"])
        (N, T), (M, Tu) = header["shapes"]["H"], header["shapes"]["H_obs"]
        antenna_set = [int(i) for i in header["antenna_set"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid dataset header: {e}", _PREFIX.size) from None
    if (N, T, Tu) != (scenario.N, scenario.T, scenario.Tu) or M != len(antenna_set):
        raise FormatError("header shapes disagree with scenario", _PREFIX.size)
    per_sample = (N * T + M * Tu) * 8
    need = offset + K * per_sample
    if len(blob) < need:
        sample = (len(blob) - offset) // per_sample if per_sample else 0
        raise FormatError(f"truncated payload in sample {sample} of {K}", len(blob))
    if len(blob) > need:
        raise FormatError("trailing bytes after payload", need)
    raw = np.frombuffer(blob, dtype="<f4", count=K * per_sample // 4, offset=offset)
    raw = raw.reshape(K, per_sample // 4).astype(np.float64)
    h_part = raw[:, :2 * N * T].reshape(K, N, T, 2)
    o_part = raw[:, 2 * N * T:].reshape(K, M, Tu, 2)
    H = h_part[..., 0] + 1j * h_part[..., 1]
    H_obs = o_part[..., 0] + 1j * o_part[..., 1]
    return ChannelDataset(scenario, obs, H, H_obs, antenna_set, float(header["scale"]),
                          int(header["seed"]), int(header.get("n_train", 0)), dist)


# ------------------------------------------------------------- checkpoints

def write_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    layers = []
    chunks = []
    for name, layer in params.named_layers():
        layers.append({"name": name, "W": list(layer.W.shape), "b": list(layer.b.shape),
                       "activation": layer.activation})
        chunks.append(np.ascontiguousarray(layer.W.data, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(layer.b.data, dtype="<f8").tobytes())
    header = {"format": "chanode-model", "code_version": __version__,
              "net_config": dataclasses.asdict(params.config), "layers": layers}
    if extra:
        header.update(extra)
    _write(path, MODEL_MAGIC, header, b"".join(chunks))


def read_checkpoint(path, expected: NetConfig | None = None) -> tuple[ModelParams, dict]:
    """Load parameters; ``expected`` rejects checkpoints of another shape."""
    header, blob, offset = _read(path, MODEL_MAGIC)
    try:
        config = NetConfig(**header["net_config"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid net_config: {e}", _PREFIX.size) from None
    target = expected or config
    specs = target.layer_specs()
    stored = {entry["name"]: entry for entry in header.get("layers", [])}
    nets: dict[str, list[Layer]] = {}
    pos = offset
    for key, spec in specs.items():
        layers = []
        for i, (fan_in, fan_out, act) in enumerate(spec):
            name = f"{key}.{i}"
            entry = stored.get(name)
            if entry is None:
                raise FormatError(f"layer {name} missing from checkpoint")
            if tuple(entry["W"]) != (fan_in, fan_out) or tuple(entry["b"]) != (fan_out,):
                raise FormatError(f"layer {name}: stored shape {entry['W']} does not match "
                                  f"expected {[fan_in, fan_out]}")
            n = fan_in * fan_out + fan_out
            if len(blob) < pos + 8 * n:
                raise FormatError(f"truncated payload in layer {name}", len(blob))
            vals = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
            layers.append(Layer(Tensor(vals[:fan_in * fan_out].reshape(fan_in, fan_out).copy(), True),
                                Tensor(vals[fan_in * fan_out:].copy(), True), act))
        nets[key] = layers
    if pos != len(blob):
        raise FormatError("trailing bytes after payload", pos)
    if expected is not None and expected != config:
        diffs = [k for k in dataclasses.asdict(config) if getattr(config, k) != getattr(expected, k)]
        # shapes matched, so only solver settings can differ here
        if any(k in ("N", "M", "Tu", "Td", "L", "hidden") for k in diffs):
            raise FormatError(f"checkpoint config differs in {diffs}")
    return ModelParams(target, nets), header
