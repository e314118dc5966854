"""Time-varying ULA channels, hybrid partial observation and datasets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8


class ConfigError(ValueError):
    """A configuration value violates its documented range."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ChannelScenario:
    N: int = 64
    fc: float = 60e9
    d_over_lambda: float = 0.5
    Np: int = 6
    v: float = 70 / 3.6
    Lc: int = 50
    Ts: float = 0.05e-6
    Tu: int = 50
    Td: int = 50

    def __post_init__(self):
        for key, ok in [
            ("N", self.N >= 1), ("Np", self.Np >= 1), ("Tu", self.Tu >= 2),
            ("Td", self.Td >= 1), ("fc", self.fc > 0), ("Ts", self.Ts > 0),
            ("Lc", self.Lc >= 1), ("d_over_lambda", self.d_over_lambda > 0),
            ("v", self.v >= 0),
        ]:
            if not ok:
                raise ConfigError(f"channel.{key}", f"invalid value {getattr(self, key)!r}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def T(self) -> int:
        return self.Tu + self.Td

    @property
    def block_duration(self) -> float:
        return self.Lc * self.Ts


@dataclass(frozen=True)
class PathParams:
    alpha: complex
    tau: float
    theta: float
    vartheta: float
    nu: float


@dataclass(frozen=True)
class PathDistribution:
    """Ranges for the parametric path sampler (angles in degrees).

    Path ``p`` gets mean power ``exp(-p / power_decay)`` before the profile is
    normalised to unit total, and a Rayleigh-distributed magnitude around it.
    """

    power_decay: float = 2.0
    tau_range: tuple[float, float] = (0.0, 200e-9)
    theta_range_deg: tuple[float, float] = (-60.0, 60.0)
    vartheta_range_deg: tuple[float, float] = (-20.0, 20.0)

    def __post_init__(self):
        if not self.power_decay > 0:
            raise ConfigError("paths.power_decay", "must be positive")
        for name in ("tau_range", "theta_range_deg", "vartheta_range_deg"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"paths.{name}", f"empty range [{lo}, {hi}]")

    def power_profile(self, Np: int) -> np.ndarray:
        w = np.exp(-np.arange(Np) / self.power_decay)
        return w / w.sum()


@dataclass(frozen=True)
class ObservationConfig:
    r: float = 0.5
    snr_db: float | None = 20.0  # None: noise-free
    selection: str = "uniform"
    selection_seed: int = 0

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ConfigError("observation.r", f"must lie in (0, 1], got {self.r!r}")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ConfigError("observation.snr_db", "must be finite or null (noise-free)")
        if self.selection not in ("uniform", "random"):
            raise ConfigError("observation.selection", f"unknown scheme {self.selection!r}")

    def num_observed(self, N: int) -> int:
        M = int(round(self.r * N))
        if M < 1:
            raise ConfigError("observation.r", f"r*N rounds to {M} antennas")
        return M

    @property
    def noise_variance(self) -> float:
        """σ² for unit pilot power; 0 in the noise-free case."""
        if self.snr_db is None:
            return 0.0
        return 1.0 / 10.0 ** (self.snr_db / 10.0)


# ------------------------------------------------------------------ physics

def steering_vector(theta: float, N: int, d_over_lambda: float = 0.5) -> np.ndarray:
    i = np.arange(N)
    return np.exp(1j * 2 * np.pi * d_over_lambda * i * np.sin(theta))


def doppler_shift(v: float, wavelength: float, vartheta: float) -> float:
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return v / wavelength * math.cos(vartheta)


def gen_channel(paths: Sequence[PathParams], scenario: ChannelScenario) -> np.ndarray:
    """Antenna-time channel matrix of shape ``(N, Tu + Td)``."""
    if len(paths) != scenario.Np:
        raise ValueError(f"expected {scenario.Np} paths, got {len(paths)}")
    alpha = np.array([p.alpha for p in paths], dtype=complex)
    nu = np.array([p.nu for p in paths])
    tau = np.array([p.tau for p in paths])
    theta = np.array([p.theta for p in paths])

    n = np.arange(scenario.T)
    steer = np.exp(1j * 2 * np.pi * scenario.d_over_lambda
                   * np.outer(np.arange(scenario.N), np.sin(theta)))          # N x Np
    phase = np.outer(nu, n * scenario.block_duration) - (scenario.fc * tau)[:, None]
    coeff = alpha[:, None] * np.exp(1j * 2 * np.pi * phase)                  # Np x T
    return steer @ coeff


def sample_paths(rng: np.random.Generator, scenario: ChannelScenario,
                 dist: PathDistribution | None = None) -> list[PathParams]:
    dist = dist or PathDistribution()
    Np = scenario.Np
    power = dist.power_profile(Np)
    # Rayleigh magnitude with E|alpha_p|^2 = power_p, uniform phase
    mag = np.sqrt(power * rng.exponential(1.0, Np))
    ph = rng.uniform(0.0, 2 * np.pi, Np)
    tau = rng.uniform(*dist.tau_range, Np)
    theta = np.deg2rad(rng.uniform(*dist.theta_range_deg, Np))
    vartheta = np.deg2rad(rng.uniform(*dist.vartheta_range_deg, Np))
    lam = scenario.wavelength
    return [
        PathParams(alpha=complex(mag[p] * np.exp(1j * ph[p])), tau=float(tau[p]),
                   theta=float(theta[p]), vartheta=float(vartheta[p]),
                   nu=doppler_shift(scenario.v, lam, float(vartheta[p])))
        for p in range(Np)
    ]


def select_antennas(N: int, M: int, scheme: str = "uniform",
                    rng: np.random.Generator | None = None) -> list[int]:
    if not 1 <= M <= N:
        raise ConfigError("observation.r", f"need 1 <= M <= N, got M={M}, N={N}")
    if scheme == "uniform":
        return [(i * N) // M for i in range(M)]
    if scheme == "random":
        rng = rng if rng is not None else np.random.default_rng()
        return sorted(int(i) for i in rng.choice(N, size=M, replace=False))
    raise ConfigError("observation.selection", f"unknown scheme {scheme!r}")


def observe_uplink(H: np.ndarray, antenna_set: Sequence[int], snr_db: float | None,
                   rng: np.random.Generator, Tu: int) -> np.ndarray:
    """LS estimate of the selected rows over the first ``Tu`` blocks.

    The pilot is the constant 1, so ``y / x`` is the channel plus
    circularly-symmetric noise with per-entry variance ``1 / SNR``.
    """
    sub = H[np.asarray(antenna_set), :Tu]
    if snr_db is None:
        return sub.copy()
    sigma2 = 1.0 / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(sub.shape) + 1j * rng.standard_normal(sub.shape)
    return sub + math.sqrt(sigma2 / 2.0) * noise


# ------------------------------------------------------------- conversions

def to_stacked(z: np.ndarray) -> np.ndarray:
    """Complex ``(..., K)`` to real ``(..., 2K)`` as ``[Re; Im]``."""
    return np.concatenate([z.real, z.imag], axis=-1)


def from_stacked(x: np.ndarray) -> np.ndarray:
    K = x.shape[-1] // 2
    return x[..., :K] + 1j * x[..., K:]


# ------------------------------------------------------------------ samples

@dataclass
class ChannelSample:
    H: np.ndarray
    H_obs: np.ndarray
    antenna_set: list[int]
    snr_db: float | None

    @property
    def label(self) -> np.ndarray:
        """Downlink columns of ``H``."""
        return self.H[:, self.H_obs.shape[1]:]


@dataclass
class ChannelDataset:
    """Fixed-shape batch of samples sharing scenario and antenna set.

    ``H`` is ``(K, N, Tu+Td)`` and ``H_obs`` is ``(K, M, Tu)``; both are
    already multiplied by ``scale``.
    """

    scenario: ChannelScenario
    observation: ObservationConfig
    H: np.ndarray
    H_obs: np.ndarray
    antenna_set: list[int]
    scale: float = 1.0
    seed: int = 0
    n_train: int = 0
    path_dist: PathDistribution = field(default_factory=PathDistribution)

    def __len__(self) -> int:
        return self.H.shape[0]

    def __getitem__(self, k: int) -> ChannelSample:
        return ChannelSample(self.H[k], self.H_obs[k], list(self.antenna_set), self.observation.snr_db)

    def __iter__(self) -> Iterator[ChannelSample]:
        return (self[k] for k in range(len(self)))

    @property
    def labels(self) -> np.ndarray:
        return self.H[:, :, self.scenario.Tu:]

    def subset(self, idx) -> "ChannelDataset":
        idx = np.asarray(idx, dtype=int)
        return ChannelDataset(self.scenario, self.observation, self.H[idx], self.H_obs[idx],
                              list(self.antenna_set), self.scale, self.seed, 0, self.path_dist)

    @property
    def train(self) -> "ChannelDataset":
        return self.subset(np.arange(self.n_train))

    @property
    def validation(self) -> "ChannelDataset":
        return self.subset(np.arange(self.n_train, len(self)))

    def denormalize(self, H: np.ndarray) -> np.ndarray:
        return H / self.scale


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, sample) so generation order is irrelevant."""
    return np.random.default_rng([seed, index])


def _split_count(count: int, train_fraction: float) -> int:
    if not 0 < train_fraction <= 1:
        raise ConfigError("dataset.train_fraction", "must lie in (0, 1]")
    return int(round(train_fraction * count))


def _assemble(scenario, observation, H_list, seed, train_fraction, path_dist) -> ChannelDataset:
    count = len(H_list)
    M = observation.num_observed(scenario.N)
    antenna_set = select_antennas(scenario.N, M, observation.selection,
                                  np.random.default_rng(observation.selection_seed))
    H = np.stack(H_list) if count else np.zeros((0, scenario.N, scenario.T), complex)
    H_obs = np.zeros((count, M, scenario.Tu), complex)
    for k in range(count):
        # noise stream follows the path stream of the same sample
        rng = np.random.default_rng([seed, k, 1])
        H_obs[k] = observe_uplink(H[k], antenna_set, observation.snr_db, rng, scenario.Tu)
    n_train = _split_count(count, train_fraction) if count else 0
    ref = H[:n_train] if n_train else H
    power = float(np.mean(np.abs(ref) ** 2)) if ref.size else 1.0
    scale = 1.0 / math.sqrt(power) if power > 0 else 1.0
    return ChannelDataset(scenario, observation, H * scale, H_obs * scale, antenna_set,
                          scale, seed, n_train, path_dist)


def build_dataset(scenario: ChannelScenario, observation: ObservationConfig, count: int,
                  seed: int = 0, train_fraction: float = 0.8,
                  path_dist: PathDistribution | None = None) -> ChannelDataset:
    """Draw ``count`` independent samples, split train/validation, normalise power."""
    if count < 10:
        raise ConfigError("dataset.count", "need at least 10 samples")
    path_dist = path_dist or PathDistribution()
    H_list = [gen_channel(sample_paths(sample_rng(seed, k), scenario, path_dist), scenario)
              for k in range(count)]
    return _assemble(scenario, observation, H_list, seed, train_fraction, path_dist)


# -------------------------------------------------------------- path import

_PATH_KEYS = ("alpha_re", "alpha_im", "tau_s", "theta_rad", "vartheta_rad")


def load_path_file(path: str | Path, scenario: ChannelScenario) -> list[list[PathParams]]:
    """Read externally supplied path parameters.

    The file is a JSON array with one entry per sample; each entry is an array
    of path records ``{alpha_re, alpha_im, tau_s, theta_rad, vartheta_rad}``.
    Doppler shifts are derived from the scenario speed and wavelength.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ConfigError("paths.file", "top level must be an array of samples")
    out = []
    for k, rec_list in enumerate(raw):
        if not isinstance(rec_list, list) or len(rec_list) != scenario.Np:
            raise ConfigError("paths.file", f"sample {k} must list exactly {scenario.Np} paths")
        paths = []
        for rec in rec_list:
            missing = [key for key in _PATH_KEYS if key not in rec]
            if missing:
                raise ConfigError("paths.file", f"sample {k} missing {missing}")
            vt = float(rec["vartheta_rad"])
            paths.append(PathParams(complex(rec["alpha_re"], rec["alpha_im"]), float(rec["tau_s"]),
                                    float(rec["theta_rad"]), vt,
                                    doppler_shift(scenario.v, scenario.wavelength, vt)))
        out.append(paths)
    return out


def dump_path_file(path: str | Path, samples: Sequence[Sequence[PathParams]]) -> None:
    recs = [[{"alpha_re": p.alpha.real, "alpha_im": p.alpha.imag, "tau_s": p.tau,
              "theta_rad": p.theta, "vartheta_rad": p.vartheta} for p in s] for s in samples]
    Path(path).write_text(json.dumps(recs, indent=1))


def dataset_from_paths(scenario: ChannelScenario, observation: ObservationConfig,
                       samples: Sequence[Sequence[PathParams]], seed: int = 0,
                       train_fraction: float = 0.8) -> ChannelDataset:
    H_list = [gen_channel(paths, scenario) for paths in samples]
    return _assemble(scenario, observation, H_list, seed, train_fraction, PathDistribution())


def scenario_dict(s: ChannelScenario) -> dict:
    return asdict(s)
