"""Latent-ODE channel extrapolation network.

An ODE-RNN encoder (hidden state evolved by a small MLP vector field between
observations, updated by a GRU at each observation) produces the posterior
of the initial latent state.  A second vector field integrates the latent
state across the downlink blocks and a linear readout maps each latent
state to a stacked ``[Re; Im]`` antenna vector.

All batched tensors put the batch on axis 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .channel import from_stacked, to_stacked
from .odeint import TimeGrid, ode_solve, solve_between

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class NetConfig:
    N: int
    M: int
    Tu: int
    Td: int
    L: int = 48
    hidden: int = 40
    method: str = "rk4"
    substeps: int = 4
    skip_first_obs: bool = False

    def __post_init__(self):
        for key in ("N", "M", "Tu", "Td", "L", "hidden", "substeps"):
            if getattr(self, key) < 1:
                raise ValueError(f"net.{key} must be >= 1")
        if self.M > self.N:
            raise ValueError("net.M must not exceed net.N")
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"net.method: unknown solver {self.method!r}")
        if self.skip_first_obs and self.Tu < 2:
            raise ValueError("net.skip_first_obs needs Tu >= 2")

    @property
    def in_dim(self) -> int:
        return 2 * self.M

    @property
    def out_dim(self) -> int:
        return 2 * self.N

    @property
    def T(self) -> int:
        return self.Tu + self.Td

    def layer_specs(self) -> dict[str, list[tuple[int, int, str | None]]]:
        """(fan_in, fan_out, activation) per layer, in checkpoint order.

        The dynamics nets end in ``L`` outputs and the gate nets in ``L`` so
        that state and gate sizes agree with the hidden/latent dimension.
        """
        L, W, x = self.L, self.hidden, self.in_dim
        dyn = [(L, W, "tanh"), (W, W, "tanh"), (W, W, "tanh"), (W, W, "tanh"), (W, L, None)]
        return {
            "theta1": dyn,
            "psi.update": [(L + x, W, "tanh"), (W, L, "sigmoid")],
            "psi.reset": [(L + x, W, "tanh"), (W, L, "sigmoid")],
            "psi.candidate": [(L + x, W, "tanh"), (W, L, None)],
            "phi1": [(L, W, "tanh"), (W, 2 * L, None)],
            "theta2": list(dyn),
            "phi2": [(L, self.out_dim, None)],
        }


@dataclass
class Layer:
    W: Tensor
    b: Tensor
    activation: str | None = None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.dense(x, self.W, self.b, self.activation)


def fnn_forward(layers: Sequence[Layer], x: Tensor) -> Tensor:
    for layer in layers:
        x = layer(x)
    return x


@dataclass
class ModelParams:
    """All learnable layers, grouped by sub-network.

    Keys of ``nets`` follow :meth:`NetConfig.layer_specs`; the GRU parameters
    live under the three ``psi.*`` keys.
    """

    config: NetConfig
    nets: dict[str, list[Layer]] = field(default_factory=dict)

    GROUPS = ("theta1", "theta2", "phi1", "phi2", "psi")

    def group(self, name: str) -> list[Tensor]:
        keys = [k for k in self.nets if k == name or k.startswith(name + ".")]
        if not keys:
            raise KeyError(name)
        return [t for k in keys for layer in self.nets[k] for t in (layer.W, layer.b)]

    def tensors(self) -> list[Tensor]:
        return [t for layers in self.nets.values() for layer in layers for t in (layer.W, layer.b)]

    def named_layers(self) -> Iterator[tuple[str, Layer]]:
        for key, layers in self.nets.items():
            for i, layer in enumerate(layers):
                yield f"{key}.{i}", layer

    def copy(self) -> "ModelParams":
        nets = {k: [Layer(Tensor(l.W.data.copy(), True), Tensor(l.b.data.copy(), True), l.activation)
                    for l in v] for k, v in self.nets.items()}
        return ModelParams(self.config, nets)

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors())


def init_params(config: NetConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    nets = {}
    for key, spec in config.layer_specs().items():
        layers = []
        for fan_in, fan_out, act in spec:
            a = np.sqrt(6.0 / (fan_in + fan_out))
            W = Tensor(rng.uniform(-a, a, size=(fan_in, fan_out)), requires_grad=True)
            b = Tensor(np.zeros(fan_out), requires_grad=True)
            layers.append(Layer(W, b, act))
        nets[key] = layers
    return ModelParams(config, nets)


# --------------------------------------------------------------------- GRU

@dataclass
class GruStep:
    u: Tensor
    r: Tensor
    m_tilde: Tensor
    m: Tensor


def gru_step(params: ModelParams, m_bar: Tensor, obs: Tensor) -> GruStep:
    joined = ad.concat_rows(m_bar, obs)
    u = fnn_forward(params.nets["psi.update"], joined)
    r = fnn_forward(params.nets["psi.reset"], joined)
    m_tilde = fnn_forward(params.nets["psi.candidate"], ad.concat_rows(ad.mul(m_bar, r), obs))
    # (1 - u) * m_tilde + u * m_bar
    m = ad.add(m_tilde, ad.mul(u, ad.sub(m_bar, m_tilde)))
    return GruStep(u, r, m_tilde, m)


def gru_update(params: ModelParams, m_bar: Tensor, obs: Tensor) -> Tensor:
    return gru_step(params, m_bar, obs).m


# ------------------------------------------------------------ encoder side

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def encode(obs_seq: np.ndarray, params: ModelParams) -> Tensor:
    """Final hidden state from a ``(B, Tu, 2M)`` (or ``(Tu, 2M)``) observation sequence."""
    cfg = params.config
    obs_seq = np.asarray(obs_seq, dtype=float)
    if obs_seq.shape[-2:] != (cfg.Tu, cfg.in_dim):
        raise ad.ShapeError(f"encode: expected (..., {cfg.Tu}, {cfg.in_dim}), got {obs_seq.shape}")
    batch_shape = obs_seq.shape[:-2]
    f = lambda m: fnn_forward(params.nets["theta1"], m)
    first = 1 if cfg.skip_first_obs else 0
    m = Tensor(np.zeros(batch_shape + (cfg.L,)))
    for n in range(first, cfg.Tu):
        if n > first:
            m = solve_between(f, m, (n - 1) / cfg.T, n / cfg.T, cfg.substeps, cfg.method)
        m = gru_update(params, m, Tensor(obs_seq[..., n, :]))
    return m


@dataclass
class PosteriorStats:
    mu: Tensor
    sigma: Tensor


def posterior(m_final: Tensor, params: ModelParams) -> PosteriorStats:
    L = params.config.L
    raw = fnn_forward(params.nets["phi1"], m_final)
    mu = ad.take(raw, 0, L)
    sigma = ad.add(ad.softplus(ad.take(raw, L, 2 * L)), SIGMA_FLOOR)
    return PosteriorStats(mu, sigma)


def reparameterize(stats: PosteriorStats, epsilon, training: bool = True) -> Tensor:
    if not training or epsilon is None:
        return stats.mu
    return ad.add(stats.mu, ad.mul(stats.sigma, _as_tensor(epsilon)))


# ------------------------------------------------------------ decoder side

def downlink_grid(cfg: NetConfig, Td: int | None = None) -> TimeGrid:
    Td = cfg.Td if Td is None else Td
    return TimeGrid.blocks(cfg.Tu, cfg.Tu + Td, cfg.T, cfg.substeps)


def extrapolate_latent(z0: Tensor, params: ModelParams, Td: int | None = None) -> list[Tensor]:
    """Latent trajectory at the downlink block times, ``z0`` anchored at the first."""
    cfg = params.config
    f = lambda z: fnn_forward(params.nets["theta2"], z)
    return ode_solve(f, z0, downlink_grid(cfg, Td), cfg.method)


def decode_channels(z_seq: Sequence[Tensor], params: ModelParams) -> Tensor:
    """Stacked channel per latent state, ``(B, Td, 2N)``."""
    outs = [fnn_forward(params.nets["phi2"], z) for z in z_seq]
    return ad.stack(outs, axis=-2)


# ----------------------------------------------------------------- forward

def forward_stacked(obs_seq: np.ndarray, params: ModelParams, training: bool = False,
                    rng: np.random.Generator | None = None, Td: int | None = None,
                    return_stats: bool = False):
    """Observation sequence ``(B, Tu, 2M)`` to predicted ``(B, Td, 2N)`` tensor."""
    m = encode(obs_seq, params)
    stats = posterior(m, params)
    eps = None
    if training:
        rng = rng if rng is not None else np.random.default_rng()
        eps = rng.standard_normal(stats.mu.shape)
    z0 = reparameterize(stats, eps, training)
    out = decode_channels(extrapolate_latent(z0, params, Td), params)
    return (out, stats) if return_stats else out


def observations_to_sequence(H_obs: np.ndarray) -> np.ndarray:
    """Complex ``(..., M, Tu)`` uplink matrix to real ``(..., Tu, 2M)``."""
    return to_stacked(np.swapaxes(H_obs, -1, -2))


def labels_to_sequence(H_dl: np.ndarray) -> np.ndarray:
    """Complex ``(..., N, Td)`` downlink matrix to real ``(..., Td, 2N)``."""
    return to_stacked(np.swapaxes(H_dl, -1, -2))


def sequence_to_channels(Y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`labels_to_sequence`."""
    return np.swapaxes(from_stacked(Y), -1, -2)


def forward(H_obs: np.ndarray, params: ModelParams, mode: str = "infer",
            rng: np.random.Generator | None = None, Td: int | None = None) -> np.ndarray:
    """Complex uplink observation(s) ``(..., M, Tu)`` to downlink ``(..., N, Td)``."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    with ad.no_grad():
        out = forward_stacked(observations_to_sequence(H_obs), params, mode == "train", rng, Td)
    return sequence_to_channels(out.data)
