"""Loss, NMSE, AdaMax and the mini-batch training loop."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .channel import ChannelDataset
from .network import (ModelParams, NetConfig, forward_stacked, init_params,
                      labels_to_sequence, observations_to_sequence, sequence_to_channels)

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 80
    epochs: int = 1000
    lr0: float = 0.004
    halve_every: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    kl_weight: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("train.batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("train.epochs must be >= 0")
        if not self.lr0 > 0:
            raise ValueError("train.lr0 must be positive")
        if self.halve_every < 1:
            raise ValueError("train.halve_every must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("train.beta1/beta2 must lie in [0, 1)")
        if self.kl_weight < 0:
            raise ValueError("train.kl_weight must be >= 0")


@dataclass
class RunMetrics:
    train_loss: list[float] = field(default_factory=list)
    val_nmse: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    @property
    def val_nmse_db(self) -> list[float]:
        return [to_db(x) for x in self.val_nmse]

    def __len__(self) -> int:
        return len(self.train_loss)


# ----------------------------------------------------------------- metrics

def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else float("-inf")


def mse_loss(pred, label) -> Tensor | float:
    """Mean squared error per real entry pair; complex arrays or stacked tensors.

    Complex input ``(B, N, Td)`` returns a float.  Stacked tensors
    ``(B, Td, 2N)`` return a scalar :class:`Tensor`; the stacked sum of squares
    equals the complex Frobenius norm so the normaliser is ``B * N * Td``.
    """
    if isinstance(pred, Tensor) or isinstance(label, Tensor):
        pred, label = ad._lift(pred), ad._lift(label)
        if pred.shape != label.shape:
            raise ad.ShapeError(f"mse_loss: {pred.shape} vs {label.shape}")
        n_complex = pred.data.size // 2
        return ad.scale(ad.sum_all(ad.square(ad.sub(pred, label))), 1.0 / n_complex)
    pred, label = np.asarray(pred), np.asarray(label)
    if pred.shape != label.shape:
        raise ad.ShapeError(f"mse_loss: {pred.shape} vs {label.shape}")
    return float(np.sum(np.abs(label - pred) ** 2) / label.size)


def per_sample_nmse(pred: np.ndarray, label: np.ndarray) -> np.ndarray:
    """‖H − Ĥ‖²/‖H‖² per sample for ``(B, N, Td)`` arrays; NaN where ‖H‖ = 0."""
    pred, label = np.asarray(pred), np.asarray(label)
    if pred.shape != label.shape:
        raise ad.ShapeError(f"nmse: {pred.shape} vs {label.shape}")
    axes = tuple(range(1, label.ndim))
    num = np.sum(np.abs(label - pred) ** 2, axis=axes)
    den = np.sum(np.abs(label) ** 2, axis=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def nmse(pred: np.ndarray, label: np.ndarray) -> float:
    """Mean over samples of the normalised squared error (linear scale)."""
    ratios = per_sample_nmse(pred, label)
    bad = int(np.isnan(ratios).sum())
    if bad:
        warnings.warn(f"{bad} zero-norm label sample(s) excluded from NMSE", RuntimeWarning)
    if bad == ratios.size:
        raise ValueError("nmse: every label sample has zero norm")
    return float(np.nanmean(ratios))


def nmse_db(pred, label) -> float:
    return to_db(nmse(pred, label))


def kl_standard_normal(mu: Tensor, sigma: Tensor) -> Tensor:
    """Mean over the batch of KL(N(mu, sigma²) || N(0, I))."""
    terms = ad.sub(ad.add(ad.square(mu), ad.square(sigma)), ad.scale(ad.log(sigma), 2.0))
    batch = mu.shape[0] if mu.ndim > 1 else 1
    return ad.scale(ad.sub(ad.sum_all(terms), float(mu.data.size)), 0.5 / batch)


# --------------------------------------------------------------- optimiser

def lr_at_epoch(epoch: int, config: TrainConfig | None = None) -> float:
    config = config or TrainConfig()
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 * 0.5 ** (epoch // config.halve_every)


class AdaMax:
    """Adam with an infinity-norm second moment."""

    eps = 1e-12

    def __init__(self, params: list[Tensor], beta1: float = 0.9, beta2: float = 0.999):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.u = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float, grads: list[np.ndarray | None] | None = None) -> None:
        if grads is None:
            grads = [p.grad for p in self.params]
        self.t += 1
        corr = lr / (1.0 - self.beta1 ** self.t)
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.u[i] = np.maximum(self.beta2 * self.u[i], np.abs(g))
            # in place: the tensors are shared with the model
            p.data -= corr * self.m[i] / (self.u[i] + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adamax_step(optimizer: AdaMax, grads: list[np.ndarray], lr: float) -> None:
    optimizer.step(lr, grads)


# ------------------------------------------------------------------- loops

def _batched_forward(params: ModelParams, X: np.ndarray, batch: int = 256,
                     Td: int | None = None) -> np.ndarray:
    outs = []
    with ad.no_grad():
        for i in range(0, X.shape[0], batch):
            outs.append(forward_stacked(X[i:i + batch], params, training=False, Td=Td).data)
    if not outs:
        Td = params.config.Td if Td is None else Td
        return np.zeros((0, Td, params.config.out_dim))
    return np.concatenate(outs)


def predict(params: ModelParams, H_obs: np.ndarray, Td: int | None = None) -> np.ndarray:
    """Inference-mode complex prediction ``(K, N, Td)`` for uplink ``(K, M, Tu)``."""
    return sequence_to_channels(_batched_forward(params, observations_to_sequence(H_obs), Td=Td))


def fit_arrays(X: np.ndarray, Y: np.ndarray, net_config: NetConfig, train_config: TrainConfig,
               X_val: np.ndarray | None = None, Y_val: np.ndarray | None = None,
               params: ModelParams | None = None, callback=None) -> tuple[ModelParams, RunMetrics]:
    """Train on stacked sequences ``X (K, Tu, 2M)`` and ``Y (K, Td, 2N)``.

    Validation NMSE (``Y_val`` given) is recorded after every epoch.
    """
    cfg = train_config
    params = params if params is not None else init_params(net_config, cfg.seed)
    metrics = RunMetrics()
    if cfg.epochs == 0:
        return params, metrics
    K = X.shape[0]
    B = min(cfg.batch_size, K)
    n_batches = K // B
    if n_batches == 0:
        raise ValueError("training set is empty")
    opt = AdaMax(params.tensors(), cfg.beta1, cfg.beta2)
    # separate streams: batch order and reparameterisation noise
    order_rng = np.random.default_rng([cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])
    val_labels = sequence_to_channels(Y_val) if Y_val is not None else None

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_at_epoch(epoch, cfg)
        perm = order_rng.permutation(K)
        total = 0.0
        for b in range(n_batches):
            idx = perm[b * B:(b + 1) * B]
            try:
                pred, stats = forward_stacked(X[idx], params, training=True, rng=noise_rng,
                                              return_stats=True)
                loss = mse_loss(pred, Tensor(Y[idx]))
                if cfg.kl_weight > 0:
                    loss = ad.add(loss, ad.scale(kl_standard_normal(stats.mu, stats.sigma), cfg.kl_weight))
            except FloatingPointError as e:
                raise TrainingError(f"non-finite forward pass at epoch {epoch}, batch {b}: {e}") from e
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.zero_grad()
            ad.backward(loss)
            opt.step(lr)
            total += value
        metrics.train_loss.append(total / n_batches)
        metrics.lr.append(lr)
        if X_val is not None and Y_val is not None and len(X_val):
            pred_val = sequence_to_channels(_batched_forward(params, X_val))
            metrics.val_nmse.append(nmse(pred_val, val_labels))
        metrics.seconds.append(time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, metrics)
        log.debug("epoch %d lr %.2e loss %.4e val %s", epoch, lr, metrics.train_loss[-1],
                  f"{metrics.val_nmse_db[-1]:.2f} dB" if metrics.val_nmse else "-")
    return params, metrics


def dataset_arrays(dataset: ChannelDataset) -> tuple[np.ndarray, np.ndarray]:
    return observations_to_sequence(dataset.H_obs), labels_to_sequence(dataset.labels)


def net_config_for(dataset: ChannelDataset, **overrides) -> NetConfig:
    s = dataset.scenario
    return NetConfig(N=s.N, M=len(dataset.antenna_set), Tu=s.Tu, Td=s.Td, **overrides)


def train(dataset: ChannelDataset, net_config: NetConfig, train_config: TrainConfig,
          callback=None) -> tuple[ModelParams, RunMetrics]:
    if dataset.n_train < 1:
        raise ValueError("dataset has no training split")
    X, Y = dataset_arrays(dataset.train)
    Xv, Yv = dataset_arrays(dataset.validation)
    return fit_arrays(X, Y, net_config, train_config, Xv, Yv, callback=callback)


@dataclass
class NMSEReport:
    nmse: float
    per_block: np.ndarray
    count: int

    @property
    def nmse_db(self) -> float:
        return to_db(self.nmse)

    @property
    def per_block_db(self) -> list[float]:
        return [to_db(x) for x in self.per_block]


def evaluate(params: ModelParams, dataset: ChannelDataset, Td: int | None = None) -> NMSEReport:
    """Inference-mode NMSE overall and per downlink block."""
    Td = params.config.Td if Td is None else Td
    pred = predict(params, dataset.H_obs, Td=Td)
    label = dataset.labels[:, :, :Td]
    return report_from_predictions(pred, label)


def report_from_predictions(pred: np.ndarray, label: np.ndarray) -> NMSEReport:
    per_block = np.array([nmse(pred[:, :, n:n + 1], label[:, :, n:n + 1])
                          for n in range(label.shape[2])])
    return NMSEReport(nmse(pred, label), per_block, label.shape[0])
