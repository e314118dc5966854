"""scikit-learn style front end.

``X`` holds complex uplink observations of shape ``(n_samples, M, Tu)`` and
``y`` the complex downlink labels ``(n_samples, N, Td)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .network import NetConfig, labels_to_sequence, observations_to_sequence
from .training import TrainConfig, fit_arrays, nmse, predict, to_db


def check_channel_array(X, name: str = "X", ndim: int = 3) -> np.ndarray:
    """Coerce to a finite complex128 array with ``ndim`` dimensions."""
    try:
        arr = np.asarray(X, dtype=np.complex128)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{name} must be numeric: {e}") from None
    if arr.ndim == ndim - 1:
        arr = arr[None]
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} has no samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_pair(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_channel_array(X, "X")
    y = check_channel_array(y, "y")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X and y hold {X.shape[0]} and {y.shape[0]} samples")
    if X.shape[1] > y.shape[1]:
        raise ValueError("more observed antennas than output antennas")
    return X, y


class LatentODEExtrapolator(RegressorMixin, BaseEstimator):
    """Partial uplink channels in, full downlink channels out.

    Hyperparameters mirror :class:`~chanode.network.NetConfig` and
    :class:`~chanode.training.TrainConfig`.  The antenna count, observed
    antenna count and block counts are read from the shapes passed to
    :meth:`fit`.
    """

    def __init__(self, latent_dim=48, hidden_width=40, method="rk4", substeps=4,
                 skip_first_obs=False, batch_size=80, epochs=1000, lr=0.004, halve_every=50,
                 beta1=0.9, beta2=0.999, kl_weight=0.0, random_state=0):
        self.latent_dim = latent_dim
        self.hidden_width = hidden_width
        self.method = method
        self.substeps = substeps
        self.skip_first_obs = skip_first_obs
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr = lr
        self.halve_every = halve_every
        self.beta1 = beta1
        self.beta2 = beta2
        self.kl_weight = kl_weight
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs, lr0=self.lr,
                           halve_every=self.halve_every, beta1=self.beta1, beta2=self.beta2,
                           seed=int(self.random_state or 0), kl_weight=self.kl_weight)

    def fit(self, X, y, eval_set=None):
        X, y = check_pair(X, y)
        _, M, Tu = X.shape
        _, N, Td = y.shape
        self.net_config_ = NetConfig(N=N, M=M, Tu=Tu, Td=Td, L=self.latent_dim,
                                     hidden=self.hidden_width, method=self.method,
                                     substeps=self.substeps, skip_first_obs=self.skip_first_obs)
        Xv = Yv = None
        if eval_set is not None:
            Xe, ye = check_pair(*eval_set)
            Xv, Yv = observations_to_sequence(Xe), labels_to_sequence(ye)
        self.params_, self.history_ = fit_arrays(
            observations_to_sequence(X), labels_to_sequence(y), self.net_config_,
            self._train_config(), Xv, Yv)
        self.n_antennas_in_ = M
        return self

    def predict(self, X, n_blocks: int | None = None):
        """Inference-mode downlink prediction; ``n_blocks`` may extend or shorten ``Td``."""
        check_is_fitted(self, "params_")
        X = check_channel_array(X, "X")
        cfg = self.net_config_
        if X.shape[1:] != (cfg.M, cfg.Tu):
            raise ValueError(f"X must have shape (n, {cfg.M}, {cfg.Tu}), got {X.shape}")
        return predict(self.params_, X, Td=n_blocks)

    def score(self, X, y, sample_weight=None):
        """Negative NMSE in dB, so larger is better."""
        X, y = check_pair(X, y)
        return -to_db(nmse(self.predict(X, n_blocks=y.shape[2]), y))


class ZeroPredictor(RegressorMixin, BaseEstimator):
    """Predicts an all-zero downlink channel (0 dB NMSE by construction)."""

    def __init__(self, n_antennas=None, n_blocks=None):
        self.n_antennas = n_antennas
        self.n_blocks = n_blocks

    def fit(self, X, y):
        X, y = check_pair(X, y)
        self.output_shape_ = y.shape[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "output_shape_")
        X = check_channel_array(X, "X")
        return np.zeros((X.shape[0],) + tuple(self.output_shape_), complex)

    def score(self, X, y, sample_weight=None):
        return -to_db(nmse(self.predict(X), check_channel_array(y, "y")))


class RepeatLastBlock(RegressorMixin, BaseEstimator):
    """Holds the last uplink observation constant over the downlink.

    Observed antennas repeat their last LS estimate; unobserved antennas are
    predicted as zero.
    """

    def __init__(self, antenna_set=None):
        self.antenna_set = antenna_set

    def fit(self, X, y):
        X, y = check_pair(X, y)
        idx = np.arange(X.shape[1]) if self.antenna_set is None else np.asarray(self.antenna_set)
        if len(idx) != X.shape[1]:
            raise ValueError("antenna_set length must equal the observed antenna count")
        self.antenna_idx_ = idx
        self.output_shape_ = y.shape[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "antenna_idx_")
        X = check_channel_array(X, "X")
        N, Td = self.output_shape_
        out = np.zeros((X.shape[0], N, Td), complex)
        out[:, self.antenna_idx_, :] = X[:, :, -1:]
        return out

    def score(self, X, y, sample_weight=None):
        return -to_db(nmse(self.predict(X), check_channel_array(y, "y")))
