"""Scikit-learn style estimator around the phase-learning network.

``fit`` consumes channel matrices (or precomputed feature rows) with
their unconstrained precoder targets; ``predict`` returns analog phase
matrices; ``predict_precoder`` decodes a full constraint-satisfying
hybrid precoder for one channel.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import neural
from .channel import ChannelRealization
from .exceptions import DimensionError


def _as_feature_matrix(X) -> np.ndarray:
    """Accept (n, features) real rows or an (n, n_r, n_t) complex stack."""
    arr = np.asarray(X)
    if arr.ndim == 3 and np.iscomplexobj(arr):
        return np.stack([neural.channel_features(h) for h in arr])
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(
            f"X must be (n, features) real or (n, n_r, n_t) complex, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("X contains NaN or Inf entries")
    return arr


class PrecoderAutoencoder(BaseEstimator):
    """Learn the analog phase map from channels to hybrid precoders.

    Parameters mirror the training defaults: 100 epochs of Adam at
    learning rate 1e-4 with batches of 250, a denoising layer between
    encoder and decoder, and an accuracy threshold ``tau`` on the
    relative reconstruction loss.
    """

    def __init__(self, n_rf=4, epochs=100, batch_size=250, learning_rate=1e-4,
                 noise_sigma=0.1, tau=0.1, encoder_units=(300, 128),
                 decoder_units=(100, 64), input_projection=None, random_state=0):
        self.n_rf = n_rf
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.noise_sigma = noise_sigma
        self.tau = tau
        self.encoder_units = encoder_units
        self.decoder_units = decoder_units
        self.input_projection = input_projection
        self.random_state = random_state

    def _config(self) -> neural.TrainingConfig:
        return neural.TrainingConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, seed=self.random_state,
            noise_sigma=self.noise_sigma, tau=self.tau, n_rf=self.n_rf,
            encoder_units=tuple(self.encoder_units),
            decoder_units=tuple(self.decoder_units),
            input_projection=self.input_projection)

    def fit(self, X, y, validation=None, extra_eval=None):
        """Train on features ``X`` and complex targets ``y`` of shape (n, n_t, n_s)."""
        feats = _as_feature_matrix(X)
        targets = np.asarray(y, dtype=np.complex128)
        if targets.ndim != 3 or targets.shape[0] != feats.shape[0]:
            raise DimensionError(
                f"y must be (n, n_t, n_s) matching X, got shape {targets.shape}")
        samples = [neural.TrainingSample(features=f, target=t)
                   for f, t in zip(feats, targets)]
        self.model_, self.history_ = neural.train(
            samples, self._config(), validation=validation, extra_eval=extra_eval)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit must be called before predict/score")

    def predict(self, X) -> np.ndarray:
        """Analog phase matrices in radians, shape (n, n_t, n_rf)."""
        self._check_fitted()
        feats = _as_feature_matrix(X)
        outputs = neural.forward(
            self.model_, neural._model_inputs(self.model_, feats), mode="infer")[-1]
        n_t = self.model_.meta["n_t"]
        return 2.0 * np.pi * outputs.reshape(len(feats), n_t, self.n_rf)

    def predict_precoder(self, ch: ChannelRealization, f_opt=None):
        """Full hybrid precoder (analog + refit digital stage) for one channel."""
        self._check_fitted()
        return neural.infer_precoder(self.model_, ch, f_opt=f_opt)

    def score(self, X, y) -> float:
        """Accuracy: fraction of samples with relative loss at most ``tau``."""
        self._check_fitted()
        feats = _as_feature_matrix(X)
        targets = np.asarray(y, dtype=np.complex128)
        samples = [neural.TrainingSample(features=f, target=t)
                   for f, t in zip(feats, targets)]
        return neural.accuracy(self.model_, samples, self.tau)
