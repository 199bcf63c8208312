"""scikit-learn compatible wrapper around training, encoding and decoding.

Input follows the scikit-learn convention of one row per sample; the rest
of the package stores samples as columns, so arrays are transposed at the
boundary.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import model_io
from .dynamics import DEFAULT_CLIP, TimeGrid
from .training import TrainConfig, train


class DynamicalDimensionReduction(TransformerMixin, BaseEstimator):
    """Embed data by flowing it along a learned polynomial vector field and projecting.

    Parameters
    ----------
    n_components : target dimension ``k``.
    mu : weight of the kinetic-energy penalty.
    degrees : dictionary degrees, a subset of ``{0, 1, 2, 3}``.
    epochs, batch_size, lr_start, lr_end : optimiser settings.
    T, dt : flow horizon and Euler step.
    init : ``"pca-linear"`` or ``"random"``.
    init_scale : standard deviation of the Gaussian entries of the initial ``beta``.
    clip : elementwise state bound applied after every Euler step.
    random_state : seed for initialisation and batch shuffling.

    Attributes
    ----------
    model_ : fitted :class:`~ddr.training.ModelParams`.
    trace_ : per-epoch :class:`~ddr.training.TrainTrace`.
    components_ : the projection ``Q``, shape ``(n_components, n_features)``.
    coef_ : the vector-field coefficients ``beta``.
    """

    def __init__(self, n_components=2, mu=1e-3, degrees=(0, 1, 2, 3), epochs=900, batch_size=50,
                 lr_start=0.01, lr_end=0.001, T=1.0, dt=0.01, init="pca-linear", init_scale=0.2,
                 clip=DEFAULT_CLIP, random_state=0):
        self.n_components = n_components
        self.mu = mu
        self.degrees = degrees
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.T = T
        self.dt = dt
        self.init = init
        self.init_scale = init_scale
        self.clip = clip
        self.random_state = random_state

    def _config(self, n_samples: int) -> TrainConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return TrainConfig(k=int(self.n_components), mu=float(self.mu), degrees=tuple(self.degrees),
                           epochs=int(self.epochs), batch_size=min(int(self.batch_size), n_samples),
                           lr_start=float(self.lr_start), lr_end=float(self.lr_end), seed=seed,
                           grid=TimeGrid(float(self.T), float(self.dt)), init_mode=self.init,
                           init_scale=float(self.init_scale), clip=float(self.clip))

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.model_, self.trace_ = train(X.T, self._config(X.shape[0]))
        self.components_ = self.model_.Q
        self.coef_ = self.model_.beta
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return model_io.encode(self.model_, X.T).T

    def inverse_transform(self, Y):
        """Decode embedded rows; rows whose reverse flow diverges come back as NaN."""
        check_is_fitted(self, "model_")
        Y = check_array(Y, dtype=np.float64)
        if Y.shape[1] != self.model_.k:
            raise ValueError(f"Y has {Y.shape[1]} columns, expected {self.model_.k}")
        return model_io.decode(self.model_, Y.T).T

    def score(self, X, y=None) -> float:
        """Negative objective ``-(J1 + mu J2)`` on ``X`` with the fitted ``Q``."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return -self.model_.report(X.T).J
