"""scikit-learn estimator wrappers around the Lehmer networks.

These follow the standard conventions (``__init__`` stores hyperparameters
verbatim, fitted state carries a trailing underscore, ``get_params``/``clone``
work), so the classifiers drop into pipelines and ``cross_val_score``.  The
heavy lifting lives in ``training.py``; this module is adaptation only.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .layers import softmax
from .training import (
    TrainConfig,
    build_conv_network,
    build_tabular_network,
    train_model,
)
from .transforms import standardize_apply, standardize_fit


class LehmerRangeScaler(TransformerMixin, BaseEstimator):
    """Affine per-feature map onto [1/e, e], the transforms' natural domain.

    Constant training columns map to 1.0 and out-of-range test values are
    clipped, so transformed data is always strictly positive.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        self.stats_ = standardize_fit(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        X = check_array(X)
        return standardize_apply(self.stats_, X)


class _LehmerClassifierBase(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing for the tabular and conv classifiers."""

    def _config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            seed=self.random_state,
            lau_kind=self.lau,
            lau_units=self.n_units,
            suddency_bound=self.suddency_bound,
        )

    def _encode_labels(self, y):
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least 2 classes to fit a classifier")
        return encoded.astype(np.int64)

    def _forward_proba(self, X, batch_size=256):
        chunks = []
        for start in range(0, X.shape[0], batch_size):
            logits = self.net_.forward(X[start : start + batch_size],
                                       train=False)
            chunks.append(softmax(logits))
        return np.vstack(chunks)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class LehmerNetClassifier(_LehmerClassifierBase):
    """Tabular classifier: range scaling, an LAU bank, affine logits.

    ``lau`` selects the real- or complex-valued activation unit.  Defaults
    reproduce the benchmark configuration (3 units, adam 3e-2, 150 epochs,
    batches of 16).
    """

    def __init__(self, lau="real", n_units=3, epochs=150, batch_size=16,
                 learning_rate=3e-2, optimizer="adam", momentum=0.9,
                 beta1=0.9, beta2=0.999, suddency_bound=0.0, random_state=0):
        self.lau = lau
        self.n_units = n_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.suddency_bound = suddency_bound
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        encoded = self._encode_labels(y)
        config = self._config()
        rng = np.random.default_rng(self.random_state)
        self.stats_ = standardize_fit(X)
        self.n_features_in_ = X.shape[1]
        self.net_ = build_tabular_network(
            X.shape[1], self.classes_.shape[0], config, rng
        )
        self.loss_curve_ = train_model(
            self.net_, standardize_apply(self.stats_, X), encoded, config, rng
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return self._forward_proba(standardize_apply(self.stats_, X))


class LehmerConvNetClassifier(_LehmerClassifierBase):
    """Image classifier: two conv/batchnorm/pool blocks, squash, LAU head.

    Accepts (n, H, W) grayscale or (n, H, W, C) channels-last batches with
    pixel values already in [0, 1]; H and W must be divisible by 4.
    """

    def __init__(self, lau="real", n_units=32, epochs=10, batch_size=64,
                 learning_rate=1e-3, optimizer="adam", momentum=0.9,
                 beta1=0.9, beta2=0.999, suddency_bound=0.0, random_state=0):
        self.lau = lau
        self.n_units = n_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.suddency_bound = suddency_bound
        self.random_state = random_state

    def _check_images(self, X, fitted=False):
        X = np.asarray(X, dtype=float)
        if X.ndim not in (3, 4):
            raise ValueError(
                f"expected (n, H, W) or (n, H, W, C) images, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("images must be finite")
        if fitted and X.shape[1:] != self.image_shape_:
            raise ValueError(
                f"images have shape {X.shape[1:]}, expected {self.image_shape_}"
            )
        return X

    def fit(self, X, y):
        X = self._check_images(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be a vector matching the number of images")
        encoded = self._encode_labels(y)
        config = self._config()
        rng = np.random.default_rng(self.random_state)
        self.image_shape_ = X.shape[1:]
        self.net_ = build_conv_network(
            self.image_shape_, self.classes_.shape[0], config, rng
        )
        self.loss_curve_ = train_model(self.net_, X, encoded, config, rng)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = self._check_images(X, fitted=True)
        return self._forward_proba(X)
