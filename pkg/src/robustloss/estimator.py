"""Scikit-learn estimator facade over the robust-loss MLP trainer.

``RobustMLPClassifier`` wraps the training harness in the standard
fit/predict/get_params surface so it composes with pipelines, grid search,
and cross-validation.  The ``loss`` parameter takes either a loss key string
(``"gence:q=0.7"``, ``"mae:eps=0.5"``) resolved against the number of classes
seen in ``fit``, or a ready-made :class:`~robustloss.losses.LossSpec`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .losses import LossSpec, parse_loss_key
from .numerics import softmax
from .trainer import Schedule, TrainConfig, forward, train


class RobustMLPClassifier(BaseEstimator, ClassifierMixin):
    """ReLU MLP classifier trained with a configurable noise-robust loss.

    Parameters mirror the training harness: SGD with momentum, optional
    weight decay, and either an exponential or step learning-rate schedule.
    Training is deterministic given ``random_state``.  After ``fit`` the
    per-epoch metrics are available as ``history_``.
    """

    def __init__(
        self,
        loss="ce",
        hidden_layer_sizes=(64, 32),
        epochs=40,
        batch_size=32,
        learning_rate=0.02,
        schedule="exponential",
        lr_decay=0.95,
        milestones=(),
        momentum=0.95,
        weight_decay=0.0,
        shuffle=True,
        random_state=0,
    ):
        self.loss = loss
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.lr_decay = lr_decay
        self.milestones = milestones
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.shuffle = shuffle
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, y_indices = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.classes_)}")
        if isinstance(self.loss, LossSpec):
            spec = self.loss
        else:
            spec = parse_loss_key(str(self.loss), len(self.classes_))
        cfg = TrainConfig(
            loss=spec,
            epochs=int(self.epochs),
            schedule=Schedule(
                kind=self.schedule,
                initial_lr=float(self.learning_rate),
                decay=float(self.lr_decay),
                milestones=tuple(self.milestones),
            ),
            batch_size=int(self.batch_size),
            momentum=float(self.momentum),
            weight_decay=float(self.weight_decay),
            seed=int(self.random_state),
            shuffle=bool(self.shuffle),
        )
        ds = Dataset.from_labeled(X, y_indices, len(self.classes_))
        self.model_, self.history_ = train(ds, None, list(self.hidden_layer_sizes), cfg)
        self.loss_spec_ = spec
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X)
        z, _ = forward(self.model_, X)
        return z

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return self.classes_[z.argmax(axis=1)]
