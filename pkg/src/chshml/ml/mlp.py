"""Dense ReLU network with a two-way softmax head, trained with Adam.

With ``convex=True`` every weight after the first layer is kept
non-negative. ReLU is convex and non-decreasing, so each logit is then a
convex function of the input.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..rng import make_rng
from .losses import FocalLossParams, balanced_accuracy, class_weights, focal_grad_logits, focal_loss

HIDDEN = (64, 16, 4)
LOSSES = ("focal", "bce")
MONITORS = ("loss", "balanced_accuracy")


class DivergedLoss(FloatingPointError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=1, keepdims=True)


def init_params(sizes, rng, convex=False, scheme="he") -> list[tuple[np.ndarray, np.ndarray]]:
    """Uniform He or Glorot weights and zero biases; constrained layers start non-negative."""
    rng = make_rng(rng)
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / fan_in) if scheme == "he" else np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-lim, lim, (fan_in, fan_out))
        if convex and k > 0:
            W = np.abs(W) / 2.0
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits and the post-activation of each layer (input first)."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = params[-1]
    return h @ W + b, acts


def loss_and_grads(params, X, y, loss="focal", focal=FocalLossParams(), weights=None):
    """Mean loss over the batch and its gradient for every (W, b)."""
    logits, acts = forward(params, X)
    probs = softmax(logits)
    onehot = np.eye(2)[y]
    n = len(y)
    if loss == "focal":
        p = np.sum(probs * onehot, axis=1)
        value = float(np.mean(focal_loss(p, focal)))
        delta = focal_grad_logits(probs, onehot, focal) / n
    elif loss == "bce":
        w = class_weights(y) if weights is None else weights
        p = np.maximum(np.sum(probs * onehot, axis=1), 1e-12)
        value = float(np.mean(-w * np.log(p)))
        delta = w[:, None] * (probs - onehot) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads = []
    for k in range(len(params) - 1, -1, -1):
        W, _ = params[k]
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k:
            delta = (delta @ W.T) * (acts[k] > 0)
    return value, grads[::-1]


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward classifier ``in -> 64 -> 16 -> 4 -> 2``.

    ``fit`` accepts optional validation data. Training stops once the
    monitored validation quantity (``monitor``: loss or balanced accuracy) has
    not improved for ``patience`` epochs; the best weights seen are kept.
    ``best_validation_score_`` is always the balanced accuracy of those weights.
    """

    def __init__(self, hidden=HIDDEN, loss="focal", focal_alpha=1e-2, focal_gamma=2.0,
                 convex=False, learning_rate=1e-3, batch_size=64, max_epochs=500,
                 patience=20, monitor="loss", adam_epsilon=1e-10, init="glorot", random_state=0):
        self.hidden = hidden
        self.loss = loss
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.convex = convex
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.monitor = monitor
        self.adam_epsilon = adam_epsilon
        self.init = init
        self.random_state = random_state

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_features_in_, *self.hidden, 2]

    def _project(self, params):
        if not self.convex:
            return params
        return [params[0]] + [(np.maximum(W, 0.0), b) for W, b in params[1:]]

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=float)
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.monitor not in MONITORS:
            raise ValueError(f"monitor must be one of {MONITORS}")
        self.classes_ = unique_labels(y)
        if len(self.classes_) > 2:
            raise ValueError("only binary problems are supported")
        self.n_features_in_ = X.shape[1]
        yi = np.searchsorted(self.classes_, y) if len(self.classes_) == 2 else np.zeros(len(y), int)
        if X_val is None:
            X_val, yv = X, yi
        else:
            X_val = check_array(X_val, dtype=float)
            yv = np.searchsorted(self.classes_, np.asarray(y_val))
        rng = make_rng(self.random_state)
        focal = FocalLossParams(self.focal_alpha, self.focal_gamma)
        weights = class_weights(yi)
        params = self._project(init_params(self.layer_sizes, rng, self.convex, self.init))
        m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        beta1, beta2, eps = 0.9, 0.999, self.adam_epsilon
        step = 0
        best = (-np.inf, params, 0)
        stale = 0
        self.loss_curve_ = []
        for epoch in range(1, self.max_epochs + 1):
            order = rng.permutation(len(X))
            total = 0.0
            for start in range(0, len(X), self.batch_size):
                idx = order[start : start + self.batch_size]
                val, grads = loss_and_grads(params, X[idx], yi[idx], self.loss, focal, weights[idx])
                if not np.isfinite(val):
                    raise DivergedLoss(f"non-finite loss at epoch {epoch}")
                total += val * len(idx)
                step += 1
                c1, c2 = 1 - beta1**step, 1 - beta2**step
                new = []
                for k, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                    mW, mb = m[k]
                    vW, vb = v[k]
                    mW, mb = beta1 * mW + (1 - beta1) * gW, beta1 * mb + (1 - beta1) * gb
                    vW, vb = beta2 * vW + (1 - beta2) * gW**2, beta2 * vb + (1 - beta2) * gb**2
                    m[k], v[k] = (mW, mb), (vW, vb)
                    lr = self.learning_rate * np.sqrt(c2) / c1
                    new.append((W - lr * mW / (np.sqrt(vW) + eps), b - lr * mb / (np.sqrt(vb) + eps)))
                params = self._project(new)
            self.loss_curve_.append(total / len(X))
            score = self._monitored(params, X_val, yv, focal)
            if score > best[0]:
                best, stale = (score, params, epoch), 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        _, self.params_, self.best_epoch_ = best
        self.best_validation_score_ = _balanced_or_plain(np.argmax(forward(self.params_, X_val)[0], axis=1), yv)
        self.n_epochs_ = epoch
        return self

    def _monitored(self, params, X_val, yv, focal) -> float:
        """Higher is better: negative validation loss or balanced accuracy."""
        if self.monitor == "balanced_accuracy":
            return _balanced_or_plain(np.argmax(forward(params, X_val)[0], axis=1), yv)
        return -loss_and_grads(params, X_val, yv, self.loss, focal)[0]

    def logits(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.params_, X)[0]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        k = np.argmax(self.logits(X), axis=1)
        if len(self.classes_) == 1:
            return np.full(len(k), self.classes_[0])
        return self.classes_[k]


def _balanced_or_plain(pred, y) -> float:
    if len(np.unique(y)) < 2:
        return float(np.mean(pred == y))
    return balanced_accuracy(pred, y)
