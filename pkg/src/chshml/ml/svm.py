"""RBF support vector machine trained by sequential minimal optimisation.

The dual ``min 1/2 a'Qa - e'a`` with ``0 <= a <= C`` and ``y'a = 0`` is
solved two coordinates at a time. The pair is chosen by maximal violation
for the first index and by second-order gain for the second, as in LIBSVM.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

TAU = 1e-12
MAX_ITER = 100_000_000
SHRINK_EVERY = 1000
PASS_FACTOR = 20


class MaxPasses(RuntimeError):
    """SMO hit its iteration cap before the KKT gap closed."""


def rbf_kernel(X, Z, gamma: float) -> np.ndarray:
    sq = np.sum(X * X, axis=1)[:, None] + np.sum(Z * Z, axis=1)[None, :] - 2.0 * X @ Z.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@njit(cache=True)
def _smo_loop(K, y, C, tol, max_iter, alpha, grad):
    """Pair updates on ``alpha`` and ``grad`` in place until the KKT gap is below ``tol``.

    The pair is chosen by maximal violation for the first index and by
    second-order gain for the second, as in LIBSVM. Returns the number of
    iterations and whether the gap closed.
    """
    n = len(y)
    diag = np.diag(K).copy()
    yg = -y * grad
    up = np.empty(n, dtype=np.bool_)
    low = np.empty(n, dtype=np.bool_)
    for t in range(n):
        up[t] = (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0)
        low[t] = (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0)
    i = -1
    gmax = -np.inf
    for t in range(n):
        if up[t] and yg[t] > gmax:
            gmax, i = yg[t], t
    done = False
    it = 0
    while it < max_iter:
        if i < 0:
            done = True
            break
        # maximise b^2 / a without dividing: keep the best as a fraction
        j = -1
        gmin = np.inf
        best_num, best_den = -1.0, 1.0
        Ki = K[i]
        di_ = diag[i]
        for t in range(n):
            if low[t]:
                v = yg[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0:
                    a = di_ + diag[t] - 2.0 * Ki[t]
                    if a <= 0:
                        a = TAU
                    num = b * b
                    if num * best_den > best_num * a:
                        best_num, best_den, j = num, a, t
        if j < 0 or gmax - gmin < tol:
            done = True
            break

        old_i, old_j = alpha[i], alpha[j]
        quad = max(di_ + diag[j] - 2.0 * Ki[j], TAU)
        gi, gj = -y[i] * yg[i], -y[j] * yg[j]
        if y[i] != y[j]:
            delta = (-gi - gj) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            delta = (gi - gj) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        for t in (i, j):
            up[t] = (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0)
            low[t] = (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0)

        # with Q_it = y_i y_t K_it the score -y_t g_t moves by -(y_i da_i K_it + y_j da_j K_jt);
        # the next first index is picked in the same pass
        di, dj = (alpha[i] - old_i) * y[i], (alpha[j] - old_j) * y[j]
        Kj = K[j]
        i = -1
        gmax = -np.inf
        for t in range(n):
            v = yg[t] - (di * Ki[t] + dj * Kj[t])
            yg[t] = v
            if up[t] and v > gmax:
                gmax, i = v, t
        it += 1
    for t in range(n):
        grad[t] = -y[t] * yg[t]
    return it, done


def _index_sets(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    return up, low


def _active(alpha, y, grad, C) -> np.ndarray:
    """Variables that can still take part in a violating pair.

    A variable at a bound belongs to only one of the two index sets; it is
    left out while its score is on the satisfied side of the other set's
    extreme (the shrinking rule of LIBSVM).
    """
    up, low = _index_sets(alpha, y, C)
    yg = -y * grad
    gmax = np.max(yg[up]) if np.any(up) else -np.inf
    gmin = np.min(yg[low]) if np.any(low) else np.inf
    keep = (up & low) | (up & (yg >= gmin)) | (low & (yg <= gmax))
    return np.flatnonzero(keep)


def smo(K, y, C, tol=1e-3, max_iter=MAX_ITER):
    """Solve the SVM dual for kernel matrix ``K`` and labels ``y`` in {-1, +1}.

    Works on a shrunken active set whose kernel block is copied out so the
    inner loop stays in cache. Every ``max(SHRINK_EVERY, PASS_FACTOR * active size)``
    iterations the full gradient is refreshed, the optimality check is
    repeated on every variable and the active set is recomputed.
    Returns ``(alpha, rho, iterations)``; the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    C, tol = float(C), float(tol)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    total = 0
    while True:
        up, low = _index_sets(alpha, y, C)
        yg = -y * grad
        if not np.any(up) or not np.any(low) or np.max(yg[up]) - np.min(yg[low]) < tol:
            break
        act = _active(alpha, y, grad, C)
        block = K if len(act) == n else np.ascontiguousarray(K[np.ix_(act, act)])
        a, g = alpha[act].copy(), grad[act].copy()
        budget = min(max(SHRINK_EVERY, PASS_FACTOR * len(act)), max_iter - total)
        it, _ = _smo_loop(block, y[act], C, tol, budget, a, g)
        total += it
        changed = np.flatnonzero(a != alpha[act])
        idx = act[changed]
        step = (a[changed] - alpha[idx]) * y[idx]
        alpha[idx] = a[changed]
        grad += y * (K[:, idx] @ step)
        if total >= max_iter:
            raise MaxPasses(f"SMO did not converge in {max_iter} iterations")

    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = -float(np.mean(yg[free]))
    else:
        up, low = _index_sets(alpha, y, C)
        hi = np.max(yg[up]) if np.any(up) else np.inf
        lo = np.min(yg[low]) if np.any(low) else -np.inf
        rho = -0.5 * float((hi if np.isfinite(hi) else lo) + (lo if np.isfinite(lo) else hi))
    return alpha, rho, total


class SVMClassifier(ClassifierMixin, BaseEstimator):
    """Binary RBF-kernel SVM. Labels may be any two values."""

    def __init__(self, C=1.0, gamma=1.0, tol=1e-3, max_iter=MAX_ITER):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = unique_labels(y)
        self.n_features_in_ = X.shape[1]
        if len(self.classes_) == 1:
            # nothing to separate: a constant classifier with negative score
            self.support_ = np.empty(0, dtype=int)
            self.support_vectors_ = np.empty((0, X.shape[1]))
            self.alpha_ = self.dual_coef_ = np.empty(0)
            self.intercept_ = -1.0
            self.n_iter_ = 0
            return self
        if len(self.classes_) != 2:
            raise ValueError("only binary problems are supported")
        ys = np.where(y == self.classes_[1], 1.0, -1.0)
        K = rbf_kernel(X, X, self.gamma)
        alpha, rho, self.n_iter_ = smo(K, ys, self.C, self.tol, self.max_iter)
        sv = alpha > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = X[sv]
        self.alpha_ = alpha[sv]
        self.dual_coef_ = alpha[sv] * ys[sv]
        self.intercept_ = -rho
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if len(self.dual_coef_) == 0:
            return np.full(len(X), float(self.intercept_))
        return rbf_kernel(X, self.support_vectors_, self.gamma) @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        f = self.decision_function(X)
        if len(self.classes_) == 1:
            return np.full(len(f), self.classes_[0])
        return np.where(f > 0, self.classes_[1], self.classes_[0])
