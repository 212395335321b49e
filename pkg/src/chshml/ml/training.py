"""Dataset splits, hyperparameter search, restarts and prediction helpers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..geometry import CHSH_VARIANTS, Space, chsh_values, local_membership, relabel
from ..rng import make_rng, substream
from ..sampling import to_arrays
from .losses import FocalLossParams
from .mlp import MLPClassifier
from .svm import MaxPasses, SVMClassifier

SPLIT = (0.70, 0.15, 0.15)
SVM_C_GRID = (0.1, 1.0, 10.0, 100.0, 1000.0)
SVM_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0)
MAX_RESTARTS = 10


class DimensionMismatch(ValueError):
    pass


@dataclass
class SplitDataset:
    train: list
    validation: list
    test: list
    proportions: tuple = SPLIT

    def arrays(self, part: str):
        return to_arrays(getattr(self, part))


def _groups(points) -> list[list[int]]:
    """Indices grouped so that the two members of a boundary pair stay together."""
    groups: dict = {}
    for i, p in enumerate(points):
        pair = getattr(p, "extra", {}).get("pair")
        groups.setdefault(i if pair is None else ("pair", p.seed, pair), []).append(i)
    return list(groups.values())


def split_dataset(points, proportions=SPLIT, seed=0) -> SplitDataset:
    """Shuffle with a seeded stream and cut into train / validation / test.

    Offset pairs are never split: a member whose partner sits in the
    training set would otherwise reward memorising the partner.
    """
    if abs(sum(proportions) - 1.0) > 1e-9:
        raise ValueError("proportions must sum to one")
    points = list(points)
    groups = _groups(points)
    order = [i for g in make_rng(seed).permutation(len(groups)) for i in groups[g]]
    n_train = int(round(proportions[0] * len(points)))
    n_val = int(round(proportions[1] * len(points)))
    cut_train = _group_boundary(order, points, n_train)
    cut_val = _group_boundary(order, points, n_train + n_val)
    pick = lambda idx: [points[i] for i in idx]  # noqa: E731
    return SplitDataset(
        pick(order[:cut_train]),
        pick(order[cut_train:cut_val]),
        pick(order[cut_val:]),
        tuple(proportions),
    )


def _group_boundary(order, points, cut) -> int:
    """Move ``cut`` forward past the second member of a pair it would separate."""
    if 0 < cut < len(order):
        a, b = points[order[cut - 1]], points[order[cut]]
        pa, pb = getattr(a, "extra", {}).get("pair"), getattr(b, "extra", {}).get("pair")
        if pa is not None and pa == pb and a.seed == b.seed:
            return cut + 1
    return cut


@dataclass
class SearchLog:
    scores: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def train_svm(data: SplitDataset, C_grid=SVM_C_GRID, gamma_grid=SVM_GAMMA_GRID, tol=1e-3):
    """Fit every grid cell and keep the one with the best validation accuracy.

    Cells whose SMO run hits the iteration cap are skipped and listed in
    ``model.search_.failures``.
    """
    X, y = data.arrays("train")
    Xv, yv = data.arrays("validation")
    log = SearchLog()
    best, best_score = None, -np.inf
    for C, gamma in itertools.product(C_grid, gamma_grid):
        try:
            model = SVMClassifier(C=C, gamma=gamma, tol=tol).fit(X, y)
        except MaxPasses:
            log.failures.append((C, gamma))
            continue
        score = model.score(Xv, yv)
        log.scores[(C, gamma)] = score
        if score > best_score:
            best, best_score = model, score
    if best is None:
        raise MaxPasses("no grid cell converged")
    best.search_ = log
    best.validation_score_ = best_score
    return best


def train_mlp(data: SplitDataset, loss="focal", focal=FocalLossParams(), convex=False,
              restarts=MAX_RESTARTS, seed=0, **kw) -> MLPClassifier:
    """Best of ``restarts`` independently initialised networks (validation balanced accuracy)."""
    if not 1 <= restarts <= MAX_RESTARTS:
        raise ValueError(f"restarts must lie in 1..{MAX_RESTARTS}")
    X, y = data.arrays("train")
    if X.shape[1] not in (4, 8):
        raise DimensionMismatch("features must be Corr4 or Full8 behaviours")
    Xv, yv = data.arrays("validation")
    best = None
    for r in range(restarts):
        model = MLPClassifier(loss=loss, focal_alpha=focal.alpha, focal_gamma=focal.gamma,
                              convex=convex, random_state=substream(seed, r), **kw)
        model.fit(X, y, Xv if len(Xv) else None, yv if len(yv) else None)
        if best is None or model.best_validation_score_ > best.best_validation_score_:
            best = model
    best.set_params(random_state=seed)
    best.restarts_ = restarts
    return best


def score_of(model, X) -> np.ndarray:
    """Class-1 probability for networks, signed margin for SVMs."""
    if hasattr(model, "predict_proba") and isinstance(model, MLPClassifier):
        return model.predict_proba(X)[:, 1]
    return model.decision_function(X)


def predict(model, b):
    """Label and score for one behaviour or a batch."""
    b = np.asarray(b, dtype=float)
    X = np.atleast_2d(b)
    if X.shape[1] != model.n_features_in_:
        raise DimensionMismatch(f"model expects {model.n_features_in_} coordinates, got {X.shape[1]}")
    labels, scores = model.predict(X).astype(int), score_of(model, X)
    if b.ndim == 1:
        return int(labels[0]), float(scores[0])
    return labels, scores


def canonical_image(b) -> np.ndarray:
    """Relabel a Full8 behaviour so its largest CHSH violation is the canonical one."""
    v = CHSH_VARIANTS[int(np.argmax(chsh_values(b)))]
    return relabel(b, v)


def composite_full8_predict(model, b) -> int:
    """Local behaviours are quantum; the rest go to a model of the canonical simplex."""
    b = np.asarray(b, dtype=float)
    if Space.of(b) is not Space.FULL8:
        raise DimensionMismatch("composite prediction works on Full8 behaviours")
    if local_membership(b):
        return 1
    return int(model.predict(canonical_image(b)[None])[0])
