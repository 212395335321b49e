"""Versioned JSON storage for trained models.

Floats are written with ``repr`` precision, so a save/load round trip is
exact and re-saving gives identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .mlp import MLPClassifier
from .svm import SVMClassifier

FORMAT = "chshml-model"
VERSION = 1


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model) -> dict:
    if isinstance(model, SVMClassifier):
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": "svm",
            "params": model.get_params(),
            "classes": np.asarray(model.classes_).tolist(),
            "n_features": int(model.n_features_in_),
            "support_vectors": _arr(model.support_vectors_),
            "dual_coef": _arr(model.dual_coef_),
            "intercept": float(model.intercept_),
        }
    if isinstance(model, MLPClassifier):
        params = model.get_params()
        params["hidden"] = list(params["hidden"])
        params["random_state"] = params["random_state"] if isinstance(params["random_state"], int) else None
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": "mlp",
            "params": params,
            "classes": np.asarray(model.classes_).tolist(),
            "n_features": int(model.n_features_in_),
            "layer_sizes": model.layer_sizes,
            "weights": [_arr(W) for W, _ in model.params_],
            "biases": [_arr(b) for _, b in model.params_],
            "best_validation_score": float(model.best_validation_score_),
            "epochs": int(model.n_epochs_),
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    if d["kind"] == "svm":
        m = SVMClassifier(**d["params"])
        m.support_vectors_ = np.array(d["support_vectors"], dtype=float).reshape(-1, d["n_features"])
        m.dual_coef_ = np.array(d["dual_coef"], dtype=float)
        m.intercept_ = d["intercept"]
        m.n_iter_ = 0
    elif d["kind"] == "mlp":
        params = dict(d["params"], hidden=tuple(d["params"]["hidden"]))
        m = MLPClassifier(**params)
        m.params_ = [(np.array(W, dtype=float), np.array(b, dtype=float))
                     for W, b in zip(d["weights"], d["biases"])]
        m.best_validation_score_ = d["best_validation_score"]
        m.n_epochs_ = d["epochs"]
    else:
        raise ValueError(f"unknown model kind {d['kind']!r}")
    m.classes_ = np.array(d["classes"])
    m.n_features_in_ = d["n_features"]
    return m


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
