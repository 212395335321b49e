"""Accuracy suites, spread test, two-dimensional slices and Monte Carlo volumes."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import P_PR, Space, ns_system
from .ml.losses import binary_metrics
from .npa import NpaLevel
from .oracles import NpaOracle, tlm_oracle
from .rng import make_rng
from .sampling import SpreadConfig, ns_sampler, sample_simplex, spread_sample, to_arrays


def as_classifier(model):
    """Turn a fitted model or an oracle into ``points -> int labels``."""
    if hasattr(model, "predict"):
        return lambda X: np.asarray(model.predict(np.atleast_2d(X)), dtype=int)
    return lambda X: np.asarray(model(np.atleast_2d(X)), dtype=int)


# -- spread test ---------------------------------------------------------------------


def spread_test(model, level="1", sigma=1e-2, n=10_000, rng=0, space=None) -> float:
    """Accuracy against the labels of a fresh spread sample."""
    if space is None:
        space = Space.CORR4 if getattr(model, "n_features_in_", 4) == 4 else Space.FULL8
    pts = spread_sample(SpreadConfig(sigma), level, n, rng, space)
    X, y = to_arrays(pts)
    return float(np.mean(as_classifier(model)(X) == y))


# -- slices ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """Affine plane ``origin + u e1 + v e2`` sampled on a regular grid."""

    name: str
    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    resolution: int = 141
    bounds: tuple = ((-2.0, 2.0), (-2.0, 2.0))

    def __post_init__(self):
        for attr in ("origin", "e1", "e2"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        if abs(self.e1 @ self.e2) > 1e-12:
            raise ValueError("slice basis must be orthogonal")
        if abs(np.linalg.norm(self.e1) - 1) > 1e-12 or abs(np.linalg.norm(self.e2) - 1) > 1e-12:
            raise ValueError("slice basis vectors must have unit norm")
        if not self.origin.shape == self.e1.shape == self.e2.shape:
            raise ValueError("origin and basis must live in the same space")

    @property
    def space(self) -> Space:
        return Space.of(self.origin)

    def point(self, u, v) -> np.ndarray:
        return self.origin + np.multiply.outer(u, self.e1) + np.multiply.outer(v, self.e2)


# two orthogonal PR-box directions in correlation space
SLICE_1 = SliceSpec(
    "pr-pair",
    np.zeros(4),
    np.array([1.0, 1.0, 1.0, -1.0]) / 2.0,
    np.array([-1.0, 1.0, 1.0, 1.0]) / 2.0,
)

# the plane <A0B0> = <A0B1> = <A1B0>
SLICE_2 = SliceSpec(
    "equal-correlators",
    np.zeros(4),
    np.array([1.0, 1.0, 1.0, 0.0]) / np.sqrt(3.0),
    np.array([0.0, 0.0, 0.0, 1.0]),
    bounds=((-np.sqrt(3.0), np.sqrt(3.0)), (-1.0, 1.0)),
)

# stand-in Full8 slice: PR box against a pure-marginal direction
SLICE_FULL8 = SliceSpec(
    "pr-marginals",
    np.zeros(8),
    P_PR / 2.0,
    np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]) / 2.0,
    resolution=61,
)

SLICES = {s.name: s for s in (SLICE_1, SLICE_2, SLICE_FULL8)}


@dataclass
class SliceGrid:
    spec_name: str
    u: np.ndarray
    v: np.ndarray
    in_ns: np.ndarray
    labels: np.ndarray  # -1 outside the non-signalling polytope

    def rows(self):
        for u, v, ok, lab in zip(self.u, self.v, self.in_ns, self.labels):
            if ok:
                yield float(u), float(v), int(lab)


def slice_grid(spec: SliceSpec, classifier) -> SliceGrid:
    (u0, u1), (v0, v1) = spec.bounds
    uu, vv = np.meshgrid(np.linspace(u0, u1, spec.resolution), np.linspace(v0, v1, spec.resolution), indexing="ij")
    u, v = uu.ravel(), vv.ravel()
    pts = spec.point(u, v)
    ok = ns_system(spec.space).contains(pts, tol=1e-12)
    labels = np.full(len(u), -1)
    if np.any(ok):
        labels[ok] = as_classifier(classifier)(pts[ok])
    return SliceGrid(spec.name, u, v, ok, labels)


def default_truth(spec: SliceSpec):
    """Arcsin test in correlation space, the 1+AB relaxation in Full8."""
    return tlm_oracle if spec.space is Space.CORR4 else NpaOracle(NpaLevel.parse("1ab"))


def slice_accuracy(spec: SliceSpec, model, truth=None, truth_grid: SliceGrid | None = None) -> float:
    """Fraction of in-polytope grid points where model and ground truth agree."""
    pred = slice_grid(spec, model)
    ref = truth_grid if truth_grid is not None else slice_grid(spec, truth or default_truth(spec))
    ok = pred.in_ns
    return float(np.mean(pred.labels[ok] == ref.labels[ok]))


def write_slice_csv(grid: SliceGrid, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "label"])
        w.writerows(grid.rows())


def write_slice_json(grid: SliceGrid, path) -> None:
    data = {"slice": grid.spec_name, "points": [dict(u=u, v=v, label=lab) for u, v, lab in grid.rows()]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


# -- volumes -------------------------------------------------------------------------------


@dataclass
class VolumeEstimate:
    ratio: float
    stderr: float
    time_per_point: float
    n: int


def uniform_region(space):
    """Sampler of uniform non-signalling points, ``(n, rng) -> points``."""
    return lambda n, rng: ns_sampler(space, rng).draw(n)


def simplex_region():
    return lambda n, rng: sample_simplex(n, rng)


def volume_ratio(region, oracle, n, rng=0) -> VolumeEstimate:
    """Fraction of ``region`` samples accepted by ``oracle``, with binomial error."""
    pts = region(int(n), make_rng(rng))
    t0 = time.perf_counter()
    hits = np.asarray(oracle(pts), dtype=bool) if n else np.empty(0, dtype=bool)
    elapsed = time.perf_counter() - t0
    if n == 0:
        return VolumeEstimate(0.0, 0.0, 0.0, 0)
    p = float(np.mean(hits))
    return VolumeEstimate(p, float(np.sqrt(p * (1 - p) / n)), elapsed / n, int(n))


def volume_curve(levels, n, rng=0, region=None) -> list[dict]:
    """One row per NPA level: ``level, ratio, stderr, tPerPoint`` over the simplex."""
    region = region or simplex_region()
    rows = []
    for lev in levels:
        est = volume_ratio(region, NpaOracle(NpaLevel.parse(lev)), n, rng)
        rows.append({"level": str(NpaLevel.parse(lev)), "ratio": est.ratio, "stderr": est.stderr,
                     "tPerPoint": est.time_per_point})
    return rows


def write_volume_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["level", "ratio", "stderr", "tPerPoint"])
        w.writeheader()
        w.writerows(rows)


# -- reports ---------------------------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float = 0.0
    balanced_accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    per_suite: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def dataset_metrics(model, points) -> dict:
    X, y = to_arrays(points)
    return binary_metrics(as_classifier(model)(X), y)


def full_report(model, datasets=None, spread_sigmas=(), slices=(), level="1", seed=0, spread_n=10_000) -> EvalReport:
    """Run the requested suites; headline metrics come from the first dataset suite.

    ``datasets`` maps suite names (``test``, ``train``, ``unbalanced``...) to
    labelled points. Spread suites use ``seed`` and slices are compared with
    their default ground truth.
    """
    t0 = time.perf_counter()
    report = EvalReport()
    for name, pts in (datasets or {}).items():
        report.per_suite[name] = dataset_metrics(model, pts)
    for sigma in spread_sigmas:
        report.per_suite[f"spread:{sigma:g}"] = {
            "accuracy": spread_test(model, level, sigma, spread_n, seed)
        }
    for spec in slices:
        spec = SLICES[spec] if isinstance(spec, str) else spec
        report.per_suite[f"slice:{spec.name}"] = {"accuracy": slice_accuracy(spec, model)}
    first = next((m for m in report.per_suite.values() if "f1" in m), None)
    if first:
        for key in ("accuracy", "balanced_accuracy", "precision", "recall", "f1"):
            setattr(report, key, first[key])
    report.runtime_seconds = time.perf_counter() - t0
    return report


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
