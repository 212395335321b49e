"""Dataset generation: uniform, balanced, simplex, boundary-offset and spread samples."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CANONICAL,
    CHSH_LOCAL_BOUND,
    CHSH_VARIANTS,
    P_PR,
    HalfspaceSystem,
    Space,
    ns_system,
    saturating_vertices,
    tlm_boundary_radius,
)
from .npa import NpaLevel, max_lambda
from .rng import make_rng, seed_of

HIT_AND_RUN_THINNING = 50
HIT_AND_RUN_BURN_IN = 1000
HIT_AND_RUN_CHAINS = 100
SHELL_THICKNESS = 0.01
MIN_EPSILON = 1e-10

METHODS = ("uniform", "balanced", "offset", "spread", "simplex")


class StartNotInterior(ValueError):
    pass


class DatasetError(ValueError):
    pass


# -- hit-and-run ---------------------------------------------------------------


def chord(system: HalfspaceSystem, x, u) -> tuple[np.ndarray, np.ndarray]:
    """Interval ``[lo, hi]`` of ``s`` keeping ``x + s u`` inside ``system``.

    Works row-wise on batches of points and directions.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    a = u @ system.normals.T
    slack = system.offsets - x @ system.normals.T
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = slack / a
    hi = np.min(np.where(a > 0, ratio, np.inf), axis=-1)
    lo = np.max(np.where(a < 0, ratio, -np.inf), axis=-1)
    return lo, hi


class HitAndRunSampler:
    """Parallel hit-and-run chains over a bounded polytope.

    Each emitted batch holds one point per chain, taken ``thinning`` chord
    steps after the previous batch. The first batch follows ``burn_in``
    steps from ``start``.
    """

    def __init__(self, system, start, rng, thinning=HIT_AND_RUN_THINNING,
                 burn_in=HIT_AND_RUN_BURN_IN, chains=HIT_AND_RUN_CHAINS):
        start = np.asarray(start, dtype=float)
        if np.any(system.slack(start) <= 0):
            raise StartNotInterior("hit-and-run needs a strictly interior start")
        self.system = system
        self.rng = make_rng(rng)
        self.thinning = int(thinning)
        self.x = np.tile(start, (int(chains), 1))
        self._pending = int(burn_in)
        self._buffer = np.empty((0, start.shape[0]))

    def _step(self, k: int) -> None:
        for _ in range(k):
            u = self.rng.standard_normal(self.x.shape)
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            lo, hi = chord(self.system, self.x, u)
            s = lo + (hi - lo) * self.rng.random(len(lo))
            self.x = self.x + s[:, None] * u

    def draw(self, n: int) -> np.ndarray:
        out = [self._buffer]
        have = len(self._buffer)
        while have < n:
            self._step(self._pending + self.thinning)
            self._pending = 0
            out.append(self.x.copy())
            have += len(self.x)
        pts = np.concatenate(out)
        self._buffer = pts[n:]
        return pts[:n]


def hit_and_run(system, start, n, thinning=HIT_AND_RUN_THINNING, rng=0,
                burn_in=HIT_AND_RUN_BURN_IN, chains=HIT_AND_RUN_CHAINS) -> np.ndarray:
    """``n`` approximately uniform points of ``system``."""
    chains = max(1, min(int(chains), int(n)))
    return HitAndRunSampler(system, start, rng, thinning, burn_in, chains).draw(int(n))


def ns_sampler(space, rng, **kw) -> HitAndRunSampler:
    space = Space(space)
    return HitAndRunSampler(ns_system(space), np.zeros(space.dim), rng, **kw)


# -- labelled points -------------------------------------------------------------


@dataclass
class LabelledPoint:
    x: np.ndarray
    label: int
    method: str
    epsilon: float | None = None
    sigma: float | None = None
    level: str | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")

    @property
    def space(self) -> Space:
        return Space.of(self.x)

    def to_dict(self) -> dict:
        d = {
            "space": self.space.value,
            "x": [float(v) for v in self.x],
            "label": int(self.label),
            "method": self.method,
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "level": self.level,
            "seed": self.seed,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LabelledPoint":
        known = {"space", "x", "label", "method", "epsilon", "sigma", "level", "seed"}
        p = cls(
            np.asarray(d["x"], dtype=float),
            int(d["label"]),
            d.get("method", "unknown"),
            d.get("epsilon"),
            d.get("sigma"),
            d.get("level"),
            d.get("seed"),
            {k: v for k, v in d.items() if k not in known},
        )
        if "space" in d and Space(d["space"]) is not p.space:
            raise ValueError("space does not match coordinate count")
        return p


def to_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector of a list of labelled points."""
    if not points:
        return np.empty((0, 0)), np.empty(0, dtype=int)
    return np.array([p.x for p in points]), np.array([p.label for p in points], dtype=int)


def label_points(pts, oracle, method, seed=None, level=None, **meta) -> list[LabelledPoint]:
    labels = oracle(pts) if len(pts) else np.empty(0, dtype=bool)
    return [
        LabelledPoint(x, int(bool(lab)), method, seed=seed, level=level, **meta)
        for x, lab in zip(pts, labels)
    ]


def write_jsonl(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(json.dumps(p.to_dict()) + "\n")


def read_jsonl(path, strict: bool = True) -> list:
    """Read a dataset written by :func:`write_jsonl`.

    With ``strict`` every line needs a label and a ``seed`` key. Otherwise
    unlabelled lines come back as bare coordinate arrays.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if strict and "seed" not in d:
                    raise KeyError("seed")
                if "label" in d:
                    out.append(LabelledPoint.from_dict(d))
                elif strict:
                    raise KeyError("label")
                else:
                    x = np.asarray(d["x"], dtype=float)
                    Space.of(x)
                    out.append(x)
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return out


def write_csv(points, path) -> None:
    dim = len(points[0].x) if points else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["space", *[f"x{i}" for i in range(dim)], "label", "method", "epsilon", "sigma", "level", "seed"])
        for p in points:
            w.writerow([p.space.value, *map(repr, map(float, p.x)), p.label, p.method,
                        p.epsilon, p.sigma, p.level, p.seed])


# -- uniform and simplex samples -------------------------------------------------------


def sample_uniform(space, n, oracle, balanced=False, rng=0, level=None) -> list[LabelledPoint]:
    """Uniform points of the non-signalling polytope labelled by ``oracle``.

    The balanced variant keeps drawing until each class holds ``n / 2``
    points, discarding the surplus of the majority class.
    """
    seed = seed_of(rng)
    sampler = ns_sampler(space, make_rng(rng))
    method = "balanced" if balanced else "uniform"
    if not balanced:
        return label_points(sampler.draw(n), oracle, method, seed, level)
    if n % 2:
        raise ValueError("balanced samples need an even size")
    quota = {0: n // 2, 1: n // 2}
    kept: list[LabelledPoint] = []
    batch = max(n, 256)
    while quota[0] or quota[1]:
        for p in label_points(sampler.draw(batch), oracle, method, seed, level):
            if quota[p.label]:
                quota[p.label] -= 1
                kept.append(p)
    return kept


def simplex_vertices() -> np.ndarray:
    """The 8 local vertices saturating the canonical CHSH facet, then the PR box."""
    return np.vstack([saturating_vertices(CANONICAL), P_PR])


def sample_simplex(n, rng=0, weights=None) -> np.ndarray:
    """Uniform points of the simplex cut off by the canonical CHSH facet.

    ``weights`` overrides the Dirichlet draw with fixed barycentric rows.
    """
    verts = simplex_vertices()
    if weights is None:
        weights = make_rng(rng).dirichlet(np.ones(len(verts)), size=int(n))
    return np.atleast_2d(weights) @ verts


# -- directions and boundary pairs ---------------------------------------------------


def random_direction(dim, rng=0, n=None) -> np.ndarray:
    """Isotropic unit vector(s) from normalised Gaussians."""
    rng = make_rng(rng)
    shape = (dim,) if n is None else (int(n), dim)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _local_facets() -> tuple[np.ndarray, np.ndarray, int]:
    ns = ns_system(Space.FULL8)
    chsh = np.array([v.functional for v in CHSH_VARIANTS])
    normals = np.vstack([chsh, ns.normals])
    offsets = np.concatenate([np.full(len(chsh), CHSH_LOCAL_BOUND), ns.offsets])
    return normals, offsets, CHSH_VARIANTS.index(CANONICAL)


def facet_mask(dirs) -> np.ndarray:
    """True where the ray leaves the local polytope through the canonical CHSH facet."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    normals, offsets, canonical = _local_facets()
    a = dirs @ normals.T
    with np.errstate(divide="ignore"):
        t = np.where(a > 0, offsets / np.where(a > 0, a, 1.0), np.inf)
    return np.argmin(t, axis=1) == canonical


def filter_to_facet(dirs) -> np.ndarray:
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    return dirs[facet_mask(dirs)]


def facet_directions(n, rng=0, batch=100_000) -> np.ndarray:
    """``n`` isotropic Full8 directions that pass :func:`filter_to_facet`."""
    rng = make_rng(rng)
    found = []
    have = 0
    while have < n:
        kept = filter_to_facet(random_direction(8, rng, batch))
        found.append(kept)
        have += len(kept)
    return np.concatenate(found)[:n] if found else np.empty((0, 8))


@dataclass(frozen=True)
class OffsetConfig:
    epsilon: float = 1e-3
    level: NpaLevel = NpaLevel.parse("1ab")

    def __post_init__(self):
        if not self.epsilon >= MIN_EPSILON:
            raise ValueError(f"epsilon must be at least {MIN_EPSILON}")
        object.__setattr__(self, "level", NpaLevel.parse(self.level))


def boundary_pair(u, cfg: OffsetConfig, seed=None, pair=None) -> tuple[LabelledPoint, LabelledPoint]:
    """Points just inside and just outside the relaxation along ``u``.

    ``pair`` is stored with both points so that dataset splits can keep
    the two members together.
    """
    u = np.asarray(u, dtype=float)
    pb = boundary_radius(u, cfg.level, Space.of(u))[0] * u
    meta = dict(epsilon=cfg.epsilon, level=str(cfg.level), seed=seed,
                extra={} if pair is None else {"pair": int(pair)})
    return (
        LabelledPoint((1.0 - cfg.epsilon) * pb, 1, "offset", **{**meta, "extra": dict(meta["extra"])}),
        LabelledPoint((1.0 + cfg.epsilon) * pb, 0, "offset", **meta),
    )


def offset_sample(space, n, cfg: OffsetConfig, rng=0, facet_only=False) -> list[LabelledPoint]:
    """``n / 2`` boundary pairs along isotropic (or facet-filtered) directions."""
    space = Space(space)
    seed = seed_of(rng)
    rng = make_rng(rng)
    if facet_only:
        if space is not Space.FULL8:
            raise ValueError("facet filtering is defined in Full8")
        dirs = facet_directions(n // 2, rng)
    else:
        dirs = random_direction(space.dim, rng, n // 2)
    out: list[LabelledPoint] = []
    for k, u in enumerate(dirs):
        out.extend(boundary_pair(u, cfg, seed, pair=k))
    return out


# -- spread sample ------------------------------------------------------------------------


@dataclass(frozen=True)
class SpreadConfig:
    sigma: float = 1e-2
    shell_thickness: float = SHELL_THICKNESS

    def __post_init__(self):
        if self.sigma <= 0 or not 0 < self.shell_thickness < 1:
            raise ValueError("need sigma > 0 and 0 < shell_thickness < 1")


def boundary_radius(dirs, level, space) -> np.ndarray:
    """Distance to the relaxation boundary along each unit direction.

    In correlation space every level coincides with the quantum set, whose
    boundary is known in closed form, so no SDP is needed there.
    """
    dirs = np.atleast_2d(dirs)
    if Space(space) is Space.CORR4:
        return np.atleast_1d(tlm_boundary_radius(dirs))
    return np.array([max_lambda(u, level) for u in dirs])


def _radius_bounds(dirs, space) -> tuple[np.ndarray, np.ndarray]:
    """Cheap bracket for the boundary radius: local polytope below, ns polytope above."""
    space = Space(space)
    zero = np.zeros_like(dirs)
    _, outer = chord(ns_system(space), zero, dirs)
    full = dirs if space is Space.FULL8 else np.hstack([zero, dirs])
    normals, offsets, _ = _local_facets()
    a = full @ normals.T
    with np.errstate(divide="ignore"):
        inner = np.min(np.where(a > 0, offsets / np.where(a > 0, a, 1.0), np.inf), axis=1)
    return inner, outer


def spread_sample(cfg: SpreadConfig, level="1", n=1000, rng=0, space=Space.CORR4,
                  batch=2000) -> list[LabelledPoint]:
    """Boundary points pushed in or out by a factor ``1 + N(0, sigma)``.

    Directions come from uniform non-signalling points lying in the thin
    shell between ``(1 - t)`` and ``(1 + t)`` times the relaxation boundary,
    so they follow the shell-uniform law. A negative draw moves the point
    inwards and gives label 1.
    """
    space = Space(space)
    level = NpaLevel.parse(level)
    seed = seed_of(rng)
    rng = make_rng(rng)
    sampler = ns_sampler(space, rng)
    t = cfg.shell_thickness
    out: list[LabelledPoint] = []
    while len(out) < n:
        x = sampler.draw(batch)
        r = np.linalg.norm(x, axis=1)
        u = x / r[:, None]
        inner, outer = _radius_bounds(u, space)
        maybe = (r >= (1 - t) * inner) & (r <= (1 + t) * outer)
        lam = np.full(len(x), np.nan)
        lam[maybe] = boundary_radius(u[maybe], level, space)
        keep = maybe & (np.abs(r - lam) <= t * lam)
        for ui, li in zip(u[keep], lam[keep]):
            if len(out) == n:
                break
            delta = rng.normal(0.0, cfg.sigma)
            out.append(LabelledPoint((1.0 + delta) * li * ui, int(delta < 0), "spread",
                                     sigma=cfg.sigma, level=str(level), seed=seed))
    return out
