"""Membership oracles behind a common ``points -> bool array`` interface.

Names follow the command line: ``tlm``, ``local``, ``npa:<level>`` and
``seesaw:<d>,<seeds>``. Points outside the non-signalling polytope are
reported as not quantum by every oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LOCAL_TOL, TLM_TOL, Space, chsh_values, embed_full8, ns_system, tlm_margin
from .npa import MEMBERSHIP_TOL, NpaLevel, membership_slack
from .rng import substream
from .seesaw import SeesawConfig, steered_seesaw


def _rows(points) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float))


def _in_ns(pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    return ns_system(Space.of(pts)).contains(pts, tol=tol)


def tlm_oracle(points, tol: float = TLM_TOL) -> np.ndarray:
    pts = _rows(points)
    ok = _in_ns(pts)
    out = np.zeros(len(pts), dtype=bool)
    if np.any(ok):
        out[ok] = tlm_margin(pts[ok]) <= tol
    return out


def local_oracle(points, tol: float = LOCAL_TOL) -> np.ndarray:
    pts = _rows(points)
    if Space.of(pts) is Space.CORR4:
        pts = embed_full8(pts)
    ok = _in_ns(pts, tol)
    return ok & np.all(chsh_values(pts) <= 2.0 + tol, axis=-1)


@dataclass(frozen=True)
class NpaOracle:
    level: NpaLevel
    tol: float = MEMBERSHIP_TOL

    def one(self, p) -> bool:
        return bool(membership_slack(p, self.level) >= -self.tol)

    def __call__(self, points) -> np.ndarray:
        pts = _rows(points)
        ok = _in_ns(pts)
        return np.array([bool(k) and self.one(p) for k, p in zip(ok, pts)], dtype=bool)


@dataclass(frozen=True)
class SeesawOracle:
    """Certifies membership in a fixed local dimension; negatives are inconclusive."""

    d: int
    seeds: int
    seed: int = 0

    def one(self, p, index: int = 0) -> bool:
        cfg = SeesawConfig(d=self.d, seeds=self.seeds)
        return steered_seesaw(p, cfg, substream(self.seed, index)).in_qdd

    def __call__(self, points) -> np.ndarray:
        pts = _rows(points)
        ok = _in_ns(pts)
        return np.array([bool(k) and self.one(p, i) for i, (k, p) in enumerate(zip(ok, pts))], dtype=bool)


def get_oracle(name: str, seed: int = 0):
    """Oracle from its textual name, e.g. ``"npa:1ab"`` or ``"seesaw:4,10"``."""
    kind, _, arg = str(name).strip().lower().partition(":")
    if kind == "tlm":
        return tlm_oracle
    if kind == "local":
        return local_oracle
    if kind == "npa":
        return NpaOracle(NpaLevel.parse(arg or "1ab"))
    if kind == "seesaw":
        d, _, seeds = (arg or "2,5").partition(",")
        return SeesawOracle(int(d), int(seeds or 5), seed)
    raise ValueError(f"unknown oracle {name!r}")
