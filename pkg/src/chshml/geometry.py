"""Polytopes, CHSH functionals and the arcsin boundary of the quantum set.

Behaviours are plain numpy arrays whose last axis holds the coordinates.
Full 8-dimensional behaviours use the order

    [<A0>, <A1>, <B0>, <B1>, <A0B0>, <A0B1>, <A1B0>, <A1B1>]

and correlation-space behaviours keep only the last four entries.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

TLM_TOL = 1e-9
ARCSIN_CLAMP = 1e-12
LOCAL_TOL = 1e-9

CHSH_LOCAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * np.sqrt(2.0)

P_PR = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0])

# cyclic sign patterns of the arcsin inequality, one minus sign each
_TLM_SIGNS = np.array(
    [
        [1.0, 1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0, 1.0],
    ]
)


class Space(str, enum.Enum):
    CORR4 = "corr4"
    FULL8 = "full8"

    @property
    def dim(self) -> int:
        return 4 if self is Space.CORR4 else 8

    @classmethod
    def of(cls, x) -> "Space":
        """Infer the space from the trailing dimension of ``x``."""
        n = np.shape(x)[-1]
        if n == 4:
            return cls.CORR4
        if n == 8:
            return cls.FULL8
        raise ValueError(f"behaviour must have 4 or 8 coordinates, got {n}")


class DomainError(ValueError):
    """A coordinate lies outside [-1, 1] beyond the clamping tolerance."""


class NotNonSignalling(ValueError):
    """A behaviour violates a positivity facet of the non-signalling polytope."""


def correlators(b) -> np.ndarray:
    """Return the four correlators of a Corr4 or Full8 behaviour (or batch)."""
    b = np.asarray(b, dtype=float)
    return b[..., -4:]


def embed_full8(c) -> np.ndarray:
    """Lift correlation-space points to Full8 with zero marginals."""
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[:-1] + (8,))
    out[..., 4:] = c
    return out


def _clamped(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if np.any(np.abs(c) > 1.0 + ARCSIN_CLAMP):
        raise DomainError("correlator magnitude exceeds 1")
    return np.clip(c, -1.0, 1.0)


def tlm_margin(b) -> np.ndarray | float:
    """Largest left-hand side of the arcsin inequalities minus pi.

    Negative inside the quantum set of correlation space, zero on its
    boundary and positive outside. Accepts a single Corr4 behaviour or an
    ``(n, 4)`` batch; Full8 input is reduced to its correlators.
    """
    s = np.arcsin(_clamped(correlators(b)))
    m = np.max(np.abs(s @ _TLM_SIGNS.T), axis=-1) - np.pi
    return float(m) if np.ndim(m) == 0 else m


def tlm_satisfied(b, tol: float = TLM_TOL):
    m = tlm_margin(b)
    return m <= tol


@dataclass(frozen=True)
class HalfspaceSystem:
    """Polytope ``{x : normals @ x <= offsets}``."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        if self.normals.shape[0] != self.offsets.shape[0]:
            raise ValueError("row count of normals must match offsets")

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def slack(self, x) -> np.ndarray:
        return self.offsets - np.asarray(x, dtype=float) @ self.normals.T

    def contains(self, x, tol: float = 1e-12):
        return np.all(self.slack(x) >= -tol, axis=-1)


def ns_system(space: Space | str) -> HalfspaceSystem:
    """Half-space description of the non-signalling polytope.

    Full8 uses the 16 positivity facets p(a,b|x,y) >= 0, Corr4 the 8 faces
    of the correlator cube.
    """
    space = Space(space)
    if space is Space.CORR4:
        eye = np.eye(4)
        return HalfspaceSystem(np.vstack([eye, -eye]), np.ones(8))
    rows = []
    for x, y, a, b in itertools.product((0, 1), repeat=4):
        row = np.zeros(8)
        row[4 + 2 * x + y] = (-1) ** (a + b + 1)
        row[x] = (-1) ** a
        row[2 + y] = (-1) ** b
        rows.append(row)
    return HalfspaceSystem(np.array(rows), np.ones(16))


def to_probabilities(b) -> np.ndarray:
    """Full8 behaviour -> table ``p[a, b, x, y]`` with outcome index 0 for +1."""
    b = np.asarray(b, dtype=float)
    p = np.empty(b.shape[:-1] + (2, 2, 2, 2))
    for a, bb, x, y in itertools.product((0, 1), repeat=4):
        sa, sb = (-1) ** a, (-1) ** bb
        p[..., a, bb, x, y] = (
            1.0 + sa * b[..., x] + sb * b[..., 2 + y] + sa * sb * b[..., 4 + 2 * x + y]
        ) / 4.0
    return p


def from_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.empty(p.shape[:-4] + (8,))
    s = np.array([1.0, -1.0])
    for x in (0, 1):
        out[..., x] = np.einsum("...ab,a->...", p[..., :, :, x, 0], s)
    for y in (0, 1):
        out[..., 2 + y] = np.einsum("...ab,b->...", p[..., :, :, 0, y], s)
    for x, y in itertools.product((0, 1), repeat=2):
        out[..., 4 + 2 * x + y] = np.einsum("...ab,a,b->...", p[..., :, :, x, y], s, s)
    return out


@dataclass(frozen=True)
class ChshVariant:
    """CHSH expression with a minus sign on one correlator and an overall sign.

    ``minus_position`` indexes the correlators in canonical order
    (A0B0, A0B1, A1B0, A1B1). The canonical inequality is ``(3, +1)``.
    """

    minus_position: int
    overall_sign: int = 1

    def __post_init__(self):
        if self.minus_position not in (0, 1, 2, 3) or self.overall_sign not in (1, -1):
            raise ValueError(f"invalid CHSH variant {self}")

    @property
    def coefficients(self) -> np.ndarray:
        """Correlator coefficients of the expression."""
        c = np.ones(4)
        c[self.minus_position] = -1.0
        return self.overall_sign * c

    @property
    def functional(self) -> np.ndarray:
        """The expression as a Full8 linear functional."""
        f = np.zeros(8)
        f[4:] = self.coefficients
        return f


CANONICAL = ChshVariant(3, 1)
CHSH_VARIANTS = tuple(ChshVariant(m, s) for s in (1, -1) for m in (3, 0, 1, 2))

# output flips (A0, A1, B0, B1) carrying the canonical expression to each variant
_VARIANT_FLIPS = {
    ChshVariant(3, 1): (0, 0, 0, 0),
    ChshVariant(1, 1): (0, 0, 0, 1),
    ChshVariant(2, 1): (0, 1, 0, 0),
    ChshVariant(0, 1): (1, 0, 0, 1),
    ChshVariant(3, -1): (1, 1, 0, 0),
    ChshVariant(1, -1): (1, 1, 0, 1),
    ChshVariant(2, -1): (1, 0, 0, 0),
    ChshVariant(0, -1): (0, 1, 0, 1),
}


def chsh_value(b, v: ChshVariant = CANONICAL):
    """Signed CHSH combination of the correlators of ``b``."""
    val = correlators(b) @ v.coefficients
    return float(val) if np.ndim(val) == 0 else val


def chsh_values(b) -> np.ndarray:
    """All 8 CHSH variants, shape ``(..., 8)`` in ``CHSH_VARIANTS`` order."""
    coeffs = np.array([v.coefficients for v in CHSH_VARIANTS])
    return correlators(b) @ coeffs.T


def relabel_signs(v: ChshVariant, space: Space | str = Space.FULL8) -> np.ndarray:
    """Diagonal of the output-relabelling map associated with variant ``v``."""
    fa0, fa1, fb0, fb1 = (-1.0) ** np.array(_VARIANT_FLIPS[v])
    marg = np.array([fa0, fa1, fb0, fb1])
    corr = np.array([fa0 * fb0, fa0 * fb1, fa1 * fb0, fa1 * fb1])
    if Space(space) is Space.CORR4:
        return corr
    return np.concatenate([marg, corr])


def relabel(b, v: ChshVariant) -> np.ndarray:
    """Apply the output relabelling exchanging the canonical facet with ``v``.

    Every map is an involution, so applying it twice returns ``b``.
    """
    b = np.asarray(b, dtype=float)
    return b * relabel_signs(v, Space.of(b))


def local_membership(b, tol: float = LOCAL_TOL):
    """True iff a non-signalling Full8 behaviour is local.

    In the CHSH scenario positivity plus the eight CHSH inequalities
    describe the local polytope completely.
    """
    b = np.asarray(b, dtype=float)
    if Space.of(b) is not Space.FULL8:
        raise ValueError("local membership needs a Full8 behaviour")
    if not np.all(ns_system(Space.FULL8).contains(b, tol=tol)):
        raise NotNonSignalling("behaviour violates a positivity facet")
    return np.all(chsh_values(b) <= CHSH_LOCAL_BOUND + tol, axis=-1)


def deterministic_behaviours() -> np.ndarray:
    """The 16 local deterministic Full8 behaviours."""
    pts = []
    for a0, a1, b0, b1 in itertools.product((1.0, -1.0), repeat=4):
        pts.append([a0, a1, b0, b1, a0 * b0, a0 * b1, a1 * b0, a1 * b1])
    return np.array(pts)


def saturating_vertices(v: ChshVariant = CANONICAL) -> np.ndarray:
    """The 8 deterministic behaviours attaining the local bound of ``v``."""
    det = deterministic_behaviours()
    return det[np.isclose(chsh_values(det)[:, CHSH_VARIANTS.index(v)], 2.0)]


def pr_box(v: ChshVariant = CANONICAL) -> np.ndarray:
    """PR box attaining the algebraic value 4 on variant ``v``."""
    return relabel(P_PR, v)


def tlm_boundary_radius(u, iters: int = 60) -> np.ndarray | float:
    """Largest ``lam`` with ``lam * u`` quantum, for Corr4 directions ``u``.

    The quantum set is convex and contains the origin, so the arcsin margin
    changes sign once along a ray; bisection is run on all rays at once.
    Rays that reach the correlator cube first stop at the cube face.
    """
    single = np.ndim(u) == 1
    u = np.atleast_2d(np.asarray(u, dtype=float))[..., -4:]
    hi = 1.0 / np.max(np.abs(u), axis=-1)
    lo = np.zeros_like(hi)
    inside = tlm_margin(u * hi[:, None]) <= 0.0
    lo[inside] = hi[inside]
    todo = ~inside
    for _ in range(iters):
        if not np.any(todo):
            break
        mid = 0.5 * (lo + hi)
        ok = tlm_margin(u * mid[:, None]) <= 0.0
        lo = np.where(todo & ok, mid, lo)
        hi = np.where(todo & ~ok, mid, hi)
    out = np.where(inside, lo, 0.5 * (lo + hi))
    return float(out[0]) if single else out
