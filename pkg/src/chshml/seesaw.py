"""Steered see-saw: distance from a target behaviour to realisations of fixed dimension.

Given observables, the best state is a convex problem; given the state and
one party's observables, the other party's pair is a convex problem too.
Alternating the two yields a non-increasing distance. Everything is done
in real arithmetic: in the CHSH scenario any realisation can be brought to
real observables by Jordan's lemma, after which the real part of the state
reproduces the same behaviour.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Space
from .rng import make_rng
from .sdp import LmiBlock, SdpError, SdpProblem, SdpStatus, norm_epigraph_block, solve

SEESAW_THRESHOLD = 1e-7
SWEEP_IMPROVEMENT = 1e-10
MAX_SWEEPS = 200


@dataclass
class Realization:
    """State on R^d (x) R^d and two dichotomic observables per party."""

    rho: np.ndarray
    alice: np.ndarray
    bob: np.ndarray

    @property
    def d(self) -> int:
        return self.alice.shape[-1]

    def validate(self, tol: float = 1e-9) -> None:
        if np.linalg.eigvalsh(self.rho)[0] < -tol or abs(np.trace(self.rho) - 1.0) > tol:
            raise ValueError("rho is not a density matrix")
        for op in (*self.alice, *self.bob):
            if np.max(np.abs(np.linalg.eigvalsh(op))) > 1.0 + tol:
                raise ValueError("observable norm exceeds 1")

    def embed(self, d: int) -> "Realization":
        """Same behaviour in a larger local dimension (padding with zeros)."""
        k = self.d
        if d < k:
            raise ValueError("cannot embed into a smaller dimension")
        pad = lambda op: np.pad(op, ((0, d - k), (0, d - k)))  # noqa: E731
        r4 = self.rho.reshape(k, k, k, k)
        big = np.zeros((d, d, d, d))
        big[:k, :k, :k, :k] = r4
        return Realization(
            big.reshape(d * d, d * d),
            np.array([pad(a) for a in self.alice]),
            np.array([pad(b) for b in self.bob]),
        )


@dataclass(frozen=True)
class SeesawConfig:
    d: int = 2
    seeds: int = 5
    threshold: float = SEESAW_THRESHOLD
    max_sweeps: int = MAX_SWEEPS
    min_improvement: float = SWEEP_IMPROVEMENT

    def __post_init__(self):
        if self.threshold <= 0 or self.d < 2:
            raise ValueError("need threshold > 0 and d >= 2")


@dataclass
class SeesawVerdict:
    in_qdd: bool
    best_distance: float
    best_realization: Realization | None
    seed_used: int
    distances: list[list[float]] = field(default_factory=list)
    failed_seeds: list[int] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "InQdd" if self.in_qdd else "Inconclusive"


def _coordinate_indices(space: Space) -> np.ndarray:
    return np.arange(8) if space is Space.FULL8 else np.arange(4, 8)


def coordinate_operators(alice, bob) -> np.ndarray:
    """The eight operators whose expectations form a Full8 behaviour."""
    d = alice.shape[-1]
    eye = np.eye(d)
    return np.array(
        [np.kron(alice[0], eye), np.kron(alice[1], eye), np.kron(eye, bob[0]), np.kron(eye, bob[1])]
        + [np.kron(alice[x], bob[y]) for x in (0, 1) for y in (0, 1)]
    )


def behaviour_of(r: Realization) -> np.ndarray:
    """Full8 behaviour of a realisation."""
    ops = coordinate_operators(r.alice, r.bob)
    return np.tensordot(ops, r.rho, axes=([1, 2], [1, 0]))


def _distance(r: Realization, target: np.ndarray) -> float:
    q = behaviour_of(r)[_coordinate_indices(Space.of(target))]
    return float(np.linalg.norm(q - target))


def random_observable(d: int, rng) -> np.ndarray:
    """``O diag(+-1) O^T`` with Haar-random orthogonal ``O`` and mixed signs."""
    if d < 2:
        raise ValueError("d must be at least 2")
    rng = make_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    while True:
        signs = rng.choice([-1.0, 1.0], size=d)
        if np.any(signs > 0) and np.any(signs < 0):
            break
    return (q * signs) @ q.T


def _clean_state(X: np.ndarray) -> np.ndarray:
    X = 0.5 * (X + X.T)
    w, v = np.linalg.eigh(X)
    w = np.clip(w, 0.0, None)
    X = (v * w) @ v.T
    return X / np.trace(X)


def _clean_observable(A: np.ndarray) -> np.ndarray:
    A = 0.5 * (A + A.T)
    w, v = np.linalg.eigh(A)
    return (v * np.clip(w, -1.0, 1.0)) @ v.T


def optimize_state(alice, bob, target, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Closest achievable behaviour over all states, for fixed observables.

    Solved through its dual: maximize ``lambda_min(sum w_k M_k) - w . p`` over
    the unit ball, whose block multiplier is the optimal state.
    """
    target = np.asarray(target, dtype=float)
    idx = _coordinate_indices(Space.of(target))
    ops = coordinate_operators(alice, bob)[idx]
    k, n = len(idx), ops.shape[-1]
    m = k + 1
    coeffs = np.concatenate([ops, -np.eye(n)[None]], axis=0)
    ball = norm_epigraph_block(m, np.zeros(k), np.vstack([np.eye(k), np.zeros((1, k))]), t_const=1.0)
    obj = np.concatenate([target, [-1.0]])
    sol = solve(SdpProblem(obj, [LmiBlock(np.zeros((n, n)), coeffs), ball]), tol=tol)
    _usable(sol, "state step")
    rho = _clean_state(sol.multipliers[0])
    q = np.tensordot(ops, rho, axes=([1, 2], [1, 0]))
    return rho, float(np.linalg.norm(q - target))


def _usable(sol, what: str) -> None:
    """Accept the best iterate of a stalled solve.

    The caller recomputes the distance of the cleaned iterate and only keeps
    it if the distance does not increase, so a slightly inaccurate step is
    harmless. Infeasible, unbounded or non-finite results are not.
    """
    if sol.ok:
        return
    bad = sol.status in (SdpStatus.INFEASIBLE, SdpStatus.UNBOUNDED) or sol.multipliers is None
    if bad or not np.all(np.isfinite(sol.y)):
        raise SdpError(sol, what)


def _sym_basis(d: int) -> np.ndarray:
    mats = []
    for a in range(d):
        for b in range(a, d):
            e = np.zeros((d, d))
            e[a, b] = e[b, a] = 1.0
            mats.append(e)
    return np.array(mats)


def optimize_observables(
    party: str, rho, alice, bob, target, tol: float = 1e-9
) -> tuple[np.ndarray, float]:
    """Best pair of observables for one party (``"alice"`` or ``"bob"``).

    Both observables are optimised jointly over ``-I <= O <= I``.
    """
    target = np.asarray(target, dtype=float)
    space = Space.of(target)
    d = alice.shape[-1]
    R = rho.reshape(d, d, d, d)
    if party == "alice":
        marg = np.einsum("ijkj->ik", R)
        cross = [np.einsum("ijkm,mj->ik", R, bob[y]) for y in (0, 1)]
        other = [np.trace(np.einsum("ijil->jl", R) @ bob[y]) for y in (0, 1)]
    elif party == "bob":
        marg = np.einsum("ijil->jl", R)
        cross = [np.einsum("ijml,mi->jl", R, alice[x]) for x in (0, 1)]
        other = [np.trace(np.einsum("ijkj->ik", R) @ alice[x]) for x in (0, 1)]
    else:
        raise ValueError("party must be 'alice' or 'bob'")
    marg = 0.5 * (marg + marg.T)
    cross = [0.5 * (c + c.T) for c in cross]

    basis = _sym_basis(d)
    p = basis.shape[0]
    m = 2 * p + 1
    # linear map variables -> Full8 coordinates
    lin = np.zeros((m, 8))
    const = np.zeros(8)
    tr_marg = np.tensordot(basis, marg, axes=([1, 2], [0, 1]))
    tr_cross = [np.tensordot(basis, c, axes=([1, 2], [0, 1])) for c in cross]
    for x in (0, 1):
        sl = slice(x * p, (x + 1) * p)
        own_marg = x if party == "alice" else 2 + x
        lin[sl, own_marg] = tr_marg
        for y in (0, 1):
            # correlator <A_x B_y>: own setting x, other setting y
            col = 4 + (2 * x + y if party == "alice" else 2 * y + x)
            lin[sl, col] = tr_cross[y]
    for y in (0, 1):
        const[(2 + y) if party == "alice" else y] = other[y]
    idx = _coordinate_indices(space)
    lin, const = lin[:, idx], const[idx]

    blocks = []
    eye = np.eye(d)
    for x in (0, 1):
        for sgn in (1.0, -1.0):
            coeffs = np.zeros((m, d, d))
            coeffs[x * p : (x + 1) * p] = -sgn * basis
            blocks.append(LmiBlock(eye, coeffs))
    blocks.append(norm_epigraph_block(m, const - target, lin, t_index=m - 1))
    obj = np.zeros(m)
    obj[-1] = 1.0
    sol = solve(SdpProblem(obj, blocks), tol=tol)
    _usable(sol, f"{party} step")
    ops = np.array(
        [_clean_observable(np.tensordot(sol.y[x * p : (x + 1) * p], basis, axes=1)) for x in (0, 1)]
    )
    r = Realization(rho, ops, bob) if party == "alice" else Realization(rho, alice, ops)
    return ops, _distance(r, target)


def _run_seed(target, cfg: SeesawConfig, rng) -> tuple[Realization, list[float]]:
    d = cfg.d
    alice = np.array([random_observable(d, rng) for _ in range(2)])
    bob = np.array([random_observable(d, rng) for _ in range(2)])
    rho, dist = optimize_state(alice, bob, target)
    current = Realization(rho, alice, bob)
    history = [dist]
    for _ in range(cfg.max_sweeps):
        if dist < cfg.threshold:
            break
        start = dist
        rho, dnew = optimize_state(current.alice, current.bob, target)
        if dnew <= dist:
            current, dist = Realization(rho, current.alice, current.bob), dnew
        ops, dnew = optimize_observables("alice", current.rho, current.alice, current.bob, target)
        if dnew <= dist:
            current, dist = Realization(current.rho, ops, current.bob), dnew
        ops, dnew = optimize_observables("bob", current.rho, current.alice, current.bob, target)
        if dnew <= dist:
            current, dist = Realization(current.rho, current.alice, ops), dnew
        history.append(dist)
        if start - dist < cfg.min_improvement:
            break
    return current, history


def steered_seesaw(target, cfg: SeesawConfig, rng) -> SeesawVerdict:
    """Try up to ``cfg.seeds`` random starts; stop at the first below threshold."""
    target = np.asarray(target, dtype=float)
    rng = make_rng(rng)
    best = SeesawVerdict(False, np.inf, None, -1)
    for seed in range(cfg.seeds):
        try:
            real, hist = _run_seed(target, cfg, rng)
        except SdpError:
            best.failed_seeds.append(seed)
            continue
        best.distances.append(hist)
        dist = _distance(real, target)
        if dist < best.best_distance:
            best.best_distance, best.best_realization, best.seed_used = dist, real, seed
        if dist < cfg.threshold:
            break
    best.in_qdd = best.best_distance < cfg.threshold
    return best


@dataclass
class RoundReport:
    round: int
    d: int
    seeds: int
    classified: int
    remaining: int
    wall_time: float


def round_protocol(points, schedule, rng, threshold: float = SEESAW_THRESHOLD, max_sweeps: int = MAX_SWEEPS):
    """Classify points in rounds of increasing effort.

    Each round ``(d, seeds)`` only sees points left unclassified by earlier
    rounds. Returns the dimension at which each point was certified (or
    ``None``) and one :class:`RoundReport` per round.
    """
    rng = make_rng(rng)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    found: list[int | None] = [None] * len(points)
    reports = []
    for k, (d, seeds) in enumerate(schedule, start=1):
        cfg = SeesawConfig(d=int(d), seeds=int(seeds), threshold=threshold, max_sweeps=max_sweeps)
        t0 = time.perf_counter()
        count = 0
        for i, p in enumerate(points):
            if found[i] is not None:
                continue
            if steered_seesaw(p, cfg, rng).in_qdd:
                found[i] = int(d)
                count += 1
        remaining = sum(f is None for f in found)
        reports.append(RoundReport(k, int(d), int(seeds), count, remaining, time.perf_counter() - t0))
    return found, reports


def write_round_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "d", "seeds", "classified", "remaining", "wall_time"])
        for r in reports:
            w.writerow([r.round, r.d, r.seeds, r.classified, r.remaining, f"{r.wall_time:.3f}"])
