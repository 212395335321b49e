"""Small dense semidefinite programming.

Problems are stated in linear-matrix-inequality form::

    minimize    c . y
    subject to  F0_k + sum_i y_i F_ik  >= 0     for every block k
                A y = b                          (optional)

and solved with an infeasible-start primal-dual path-following method
using Nesterov-Todd scaling and Mehrotra's predictor-corrector. The
Lagrange multipliers ``X_k`` of the blocks are returned as well, so a
problem can equally be read from the multiplier side

    maximize  -sum_k <F0_k, X_k>   s.t.  sum_k <F_ik, X_k> = c_i,  X_k >= 0.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

MAX_BLOCK_DIM = 64


class SdpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


class SdpError(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, solution: "SdpSolution", what: str = "SDP"):
        super().__init__(f"{what} ended with status {solution.status.value}")
        self.solution = solution


@dataclass(frozen=True)
class LmiBlock:
    """``constant + sum_i y_i coeffs[i] >= 0`` for one symmetric block."""

    constant: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.constant, dtype=float)
        f = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("block constant must be square")
        n = c.shape[0]
        if f.ndim != 3 or f.shape[1:] != (n, n):
            raise ValueError(f"block coefficients must have shape (m, {n}, {n})")
        if n > MAX_BLOCK_DIM:
            raise ValueError(f"block dimension {n} exceeds the ceiling {MAX_BLOCK_DIM}")
        object.__setattr__(self, "constant", 0.5 * (c + c.T))
        object.__setattr__(self, "coeffs", 0.5 * (f + f.transpose(0, 2, 1)))

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, y) -> np.ndarray:
        return self.constant + np.tensordot(np.asarray(y, dtype=float), self.coeffs, axes=1)


@dataclass
class SdpProblem:
    objective: np.ndarray
    blocks: list[LmiBlock]
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        m = self.objective.shape[0]
        for blk in self.blocks:
            if blk.coeffs.shape[0] != m:
                raise ValueError("every block needs one coefficient matrix per variable")
        if (self.eq_matrix is None) != (self.eq_rhs is None):
            raise ValueError("equality matrix and right-hand side go together")
        if self.eq_matrix is not None:
            self.eq_matrix = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
            self.eq_rhs = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float))
            if self.eq_matrix.shape != (self.eq_rhs.shape[0], m):
                raise ValueError("equality matrix has the wrong shape")

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]


@dataclass
class SdpSolution:
    status: SdpStatus
    y: np.ndarray
    primal_objective: float
    dual_objective: float
    duality_gap: float
    min_eigenvalues: tuple[float, ...]
    multipliers: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is SdpStatus.OPTIMAL


def norm_epigraph_block(
    num_vars: int,
    residual_const,
    residual_coeffs,
    t_index: int | None = None,
    t_const: float = 0.0,
) -> LmiBlock:
    """Arrow block ``[[t I, r], [r^T, t]]``, PSD exactly when ``||r||_2 <= t``.

    ``r = residual_const + residual_coeffs.T @ y`` with ``residual_coeffs`` of
    shape ``(num_vars, k)``. ``t`` is the variable ``y[t_index]`` when given,
    plus the constant ``t_const``.
    """
    r0 = np.atleast_1d(np.asarray(residual_const, dtype=float))
    k = r0.shape[0]
    rc = np.asarray(residual_coeffs, dtype=float).reshape(num_vars, k)
    const = np.zeros((k + 1, k + 1))
    const[np.arange(k + 1), np.arange(k + 1)] = t_const
    const[:k, k] = const[k, :k] = r0
    coeffs = np.zeros((num_vars, k + 1, k + 1))
    coeffs[:, :k, k] = rc
    coeffs[:, k, :k] = rc
    if t_index is not None:
        coeffs[t_index, np.arange(k + 1), np.arange(k + 1)] += 1.0
    return LmiBlock(const, coeffs)


def _solve_reduced(c, F0s, Fs, tol, max_iter, debug):
    """Core iteration on a problem without equality constraints."""
    m = c.shape[0]
    dims = [f.shape[0] for f in F0s]
    ntot = float(sum(dims))
    nrm_c = 1.0 + np.linalg.norm(c)
    nrm_F0 = 1.0 + np.sqrt(sum(np.sum(f * f) for f in F0s))

    Xs, Zs = [], []
    for F0, F in zip(F0s, Fs):
        n = F0.shape[0]
        fn = np.sqrt(np.sum(F * F, axis=(1, 2)))
        xi = max(10.0, np.sqrt(n), np.sqrt(n) * np.max((1.0 + np.abs(c)) / (1.0 + fn)))
        eta = max(10.0, np.sqrt(n), np.max(fn), np.linalg.norm(F0))
        Xs.append(xi * np.eye(n))
        Zs.append(eta * np.eye(n))
    y = np.zeros(m)

    best = None
    status = SdpStatus.MAX_ITERATIONS
    stall = 0
    it = 0
    for it in range(max_iter + 1):
        Fy = [np.tensordot(y, F, axes=1) for F in Fs]
        rp = c - sum(np.tensordot(F, X, axes=([1, 2], [0, 1])) for F, X in zip(Fs, Xs))
        Rds = [F0 + fy - Z for F0, fy, Z in zip(F0s, Fy, Zs)]
        pobj = float(c @ y)
        dobj = -float(sum(np.sum(F0 * X) for F0, X in zip(F0s, Xs)))
        xz = float(sum(np.sum(X * Z) for X, Z in zip(Xs, Zs)))
        mu = xz / ntot
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / nrm_c
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rds)) / nrm_F0
        err = max(relgap, pinf, dinf, xz / (1.0 + abs(pobj) + abs(dobj)))
        if debug:
            # complementarity part of the gap; equals pobj - dobj once feasible
            assert xz >= -1e-12 * (1.0 + abs(pobj)), "negative complementarity"
            if max(pinf, dinf) < tol:
                assert pobj >= dobj - 10 * tol * (1.0 + abs(pobj) + abs(dobj)), "weak duality"
        if best is None or err < best[0]:
            best = (err, y.copy(), [X.copy() for X in Xs], pobj, dobj)
        if err <= tol:
            status = SdpStatus.OPTIMAL
            break
        xnorm = max(np.linalg.norm(X) for X in Xs)
        if xnorm > 1e10 and dobj > 0 and np.linalg.norm(rp) < 1e-6 * xnorm:
            status = SdpStatus.INFEASIBLE
            break
        if np.linalg.norm(y) > 1e10 and pobj < -1e8 and dinf < 1e-6:
            status = SdpStatus.UNBOUNDED
            break
        if it == max_iter:
            break

        try:
            Gs, Ds, Fts, Rdts = [], [], [], []
            M = np.zeros((m, m))
            for X, Z, F, Rd in zip(Xs, Zs, Fs, Rds):
                Lx = np.linalg.cholesky(X)
                Lz = np.linalg.cholesky(Z)
                _, s, vt = np.linalg.svd(Lz.T @ Lx)
                G = (Lx @ vt.T) / np.sqrt(s)
                Ft = np.matmul(np.matmul(G.T, F), G)
                Ff = Ft.reshape(m, -1)
                M += Ff @ Ff.T
                Gs.append(G)
                Ds.append(s)
                Fts.append(Ft)
                Rdts.append(G.T @ Rd @ G)
            try:
                cho = sla.cho_factor(M, check_finite=False)
                msolve = lambda r: sla.cho_solve(cho, r, check_finite=False)  # noqa: E731
            except np.linalg.LinAlgError:
                msolve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731
        except np.linalg.LinAlgError:
            status = SdpStatus.NUMERICAL_FAILURE
            break

        def direction(Us):
            rhs = -rp.copy()
            for Ft, U, Rdt in zip(Fts, Us, Rdts):
                rhs += np.tensordot(Ft, U - Rdt, axes=([1, 2], [0, 1]))
            dy = msolve(rhs)
            for _ in range(2):
                dZt = [Rdt + np.tensordot(dy, Ft, axes=1) for Rdt, Ft in zip(Rdts, Fts)]
                dXt = [U - dz for U, dz in zip(Us, dZt)]
                # iterative refinement of the Schur solve against the primal equation
                res = sum(np.tensordot(Ft, dx, axes=([1, 2], [0, 1])) for Ft, dx in zip(Fts, dXt)) - rp
                if np.linalg.norm(res) <= 1e-14 * (1.0 + np.linalg.norm(rp)):
                    break
                dy = dy + msolve(res)
            else:
                dZt = [Rdt + np.tensordot(dy, Ft, axes=1) for Rdt, Ft in zip(Rdts, Fts)]
                dXt = [U - dz for U, dz in zip(Us, dZt)]
            return dy, dXt, dZt

        def max_step(D, dM):
            isd = 1.0 / np.sqrt(D)
            lam = np.linalg.eigvalsh(isd[:, None] * dM * isd[None, :])[0]
            return np.inf if lam >= 0 else -1.0 / lam

        # predictor
        Us = [-np.diag(D) for D in Ds]
        dy, dXt, dZt = direction(Us)
        ap = min(1.0, min(max_step(D, d) for D, d in zip(Ds, dXt)))
        ad = min(1.0, min(max_step(D, d) for D, d in zip(Ds, dZt)))
        mu_aff = sum(
            np.sum((np.diag(D) + ap * dx) * (np.diag(D) + ad * dz))
            for D, dx, dz in zip(Ds, dXt, dZt)
        ) / ntot
        sigma = min(1.0, max(0.0, mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector
        Us = []
        for D, dx, dz in zip(Ds, dXt, dZt):
            H = dx @ dz
            U = -(H + H.T)
            U[np.diag_indices_from(U)] += 2.0 * sigma * mu - 2.0 * D * D
            Us.append(U / (D[:, None] + D[None, :]))
        dy, dXt, dZt = direction(Us)
        ap = min(max_step(D, d) for D, d in zip(Ds, dXt))
        ad = min(max_step(D, d) for D, d in zip(Ds, dZt))
        gamma = 0.9 + 0.09 * min(1.0, ap, ad)
        # a common step keeps the primal and dual residuals shrinking together
        ap = ad = min(ap, ad)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if ap < 1e-10 and ad < 1e-10:
            stall += 1
            if stall >= 3:
                status = SdpStatus.NUMERICAL_FAILURE
                break
        else:
            stall = 0

        for k in range(len(Xs)):
            dX = Gs[k] @ dXt[k] @ Gs[k].T
            dZ = Rds[k] + np.tensordot(dy, Fs[k], axes=1)
            X = Xs[k] + ap * dX
            Z = Zs[k] + ad * dZ
            Xs[k] = 0.5 * (X + X.T)
            Zs[k] = 0.5 * (Z + Z.T)
        y = y + ad * dy

    if status is SdpStatus.OPTIMAL or status is SdpStatus.INFEASIBLE or status is SdpStatus.UNBOUNDED:
        pobj = float(c @ y)
        dobj = -float(sum(np.sum(F0 * X) for F0, X in zip(F0s, Xs)))
        return status, y, Xs, pobj, dobj, it
    _, y, Xs, pobj, dobj = best
    return status, y, Xs, pobj, dobj, it


def solve(
    problem: SdpProblem,
    tol: float = 1e-9,
    max_iter: int = 200,
    debug: bool | None = None,
) -> SdpSolution:
    """Solve an LMI problem; deterministic for identical input.

    ``debug`` (default from the ``CHSHML_SDP_DEBUG`` environment variable)
    asserts non-negative complementarity on every iterate and weak duality
    on every feasible one.
    """
    if debug is None:
        debug = bool(os.environ.get("CHSHML_SDP_DEBUG"))
    c = problem.objective
    F0s = [b.constant for b in problem.blocks]
    Fs = [b.coeffs for b in problem.blocks]

    y0 = np.zeros(problem.num_vars)
    N = np.eye(problem.num_vars)
    if problem.eq_matrix is not None:
        A, b = problem.eq_matrix, problem.eq_rhs
        y0 = np.linalg.lstsq(A, b, rcond=None)[0]
        if np.linalg.norm(A @ y0 - b) > 1e-9 * (1.0 + np.linalg.norm(b)):
            return _finish(problem, SdpStatus.INFEASIBLE, y0, [], np.nan, np.nan, 0)
        N = sla.null_space(A)
        F0s = [F0 + np.tensordot(y0, F, axes=1) for F0, F in zip(F0s, Fs)]
        Fs = [np.tensordot(N.T, F, axes=1) for F in Fs]
        c = N.T @ c
        shift = float(problem.objective @ y0)
    else:
        shift = 0.0

    if c.shape[0] == 0:
        y = y0
        lam = min((np.linalg.eigvalsh(F0)[0] for F0 in F0s), default=0.0)
        status = SdpStatus.OPTIMAL if lam >= -tol else SdpStatus.INFEASIBLE
        Xs = [np.zeros_like(F0) for F0 in F0s]
        obj = float(problem.objective @ y)
        return _finish(problem, status, y, Xs, obj, obj, 0)

    status, z, Xs, pobj, dobj, it = _solve_reduced(c, F0s, Fs, tol, max_iter, debug)
    y = y0 + N @ z
    return _finish(problem, status, y, Xs, pobj + shift, dobj + shift, it)


def _finish(problem, status, y, Xs, pobj, dobj, it) -> SdpSolution:
    mins = tuple(float(np.linalg.eigvalsh(b.evaluate(y))[0]) for b in problem.blocks)
    return SdpSolution(
        status=status,
        y=np.asarray(y, dtype=float),
        primal_objective=float(pobj),
        dual_objective=float(dobj),
        duality_gap=float(pobj - dobj),
        min_eigenvalues=mins,
        multipliers=list(Xs),
        iterations=int(it),
    )


def dump_sdpa(problem: SdpProblem, path) -> None:
    """Write ``problem`` in SDPA sparse format for cross-checking.

    SDPA minimizes ``c.x`` subject to ``sum_i x_i F_i - F_0 >= 0``, so the
    constant blocks are written with flipped sign. Equality rows become a
    diagonal block holding ``A y - b >= 0`` and ``b - A y >= 0``.
    """
    m = problem.num_vars
    blocks = [(b.constant, b.coeffs) for b in problem.blocks]
    dims = [b.dim for b in problem.blocks]
    if problem.eq_matrix is not None:
        A, rhs = problem.eq_matrix, problem.eq_rhs
        k = A.shape[0]
        const = np.diag(np.concatenate([-rhs, rhs]))
        coeffs = np.zeros((m, 2 * k, 2 * k))
        for i in range(m):
            coeffs[i] = np.diag(np.concatenate([A[:, i], -A[:, i]]))
        blocks.append((const, coeffs))
        dims.append(-2 * k)
    lines = ['"chshml LMI problem"', str(m), str(len(blocks))]
    lines.append(" ".join(str(d) for d in dims))
    lines.append(" ".join(repr(float(v)) for v in problem.objective))
    for bi, (const, coeffs) in enumerate(blocks, start=1):
        mats = [-const] + list(coeffs)
        for mi, mat in enumerate(mats):
            rows, cols = np.nonzero(np.triu(mat))
            for r, cc in zip(rows, cols):
                lines.append(f"{mi} {bi} {r + 1} {cc + 1} {float(mat[r, cc])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sdpa(path) -> SdpProblem:
    """Read a problem written by :func:`dump_sdpa` (equality blocks stay LMIs)."""
    with open(path, encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and ln.strip()[0] not in "\"*"]
    m = int(raw[0])
    nblocks = int(raw[1])
    dims = [abs(int(d)) for d in raw[2].replace(",", " ").split()[:nblocks]]
    c = np.array([float(v) for v in raw[3].replace(",", " ").split()[:m]])
    mats = [[np.zeros((d, d)) for d in dims] for _ in range(m + 1)]
    for ln in raw[4:]:
        mi, bi, r, cc, v = ln.split()
        mat = mats[int(mi)][int(bi) - 1]
        r, cc, v = int(r) - 1, int(cc) - 1, float(v)
        mat[r, cc] = mat[cc, r] = v
    blocks = [
        LmiBlock(-mats[0][k], np.array([mats[i + 1][k] for i in range(m)]).reshape(m, dims[k], dims[k]))
        for k in range(nblocks)
    ]
    return SdpProblem(c, blocks)
