"""NPA moment matrices for the CHSH scenario and the queries built on them.

Operators are dichotomic (A_x^2 = B_y^2 = 1) and the two parties commute,
so a word is a pair of alternating strings, one per party. Moment
matrices are taken real-symmetric: a word and its adjoint share one
variable.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Space
from .sdp import MAX_BLOCK_DIM, LmiBlock, SdpError, SdpProblem, solve

MEMBERSHIP_TOL = 1e-8


class LevelTooLarge(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Word:
    """Normal-form word: settings of Alice's then Bob's operators."""

    alice: tuple[int, ...] = ()
    bob: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.alice) + len(self.bob)

    @property
    def dagger(self) -> "Word":
        return Word(self.alice[::-1], self.bob[::-1])

    def __mul__(self, other: "Word") -> "Word":
        return Word(_reduce(self.alice + other.alice), _reduce(self.bob + other.bob))

    def __str__(self) -> str:
        s = "".join(f"A{x}" for x in self.alice) + "".join(f"B{y}" for y in self.bob)
        return s or "1"

    @classmethod
    def parse(cls, text: str) -> "Word":
        """Parse strings like ``"B0A1"`` (any party order) into normal form."""
        text = text.replace(" ", "")
        if text in ("", "1"):
            return cls()
        letters = [(text[i], int(text[i + 1])) for i in range(0, len(text), 2)]
        return canonicalize(letters)


def _reduce(seq) -> tuple[int, ...]:
    out: list[int] = []
    for s in seq:
        if out and out[-1] == s:
            out.pop()
        else:
            out.append(s)
    return tuple(out)


def canonicalize(letters) -> Word:
    """Normal form of a product of letters ``(party, setting)``.

    Accepts a :class:`Word` or an iterable of pairs such as ``("A", 0)``.
    Squares cancel and Bob's letters commute past Alice's.
    """
    if isinstance(letters, Word):
        return Word(_reduce(letters.alice), _reduce(letters.bob))
    alice = [int(s) for p, s in letters if str(p).upper() == "A"]
    bob = [int(s) for p, s in letters if str(p).upper() == "B"]
    return Word(_reduce(alice), _reduce(bob))


def _moment_key(w: Word) -> Word:
    return min(w, w.dagger)


class LevelKind(str, enum.Enum):
    PURE = "pure"
    ONE_PLUS_AB = "1+ab"


@dataclass(frozen=True)
class NpaLevel:
    kind: LevelKind = LevelKind.PURE
    n: int = 1

    @classmethod
    def parse(cls, text) -> "NpaLevel":
        if isinstance(text, NpaLevel):
            return text
        t = str(text).strip().lower().replace(" ", "")
        if t in ("1ab", "1+ab", "oneplusab"):
            return ONE_PLUS_AB
        return cls(LevelKind.PURE, int(t))

    def __str__(self) -> str:
        return "1ab" if self.kind is LevelKind.ONE_PLUS_AB else str(self.n)


ONE_PLUS_AB = NpaLevel(LevelKind.ONE_PLUS_AB, 1)


def _alternating(length: int):
    if length == 0:
        return [()]
    return [tuple((s + i) % 2 for i in range(length)) for s in (0, 1)]


def level_words(level: NpaLevel) -> list[Word]:
    """Ordered, duplicate-free word list generating the moment matrix."""
    if level.kind is LevelKind.ONE_PLUS_AB:
        base = level_words(NpaLevel(LevelKind.PURE, 1))
        return base + [Word((x,), (y,)) for x, y in itertools.product((0, 1), repeat=2)]
    words = []
    for total in range(level.n + 1):
        for la in range(total, -1, -1):
            for a in _alternating(la):
                for b in _alternating(total - la):
                    words.append(Word(a, b))
    return words


# coordinate index of every word that is a behaviour entry (Full8 order)
_FULL8_INDEX = {
    Word((0,), ()): 0,
    Word((1,), ()): 1,
    Word((), (0,)): 2,
    Word((), (1,)): 3,
    Word((0,), (0,)): 4,
    Word((0,), (1,)): 5,
    Word((1,), (0,)): 6,
    Word((1,), (1,)): 7,
}


@dataclass(frozen=True)
class MomentStructure:
    """Symbolic moment matrix ``Gamma(b, y) = const + sum b_k E_k + sum y_j F_j``.

    ``entries[i][j]`` is ``("one",)``, ``("coord", k)``, ``("zero",)`` or
    ``("free", j)``.
    """

    level: NpaLevel
    space: Space
    words: tuple[Word, ...]
    entries: tuple[tuple[tuple, ...], ...]
    free_words: tuple[Word, ...]
    constant: np.ndarray
    coord_mats: np.ndarray
    free_mats: np.ndarray

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def num_free(self) -> int:
        return len(self.free_words)

    def gamma(self, b, y=None) -> np.ndarray:
        g = self.constant + np.tensordot(np.asarray(b, dtype=float), self.coord_mats, axes=1)
        if y is not None and self.num_free:
            g = g + np.tensordot(np.asarray(y, dtype=float), self.free_mats, axes=1)
        return g


@lru_cache(maxsize=None)
def build_structure(level: NpaLevel | str | int, space: Space | str = Space.FULL8) -> MomentStructure:
    level = NpaLevel.parse(level)
    space = Space(space)
    words = level_words(level)
    n = len(words)
    if n > MAX_BLOCK_DIM:
        raise LevelTooLarge(f"level {level} needs a {n}x{n} moment matrix")
    offset = 4 if space is Space.CORR4 else 0
    free_index: dict[Word, int] = {}
    entries = []
    constant = np.zeros((n, n))
    coord = np.zeros((space.dim, n, n))
    free_cells: list[list[tuple[int, int]]] = []
    for i, wi in enumerate(words):
        row = []
        for j, wj in enumerate(words):
            p = wi.dagger * wj
            if len(p) == 0:
                row.append(("one",))
                constant[i, j] = 1.0
            elif p in _FULL8_INDEX:
                k = _FULL8_INDEX[p] - offset
                if k < 0:
                    row.append(("zero",))
                else:
                    row.append(("coord", k))
                    coord[k, i, j] = 1.0
            else:
                key = _moment_key(p)
                if key not in free_index:
                    free_index[key] = len(free_index)
                    free_cells.append([])
                row.append(("free", free_index[key]))
                free_cells[free_index[key]].append((i, j))
        entries.append(tuple(row))
    free = np.zeros((len(free_index), n, n))
    for f, cells in enumerate(free_cells):
        for i, j in cells:
            free[f, i, j] = 1.0
    free_words = tuple(sorted(free_index, key=free_index.get))
    return MomentStructure(
        level, space, tuple(words), tuple(entries), free_words, constant, coord, free
    )


def _check(sol, what):
    if not sol.ok:
        raise SdpError(sol, what)
    return sol


def membership_problem(b, level, space=None) -> SdpProblem:
    """``max t`` such that ``Gamma(b, y) - t I >= 0`` (variables ``(y, t)``)."""
    b = np.asarray(b, dtype=float)
    st = build_structure(NpaLevel.parse(level), space or Space.of(b))
    n, nf = st.size, st.num_free
    coeffs = np.concatenate([st.free_mats, -np.eye(n)[None]], axis=0)
    obj = np.zeros(nf + 1)
    obj[-1] = -1.0
    return SdpProblem(obj, [LmiBlock(st.gamma(b), coeffs)])


def membership_slack(b, level="1ab", tol: float = 1e-9) -> float:
    """Largest ``t`` with ``Gamma(b, y) - t I`` PSD for some free moments.

    ``b`` belongs to the relaxation iff the result is at least
    ``-MEMBERSHIP_TOL``.
    """
    sol = _check(solve(membership_problem(b, level), tol=tol), "membership SDP")
    return float(sol.y[-1])


def is_member(b, level="1ab", tol: float = MEMBERSHIP_TOL) -> bool:
    return membership_slack(b, level) >= -tol


def max_lambda(u, level="1ab", tol: float = 1e-9) -> float:
    """Largest ``lam >= 0`` with ``lam * u`` inside the level's relaxation."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    st = build_structure(NpaLevel.parse(level), Space.of(u))
    d = np.tensordot(u, st.coord_mats, axes=1)
    coeffs = np.concatenate([d[None], st.free_mats], axis=0)
    obj = np.zeros(1 + st.num_free)
    obj[0] = -1.0
    sol = _check(solve(SdpProblem(obj, [LmiBlock(st.constant, coeffs)]), tol=tol), "boundary SDP")
    return float(sol.y[0])


def max_functional(c, level="1", tol: float = 1e-9) -> float:
    """Maximum of ``c . b`` over the level's relaxation."""
    c = np.asarray(c, dtype=float)
    st = build_structure(NpaLevel.parse(level), Space.of(c))
    coeffs = np.concatenate([st.coord_mats, st.free_mats], axis=0)
    obj = np.concatenate([-c, np.zeros(st.num_free)])
    sol = _check(solve(SdpProblem(obj, [LmiBlock(st.constant, coeffs)]), tol=tol), "functional SDP")
    return float(c @ sol.y[: c.shape[0]])


def npa_oracle(level="1ab", tol: float = MEMBERSHIP_TOL):
    """Vectorised membership oracle returning a boolean per row."""
    level = NpaLevel.parse(level)

    def oracle(points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([membership_slack(p, level) >= -tol for p in pts], dtype=bool)

    oracle.__name__ = f"npa_{level}"
    return oracle
