"""Symbolic layout of assemblage moment matrices.

Bob's operator list is ``{1} U {B_{b|y} : b < |B| - 1}``. A level-``l`` block
is indexed by ``l``-tuples of that list; the entry at ``(r, c)`` is the
moment ``tr(rho_{a|x} w_c^dagger w_r)`` with ``w_r`` the ordered product of
the row tuple. Products are reduced with the projector rules
``B_{b|y} B_{b'|y} = delta_{bb'} B_{b|y}`` and every reduced word is classified
as the trace, an observable probability, an identically zero entry, or a
free (unobservable) moment.

Letters are small integers: ``0`` is the identity and ``1 + y*(nb-1) + b``
is the projector ``B_{b|y}`` (0-based ``y``, ``b``).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .scenario import BellScenario

__all__ = [
    "LayoutError",
    "OperatorSymbol",
    "canonical",
    "build_layout",
    "MomentLayout",
    "evaluate_block",
    "block_stats",
    "TRACE",
    "OBSERVED",
    "ZERO",
    "FREE",
]

LEVEL_CAP = 6

TRACE, OBSERVED, ZERO, FREE = "trace", "observed", "zero", "free"


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSymbol:
    """Identity (``setting is None``) or the projector ``B_{outcome|setting}``."""

    setting: int | None = None
    outcome: int | None = None

    @property
    def is_identity(self) -> bool:
        return self.setting is None

    def letter(self, nb: int) -> int:
        if self.is_identity:
            return 0
        return 1 + self.setting * (nb - 1) + self.outcome

    @classmethod
    def from_letter(cls, letter: int, nb: int) -> "OperatorSymbol":
        if letter == 0:
            return cls()
        y, b = divmod(letter - 1, nb - 1)
        return cls(y, b)

    def __str__(self) -> str:
        # 1-based in human-readable form
        return "1" if self.is_identity else f"B{self.outcome + 1}|{self.setting + 1}"


def canonical(word, nb: int) -> tuple[int, ...] | None:
    """Reduce a word of letters under projector algebra.

    Identities are dropped, ``PP -> P``, and adjacent projectors of the same
    setting with different outcomes annihilate the word (returns ``None``).
    """
    stack: list[int] = []
    for letter in word:
        if letter == 0:
            continue
        if stack:
            top = stack[-1]
            if top == letter:
                continue
            if (top - 1) // (nb - 1) == (letter - 1) // (nb - 1):
                return None
        stack.append(letter)
    return tuple(stack)


def _moment_key(word: tuple[int, ...]) -> tuple[int, ...]:
    rev = word[::-1]
    return min(word, rev)


@dataclass(frozen=True)
class Entry:
    kind: str
    setting: int = -1
    outcome: int = -1
    index: int = -1  # free-moment index

    def __str__(self) -> str:
        if self.kind == OBSERVED:
            return f"P(b={self.outcome + 1}|y={self.setting + 1})"
        if self.kind == FREE:
            return f"u{self.index + 1}"
        return self.kind


@dataclass(eq=False)
class MomentLayout:
    """Entry classification for one assemblage-moment-matrix block.

    Attributes
    ----------
    scenario, level
        Bell scenario (only Bob's cardinalities matter) and hierarchy level.
    row_words
        Every row label as a letter tuple: all ``l``-tuples followed by any
        extra words. Duplicates and annihilated words are kept so the block
        dimension is exactly ``(1 + |Y|(|B|-1))**l`` plus extras.
    moment_keys
        Distinct nonzero reduced words in order of first appearance; the
        empty word (trace) comes first, then single projectors, then free
        moments.
    index
        ``(dim, dim)`` int array; entry ``index[r, c]`` is the position of the
        moment in ``moment_keys`` or ``-1`` for a zero entry.
    """

    scenario: BellScenario
    level: int
    row_words: list[tuple[int, ...]]
    moment_keys: list[tuple[int, ...]]
    index: np.ndarray
    symmetrize: bool = True

    @property
    def dim(self) -> int:
        return len(self.row_words)

    @property
    def n_moments(self) -> int:
        return len(self.moment_keys)

    @cached_property
    def n_observed(self) -> int:
        return sum(1 for k in self.moment_keys if len(k) == 1)

    @property
    def n_free(self) -> int:
        return self.n_moments - 1 - self.n_observed

    def observed_index(self, y: int, b: int) -> int:
        """Moment position of the single projector ``B_{b|y}`` (``b < nb - 1``)."""
        letter = 1 + y * (self.scenario.nb - 1) + b
        return self._key_pos[(letter,)]

    @cached_property
    def _key_pos(self) -> dict:
        return {k: i for i, k in enumerate(self.moment_keys)}

    def classify(self, r: int, c: int) -> Entry:
        i = int(self.index[r, c])
        if i < 0:
            return Entry(ZERO)
        key = self.moment_keys[i]
        if not key:
            return Entry(TRACE)
        if len(key) == 1:
            s = OperatorSymbol.from_letter(key[0], self.scenario.nb)
            return Entry(OBSERVED, s.setting, s.outcome)
        return Entry(FREE, index=i - 1 - self.n_observed)

    @cached_property
    def reduced_rows(self) -> list[int]:
        """Representative rows with distinct nonzero reduced words.

        Duplicate rows/columns carry identical entries and annihilated row
        words give zero rows, so restricting a block to these rows changes
        nothing about positive semidefiniteness.
        """
        seen: dict = {}
        nb = self.scenario.nb
        for r, w in enumerate(self.row_words):
            cw = canonical(w, nb)
            if cw is None or cw in seen:
                continue
            seen[cw] = r
        return list(seen.values())

    def reduced_index(self) -> np.ndarray:
        rows = self.reduced_rows
        return self.index[np.ix_(rows, rows)]

    def pattern_matrices(self, reduced: bool = True) -> np.ndarray:
        """0/1 matrices, one per moment, stacked as ``(n_moments, n, n)``."""
        idx = self.reduced_index() if reduced else self.index
        n = idx.shape[0]
        out = np.zeros((self.n_moments, n, n))
        r, c = np.nonzero(idx >= 0)
        out[idx[r, c], r, c] = 1.0
        return out

    def symbol_matrix(self) -> list[list[str]]:
        return [[str(self.classify(r, c)) for c in range(self.dim)] for r in range(self.dim)]

    def to_json(self) -> dict:
        nb = self.scenario.nb
        words = [[str(OperatorSymbol.from_letter(l, nb)) for l in w] for w in self.row_words]
        return {
            "scenario": self.scenario.to_json(),
            "level": self.level,
            "dim": self.dim,
            "row_words": words,
            "n_free": self.n_free,
            "entries": self.symbol_matrix(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def build_layout(scenario: BellScenario, level: int, extra_words=(), symmetrize: bool = True,
                 level_cap: int = LEVEL_CAP) -> MomentLayout:
    """Build the level-``level`` block layout for Bob's side of ``scenario``.

    ``extra_words`` are appended to the tuple rows (letters or
    :class:`OperatorSymbol` sequences) to build intermediate levels.
    With ``symmetrize`` a word and its reversal share one real moment;
    otherwise they are kept apart (complex bookkeeping, for inspection).
    """
    if level < 1:
        raise LayoutError("level must be >= 1")
    if level > level_cap:
        raise LayoutError(f"level {level} exceeds the cap {level_cap}")
    nb = scenario.nb
    n_ops = 1 + scenario.ny * (nb - 1)
    rows = [tuple(t) for t in itertools.product(range(n_ops), repeat=level)]
    for w in extra_words:
        rows.append(tuple(s.letter(nb) if isinstance(s, OperatorSymbol) else int(s) for s in w))
    reduced = [canonical(w, nb) for w in rows]

    keys: dict[tuple[int, ...], int] = {(): 0}
    for letter in range(1, n_ops):
        keys[(letter,)] = len(keys)
    dim = len(rows)
    index = np.full((dim, dim), -1, dtype=np.int64)
    # free moments are numbered in a first pass and appended after the
    # observed ones so the trace/observed positions are fixed
    for r in range(dim):
        wr = reduced[r]
        if wr is None:
            continue
        for c in range(dim):
            wc = reduced[c]
            if wc is None:
                continue
            w = canonical(wc[::-1] + wr, nb)
            if w is None:
                continue
            key = _moment_key(w) if symmetrize else w
            pos = keys.get(key)
            if pos is None:
                pos = keys[key] = len(keys)
            index[r, c] = pos
    return MomentLayout(scenario, level, rows, list(keys), index, symmetrize)


def block_stats(layout: MomentLayout, scenario: BellScenario | None = None) -> tuple[int, int, int]:
    """``(number of blocks, block dimension, free moments per block)``."""
    sc = scenario or layout.scenario
    return sc.na * sc.nx, layout.dim, layout.n_free


def word_operator(word, bob_ops: list[np.ndarray], dim: int) -> np.ndarray:
    out = np.eye(dim, dtype=complex)
    for letter in word:
        if letter:
            out = out @ bob_ops[letter]
    return out


def bob_operator_list(bob, nb: int) -> list[np.ndarray]:
    """Operators indexed by letter: identity then ``B_{b|y}``, ``b < nb - 1``."""
    povms = bob.povms if hasattr(bob, "povms") else bob
    d = np.asarray(povms[0][0]).shape[0]
    ops = [np.eye(d, dtype=complex)]
    for povm in povms:
        for b in range(nb - 1):
            ops.append(np.asarray(povm[b], dtype=complex))
    return ops


def evaluate_block(layout: MomentLayout, rho: np.ndarray, bob, strict: bool = False) -> np.ndarray:
    """Numeric moment matrix ``chi[rho]`` for Bob's measurements.

    ``rho`` is one (subnormalised) state of the assemblage. With ``strict``
    the measurements must be projective, as the layout assumes.
    """
    nb = layout.scenario.nb
    ops = bob_operator_list(bob, nb)
    if strict:
        for op in ops[1:]:
            if not np.allclose(op @ op, op, atol=1e-9):
                raise LayoutError("Bob's measurements are not projective; dilate them first")
    d = ops[0].shape[0]
    words = np.array([word_operator(w, ops, d) for w in layout.row_words])
    rho = np.asarray(rho, dtype=complex)
    left = rho @ np.conj(np.swapaxes(words, 1, 2))  # rho w_c^dag
    # chi[r, c] = tr(rho w_c^dag w_r)
    return np.einsum("cij,rji->rc", left, words)
