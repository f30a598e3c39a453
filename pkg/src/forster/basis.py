"""Collective quasimolecular basis for i atoms sharing the levels P, S and S'."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from math import factorial

MAX_ATOMS = 8


class BasisError(ValueError):
    """Raised when a basis is requested outside the supported atom-count range."""


class AtomLevel(enum.IntEnum):
    """Single-atom levels; the integer value fixes the ordering P < S < Sp."""

    P = 0   # 37P3/2, |M_J| = 1/2
    S = 1   # 37S1/2
    Sp = 2  # 38S1/2

    @property
    def symbol(self) -> str:
        return "S'" if self is AtomLevel.Sp else self.name


@dataclass(frozen=True)
class CollectiveState:
    levels: tuple[AtomLevel, ...]
    m: int

    def __post_init__(self):
        n_s = self.levels.count(AtomLevel.S)
        n_sp = self.levels.count(AtomLevel.Sp)
        if n_s != n_sp or n_s != self.m:
            raise BasisError(
                f"invalid collective state {self.label}: count(S)={n_s}, count(S')={n_sp}, m={self.m}"
            )

    @classmethod
    def from_levels(cls, levels) -> "CollectiveState":
        levels = tuple(AtomLevel(lv) for lv in levels)
        return cls(levels, levels.count(AtomLevel.S))

    @property
    def label(self) -> str:
        return "".join(lv.symbol for lv in self.levels)

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class CollectiveBasis:
    i: int
    states: tuple[CollectiveState, ...]
    index: dict = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def flip_counts(self):
        import numpy as np

        return np.array([s.m for s in self.states], dtype=int)

    def lookup(self, state: CollectiveState) -> int:
        return self.index[state.levels]


def basis_size(i: int) -> int:
    """Closed-form number of collective states: sum over m of i!/((i-2m)! m! m!)."""
    return sum(factorial(i) // (factorial(i - 2 * m) * factorial(m) ** 2) for m in range(i // 2 + 1))


def enumerate_states(i: int) -> CollectiveBasis:
    """Enumerate all level assignments of ``i`` atoms with equal S and S' counts.

    States are ordered lexicographically in their levels (P < S < S'), so the
    all-P state is always first.
    """
    if not isinstance(i, int) or isinstance(i, bool) or not 1 <= i <= MAX_ATOMS:
        raise BasisError(f"atom count must satisfy 1 <= i <= {MAX_ATOMS}, got {i!r}")
    states = []
    for levels in itertools.product(AtomLevel, repeat=i):
        n_s = levels.count(AtomLevel.S)
        if n_s == levels.count(AtomLevel.Sp):
            states.append(CollectiveState(levels, n_s))
    index = {s.levels: k for k, s in enumerate(states)}
    return CollectiveBasis(i, tuple(states), index)


def flip_count(state: CollectiveState) -> int:
    return state.levels.count(AtomLevel.S)
