"""Monotone simple games over sensors and the vote aggregation function.

Coalitions are bitmasks: player ``i`` (0-based) is bit ``1 << i``.  A game is
stored as a boolean lookup table over all ``2**p`` coalitions, so aggregating
a vote vector is a single index.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

MAX_PLAYERS = 24


class GameError(ValueError):
    pass


class NotMonotone(GameError):
    def __init__(self, winner: int, superset: int):
        super().__init__(
            f"coalition {sorted(members(winner))} wins but its superset "
            f"{sorted(members(superset))} loses")
        self.winner = winner
        self.superset = superset


class EmptyWins(GameError):
    def __init__(self):
        super().__init__("the empty coalition must lose")


class FullLoses(GameError):
    def __init__(self):
        super().__init__("the grand coalition must win")


def mask_of(coalition: Iterable[int]) -> int:
    m = 0
    for i in coalition:
        m |= 1 << int(i)
    return m


def members(mask: int) -> frozenset[int]:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def votes_mask(votes) -> int:
    return mask_of(i for i, v in enumerate(votes) if v)


class SimpleGame:
    """A monotone simple game on players ``0..p-1``."""

    def __init__(self, p: int, table: np.ndarray, name: str = "custom"):
        self.p = p
        self.table = table
        self.table.setflags(write=False)
        self.name = name

    @property
    def winning(self) -> frozenset[int]:
        return frozenset(int(m) for m in np.flatnonzero(self.table))

    def wins(self, coalition) -> bool:
        if not isinstance(coalition, (int, np.integer)):
            coalition = mask_of(coalition)
        return bool(self.table[coalition])

    def __repr__(self):
        return f"SimpleGame(p={self.p}, {self.name})"


def _check_p(p: int):
    if not 1 <= p <= MAX_PLAYERS:
        raise GameError(f"player count must lie in [1, {MAX_PLAYERS}], got {p}")


def _first_violation(table: np.ndarray, p: int):
    for i in range(p):
        bit = 1 << i
        idx = np.arange(len(table))
        without = idx[(idx & bit) == 0]
        bad = table[without] & ~table[without | bit]
        if bad.any():
            s = int(without[np.argmax(bad)])
            return s, s | bit
    return None


def make_game(p: int, winning: Iterable, name: str = "custom") -> SimpleGame:
    """Validate a family of winning coalitions (bitmasks or iterables of players).

    The family must already be monotone; it is never completed silently.
    """
    _check_p(p)
    table = np.zeros(1 << p, dtype=bool)
    for c in winning:
        m = int(c) if isinstance(c, (int, np.integer)) else mask_of(c)
        if m >> p:
            raise GameError(f"coalition {sorted(members(m))} names a player >= {p}")
        table[m] = True
    if table[0]:
        raise EmptyWins()
    if not table[-1]:
        raise FullLoses()
    bad = _first_violation(table, p)
    if bad is not None:
        raise NotMonotone(*bad)
    return SimpleGame(p, table, name)


def from_minimal(p: int, minimal: Iterable, name: str = "custom") -> SimpleGame:
    """Game whose winning coalitions are the supersets of ``minimal``."""
    _check_p(p)
    table = np.zeros(1 << p, dtype=bool)
    idx = np.arange(1 << p)
    for c in minimal:
        m = int(c) if isinstance(c, (int, np.integer)) else mask_of(c)
        if m == 0:
            raise EmptyWins()
        if m >> p:
            raise GameError(f"coalition {sorted(members(m))} names a player >= {p}")
        table |= (idx & m) == m
    if not table[-1]:
        raise FullLoses()
    return SimpleGame(p, table, name)


def majority(p: int) -> SimpleGame:
    idx = np.arange(1 << p)
    sizes = np.array([bin(m).count("1") for m in idx])
    return make_game(p, idx[2 * sizes > p], f"majority({p})")


def unanimity(p: int) -> SimpleGame:
    return make_game(p, [(1 << p) - 1], f"unanimity({p})")


def dictator(p: int, i: int) -> SimpleGame:
    if not 0 <= i < p:
        raise GameError(f"dictator {i} outside players 0..{p - 1}")
    return from_minimal(p, [1 << i], f"dictator({i})")


def weighted_threshold(weights: Sequence[float], quota: float) -> SimpleGame:
    """Coalitions with total weight >= quota win (weights must be non-negative)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise GameError("weights must be non-negative")
    p = len(w)
    _check_p(p)
    idx = np.arange(1 << p)
    bits = (idx[:, None] >> np.arange(p)) & 1
    return make_game(p, idx[bits @ w >= quota], f"threshold(q={quota:g})")


# -- aggregation --------------------------------------------------------------


def aggregate(game: SimpleGame, votes) -> bool:
    """delta(votes): do the yes-voters form a winning coalition?"""
    if len(votes) != game.p:
        raise ValueError(f"expected {game.p} votes, got {len(votes)}")
    return bool(game.table[votes_mask(votes)])


def aggregate_array(game: SimpleGame, votes: np.ndarray) -> np.ndarray:
    """Vectorized delta over the last axis of a boolean array."""
    weights = 1 << np.arange(game.p)
    return game.table[(votes.astype(np.int64) * weights).sum(axis=-1)]


def aggregate_sum(game: SimpleGame, votes) -> int:
    """Sum over winning C of prod_{i in C} x_i prod_{i not in C} (1 - x_i)."""
    total = 0
    for c in game.winning:
        term = 1
        for i in range(game.p):
            term *= votes[i] if c >> i & 1 else 1 - votes[i]
        total += term
    return total


def decompose(game: SimpleGame, i: int, votes) -> tuple[bool, bool, bool]:
    """(delta(v), delta(v with i -> 1), delta(v with i -> 0))."""
    v = list(votes)
    hi = v.copy()
    hi[i] = 1
    lo = v.copy()
    lo[i] = 0
    return aggregate(game, v), aggregate(game, hi), aggregate(game, lo)


def pivotal_gap(game: SimpleGame, i: int, others) -> tuple[bool, bool]:
    """(delta with i voting 0, delta with i voting 1), given the others' votes.

    ``others`` has length p-1 and lists the remaining players in order.
    """
    others = list(others)
    if len(others) != game.p - 1:
        raise ValueError(f"expected {game.p - 1} votes for the other players")
    base = votes_mask(others[:i]) | votes_mask(others[i:]) << (i + 1)
    return bool(game.table[base]), bool(game.table[base | 1 << i])


def pivotal_gap_array(game: SimpleGame, i: int, votes: np.ndarray):
    """Vectorized pivotal gap; ``votes`` holds all p votes, player i's is ignored."""
    weights = 1 << np.arange(game.p)
    base = (votes.astype(np.int64) * weights).sum(axis=-1) & ~(1 << i)
    return game.table[base], game.table[base | 1 << i]


def minimal_winning(game: SimpleGame) -> frozenset[int]:
    out = []
    for m in np.flatnonzero(game.table):
        m = int(m)
        if not any(game.table[m & ~(1 << i)] for i in range(game.p) if m >> i & 1):
            out.append(m)
    return frozenset(out)
