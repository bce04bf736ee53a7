"""Symmetric 2x2 matrix games and the uncontrolled replicator equation.

A game is the row player's payoff table::

    [[a, b],
     [c, d]]

where ``a`` is the payoff for playing action 1 against action 1, ``b`` for
action 1 against action 2, and so on. The population state ``x`` is the share
of players using action 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional


class DomainError(ValueError):
    """A state or parameter lies outside the domain of an operation."""


class UnsupportedGameError(ValueError):
    """The operation is undefined for this class of game."""


class GameTag(str, Enum):
    COORDINATION = "coordination"
    DOMINANT_ACTION1 = "dominant_action1"
    DOMINANT_ACTION2 = "dominant_action2"
    ANTI_COORDINATION = "anti_coordination"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class PayoffMatrix:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise DomainError(f"payoff {name}={v!r} is not a finite real")

    def relabeled(self) -> PayoffMatrix:
        """Swap the names of the two actions: (a, b, c, d) -> (d, c, b, a).

        The replicator state transforms as x -> 1 - x under this map.
        """
        return PayoffMatrix(self.d, self.c, self.b, self.a)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class GameClass:
    tag: GameTag
    mixed_ne: Optional[float] = None

    @property
    def is_degenerate(self) -> bool:
        return self.tag is GameTag.DEGENERATE

    def stable_equilibria(self) -> tuple[float, ...]:
        """Asymptotically stable rest points of the uncontrolled dynamics."""
        if self.tag is GameTag.COORDINATION:
            return (0.0, 1.0)
        if self.tag is GameTag.DOMINANT_ACTION1:
            return (1.0,)
        if self.tag is GameTag.DOMINANT_ACTION2:
            return (0.0,)
        if self.tag is GameTag.ANTI_COORDINATION:
            return (self.mixed_ne,)
        return ()


class RewardPair(NamedTuple):
    r1: float
    r2: float


def mixed_ne(m: PayoffMatrix) -> float:
    return (m.d - m.b) / (m.a + m.d - m.b - m.c)


def classify(m: PayoffMatrix) -> GameClass:
    """Classify by the signs of a - c and d - b.

    Comparisons are exact; ties give ``DEGENERATE``.
    """
    ac = m.a - m.c
    db = m.d - m.b
    if ac == 0 or db == 0:
        return GameClass(GameTag.DEGENERATE)
    if ac > 0 and db > 0:
        return GameClass(GameTag.COORDINATION, mixed_ne(m))
    if ac < 0 and db < 0:
        return GameClass(GameTag.ANTI_COORDINATION, mixed_ne(m))
    if ac > 0:
        return GameClass(GameTag.DOMINANT_ACTION1)
    return GameClass(GameTag.DOMINANT_ACTION2)


def _check_share(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"population share x={x!r} outside [0, 1]")


def rewards(m: PayoffMatrix, x: float) -> RewardPair:
    _check_share(x)
    return RewardPair(m.a * x + m.b * (1 - x), m.c * x + m.d * (1 - x))


def replicator_rhs(m: PayoffMatrix, x: float) -> float:
    """Right-hand side x(1 - x)((a + d - b - c)x + b - d)."""
    _check_share(x)
    return x * (1 - x) * ((m.a + m.d - m.b - m.c) * x + m.b - m.d)


def uncontrolled_limit(m: PayoffMatrix, x0: float) -> float:
    """Asymptotic share reached by the uncontrolled dynamics from ``x0``.

    In a coordination game ``x0 == x*`` returns the saddle ``x*``; a numerical
    run started there drifts off under rounding, so that case is measure-zero.
    """
    _check_share(x0)
    cls = classify(m)
    tag = cls.tag
    if tag is GameTag.DEGENERATE:
        raise UnsupportedGameError("degenerate game (a == c or d == b) has no predicted limit")
    if tag is GameTag.COORDINATION:
        if x0 < cls.mixed_ne:
            return 0.0
        if x0 > cls.mixed_ne:
            return 1.0
        return cls.mixed_ne
    if tag is GameTag.DOMINANT_ACTION2:
        return 1.0 if x0 == 1.0 else 0.0
    if tag is GameTag.DOMINANT_ACTION1:
        return 0.0 if x0 == 0.0 else 1.0
    # anti-coordination
    if x0 in (0.0, 1.0):
        return x0
    return cls.mixed_ne
