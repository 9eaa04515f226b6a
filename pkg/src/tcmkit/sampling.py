"""Slow/fast frame-pair schedules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

from .errors import ConfigurationError

Pair = Tuple[int, int]


@dataclass(frozen=True)
class PairSpec:
    """Fast pairs span one frame; slow pairs run from each frame to the last one."""

    fast: Tuple[Pair, ...]
    slow: Tuple[Pair, ...]
    T: int

    def __len__(self) -> int:
        return len(self.fast)

    @property
    def fast_spans(self) -> List[int]:
        return [b - a for a, b in self.fast]

    @property
    def slow_spans(self) -> List[int]:
        return [b - a for a, b in self.slow]


def build_pairs(T: int) -> PairSpec:
    """Both schedules for a clip of ``T`` frames (``T - 1`` pairs each).

    >>> build_pairs(4).slow
    ((0, 3), (1, 3), (2, 3))
    """
    if T < 2:
        raise ConfigurationError(f"need at least two frames to form pairs, got T={T}")
    fast = tuple((t, t + 1) for t in range(T - 1))
    slow = tuple((t, T - 1) for t in range(T - 1))
    return PairSpec(fast=fast, slow=slow, T=T)
