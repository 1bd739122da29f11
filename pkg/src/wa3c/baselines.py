"""Non-learning scheduling heuristics behind one policy interface.

All heuristics see the same K-slot queue window as the learned policy and
return a slot index, or the no-op when the queue is empty.  Ties always
break toward the lowest slot index so runs are reproducible.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .environment import SlotView


class SchedulerKind(str, Enum):
    RR = "rr"
    SJF = "sjf"
    LJF = "ljf"
    TETRIS = "tetris"
    RANDOM = "random"
    PLAIN_A3C = "plain_a3c"
    WA3C = "wa3c"


HEURISTIC_KINDS = (
    SchedulerKind.RR,
    SchedulerKind.SJF,
    SchedulerKind.LJF,
    SchedulerKind.TETRIS,
    SchedulerKind.RANDOM,
)


class HeuristicScheduler:
    """Stateful wrapper: owns the round-robin cursor and the random stream."""

    def __init__(self, kind: SchedulerKind, seed: int = 0):
        if kind not in HEURISTIC_KINDS:
            raise ValueError(f"{kind} is not a heuristic scheduler")
        self.kind = kind
        self._cursor = -1
        self._rng = np.random.default_rng(seed)

    def schedule(self, slots: list[SlotView | None], available: np.ndarray, no_op: int) -> int:
        """Pick a slot index for this tick, or ``no_op`` when nothing is queued."""
        occupied = [s for s in slots if s is not None]
        if not occupied:
            return no_op

        if self.kind is SchedulerKind.RR:
            indices = [s.index for s in occupied]
            later = [i for i in indices if i > self._cursor]
            choice = later[0] if later else indices[0]
            self._cursor = choice
            return choice
        if self.kind is SchedulerKind.SJF:
            return min(occupied, key=lambda s: (s.exec_estimate, s.index)).index
        if self.kind is SchedulerKind.LJF:
            return max(occupied, key=lambda s: (s.exec_estimate, -s.index)).index
        if self.kind is SchedulerKind.TETRIS:
            # alignment score: demand . available, higher packs better
            return max(
                occupied,
                key=lambda s: (float(np.dot(s.demand, available)), -s.index),
            ).index
        if self.kind is SchedulerKind.RANDOM:
            return int(self._rng.choice([s.index for s in occupied]))
        raise ValueError(f"unhandled scheduler kind {self.kind}")
