"""Conservative percentile-based early termination of (simulated) training.

At each checkpoint epoch the current loss is compared with the
``(1 - beta)`` quantile of the losses that fully trained runs had at the
same epoch.  A run is stopped only when it is strictly worse, and only once
enough complete curves exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TerminationRule:
    beta: float = 0.25
    checkpoint_fractions: tuple = (0.5, 0.75)
    warmup: int = 10

    def __post_init__(self):
        object.__setattr__(self, "checkpoint_fractions", tuple(self.checkpoint_fractions))
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        f = self.checkpoint_fractions
        if any(not 0 < x < 1 for x in f) or any(a >= b for a, b in zip(f, f[1:])):
            raise ValueError("checkpoint fractions must be strictly increasing in (0, 1)")

    def checkpoints(self, max_epochs: int) -> list[int]:
        """1-based checkpoint epochs, deduplicated, strictly before the last epoch."""
        out = []
        for frac in self.checkpoint_fractions:
            e = math.ceil(frac * max_epochs)
            if 1 <= e < max_epochs and e not in out:
                out.append(e)
        return out


@dataclass(frozen=True)
class Evaluation:
    y: float
    curve: tuple
    charged_time: float
    terminated_early: bool


def should_terminate(rule: TerminationRule, curve_so_far, e: int, completed_curves) -> bool:
    """True when loss at 1-based epoch ``e`` is strictly above the
    ``(1 - beta)`` quantile of the completed curves' losses at that epoch."""
    if len(completed_curves) < rule.warmup or rule.beta <= 0:
        return False
    ref = np.array([c[e - 1] for c in completed_curves], dtype=float)
    threshold = float(np.quantile(ref, 1.0 - rule.beta))
    return float(curve_so_far[e - 1]) > threshold


def evaluate_with_termination(rule, curve, total_time, completed_curves=()) -> Evaluation:
    """Walk the checkpoints of a full learning curve, stopping early if the rule fires.

    ``rule=None`` disables termination.  A completed run reports its best
    loss; a stopped run reports the loss at the stopping epoch and is charged
    time in proportion to the epochs it used.
    """
    curve = tuple(float(v) for v in curve)
    n = len(curve)
    if rule is not None:
        for e in rule.checkpoints(n):
            if should_terminate(rule, curve, e, completed_curves):
                return Evaluation(curve[e - 1], curve[:e], total_time * e / n, True)
    return Evaluation(min(curve), curve, float(total_time), False)
