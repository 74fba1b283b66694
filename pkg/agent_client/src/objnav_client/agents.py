"""Example policies for the evaluation client."""
from __future__ import annotations

import random

from .client import ACTION_NAMES, ClientObservation


class StopPolicy:
    """Stops immediately; the floor baseline."""

    def on_reset(self, goal_category: str) -> None:
        pass

    def act(self, observation: ClientObservation) -> str:
        return "stop"


class RandomPolicy:
    """Uniform over the six actions in protocol order, deterministic in seed.

    Draws mirror the evaluator's built-in random baseline, so the same seed
    reproduces the same trajectory on either side of the wire.
    """

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def on_reset(self, goal_category: str) -> None:
        pass

    def act(self, observation: ClientObservation) -> str:
        return self._rng.choice(ACTION_NAMES)


class BumpAndTurnPolicy:
    """Walks forward, turns 30 degrees on contact, stops near the budget.

    A depth-free wall-bouncer: enough to exercise collisions and full-length
    episodes without any learning.
    """

    def __init__(self, stop_after: int = 120, turn: str = "turn-left"):
        self.stop_after = stop_after
        self.turn = turn

    def on_reset(self, goal_category: str) -> None:
        pass

    def act(self, observation: ClientObservation) -> str:
        if observation.step >= self.stop_after:
            return "stop"
        if observation.collided:
            return self.turn
        return "move-forward"
