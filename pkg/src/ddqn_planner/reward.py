"""Terminal rewards and the A*-style shaped reward for free moves."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .gridworld import Position, StepOutcome, Termination


@dataclass(frozen=True)
class RewardParams:
    alpha: float = 0.6
    beta: float = 0.4
    reward_end: float = 10.0
    reward_obstacle: float = -10.0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


@dataclass(frozen=True)
class RewardTerms:
    d_re_prev: float
    d_re_curr: float
    d_rs_prev: float
    d_rs_curr: float
    d_step: float

    @classmethod
    def measure(cls, start: Position, end: Position, prev: Position, curr: Position) -> "RewardTerms":
        return cls(
            d_re_prev=math.dist(prev, end),
            d_re_curr=math.dist(curr, end),
            d_rs_prev=math.dist(start, prev),
            d_rs_curr=math.dist(start, curr),
            d_step=math.dist(prev, curr),
        )

    @property
    def progress(self) -> float:
        """Reduction in distance to the end (positive when closing in)."""
        return self.d_re_prev - self.d_re_curr

    @property
    def detour(self) -> float:
        """Non-positive by the triangle inequality; zero when ``prev`` lies on start->curr."""
        return self.d_rs_curr - self.d_rs_prev - self.d_step


def shaped_reward(
    params: RewardParams, start: Position, end: Position, prev: Position, curr: Position
) -> float:
    terms = RewardTerms.measure(start, end, prev, curr)
    return params.alpha * terms.progress + params.beta * terms.detour


def step_reward(
    params: RewardParams,
    start: Position,
    end: Position,
    prev: Position,
    outcome: StepOutcome,
    shaped: bool = True,
) -> float:
    """Reward for one transition. Terminal values replace the shaped term.

    With ``shaped=False`` free moves earn 0, which is the unmodified DDQN setting.
    """
    if outcome.terminal is Termination.REACHED_END:
        return params.reward_end
    if outcome.terminal in (Termination.HIT_OBSTACLE, Termination.OFF_GRID):
        return params.reward_obstacle
    if not shaped:
        return 0.0
    return shaped_reward(params, start, end, prev, outcome.next)
