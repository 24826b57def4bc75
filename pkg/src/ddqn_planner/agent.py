"""Double-DQN learner with stochastic episode starts and shaped rewards."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .gridworld import (
    ACTIONS,
    ROBOT_VALUE,
    Action,
    GridMap,
    Position,
    Termination,
    apply_action,
    encode_state,
    free_positions,
)
from .neuralnet import (
    NetworkArch,
    NetworkParams,
    OptimizerConfig,
    adam_step,
    backward_batch,
    copy_params,
    forward,
    forward_batch,
    init_params,
)
from .reward import RewardParams, step_reward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    batch_size: int = 32
    p_r: float = 0.5
    target_sync_period: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int = 10_000
    max_episode_steps: int = 200
    min_replay_before_training: int = 500
    replay_capacity: int = 10_000
    total_train_steps: int = 50_000
    seed: int = 0
    use_random_init: bool = True
    use_shaped_reward: bool = True
    reward: RewardParams = field(default_factory=RewardParams)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    arch: NetworkArch = field(default_factory=NetworkArch)

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.p_r <= 1:
            raise ValueError("p_r must lie in [0, 1]")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        if self.batch_size < 1 or self.replay_capacity < 1 or self.target_sync_period < 1:
            raise ValueError("batch_size, replay_capacity and target_sync_period must be positive")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be positive")

    @classmethod
    def baseline(cls, **overrides) -> "TrainConfig":
        """Unmodified DDQN: always start at the designated start, flat reward on free moves."""
        return cls(use_random_init=False, use_shaped_reward=False, **overrides)


class Transition(NamedTuple):
    state: Position
    action: Action
    reward: float
    next_state: Position
    terminal: bool
    map_index: int = 0


class TransitionBatch(NamedTuple):
    state_xy: np.ndarray
    action: np.ndarray  # 0-based output index
    reward: np.ndarray
    next_xy: np.ndarray
    terminal: np.ndarray
    map_index: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer, sampled uniformly with replacement."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._state = np.zeros((capacity, 2), dtype=np.intp)
        self._next = np.zeros((capacity, 2), dtype=np.intp)
        self._action = np.zeros(capacity, dtype=np.intp)
        self._reward = np.zeros(capacity, dtype=np.float64)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._map = np.zeros(capacity, dtype=np.intp)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._cursor
        self._state[i] = t.state
        self._next[i] = t.next_state
        self._action[i] = int(t.action) - 1
        self._reward[i] = t.reward
        self._terminal[i] = t.terminal
        self._map[i] = t.map_index
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def __getitem__(self, i: int) -> Transition:
        if not 0 <= i < self._size:
            raise IndexError(i)
        return Transition(
            Position(*map(int, self._state[i])),
            Action(int(self._action[i]) + 1),
            float(self._reward[i]),
            Position(*map(int, self._next[i])),
            bool(self._terminal[i]),
            int(self._map[i]),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return TransitionBatch(
            self._state[idx],
            self._action[idx],
            self._reward[idx],
            self._next[idx],
            self._terminal[idx],
            self._map[idx],
        )


@dataclass
class EpisodeRecord:
    initial: Position
    steps: int
    total_reward: float
    termination: Termination
    path: list[Position]
    epsilon: float = 0.0
    map_index: int = 0

    @property
    def average_reward_per_step(self) -> float:
        return self.total_reward / self.steps

    @property
    def success(self) -> bool:
        return self.termination is Termination.REACHED_END

    @property
    def path_length(self) -> float:
        return sum(math.dist(a, b) for a, b in zip(self.path, self.path[1:]))


def epsilon_at(step: int, config: TrainConfig) -> float:
    if config.epsilon_decay_steps <= 0:
        return config.epsilon_end
    slope = (config.epsilon_start - config.epsilon_end) / config.epsilon_decay_steps
    return max(config.epsilon_end, config.epsilon_start - step * slope)


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if rng.random() < epsilon:
        return ACTIONS[int(rng.integers(len(ACTIONS)))]
    return ACTIONS[int(np.argmax(q_values))]


def reset_episode(grid: GridMap, config: TrainConfig, rng: np.random.Generator,
                  candidates: Sequence[Position] | None = None) -> Position:
    """Designated start with probability ``p_r``, otherwise a uniform free cell."""
    if not config.use_random_init:
        return grid.start
    if rng.random() < config.p_r:
        return grid.start
    if candidates is None:
        candidates = free_positions(grid)
    return candidates[int(rng.integers(len(candidates)))]


def _encode_positions(bases: np.ndarray, map_index: np.ndarray, xy: np.ndarray) -> np.ndarray:
    out = bases[map_index]  # fancy indexing copies
    out[np.arange(len(xy)), xy[:, 1], xy[:, 0]] = ROBOT_VALUE
    return out


def double_dqn_targets(
    online: NetworkParams,
    target: NetworkParams,
    arch: NetworkArch,
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminal: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); plain r at terminals."""
    best = np.argmax(forward_batch(online, arch, next_states), axis=1)
    evaluated = forward_batch(target, arch, next_states)[np.arange(len(best)), best]
    return np.where(terminal, rewards, rewards + gamma * evaluated)


def compute_target(
    online: NetworkParams,
    target: NetworkParams,
    transition: Transition,
    gamma: float,
    grid: GridMap,
    arch: NetworkArch | None = None,
) -> float:
    if transition.terminal:
        return float(transition.reward)
    arch = arch or NetworkArch(input_h=grid.height, input_w=grid.width)
    nxt = encode_state(grid, transition.next_state)[None]
    return float(
        double_dqn_targets(
            online, target, arch, np.array([transition.reward]), nxt, np.array([False]), gamma
        )[0]
    )


class Learner:
    """Online/target networks, replay and the update rule.

    ``bases`` holds the per-map base encodings that stored transitions refer to
    through ``map_index``.
    """

    def __init__(self, grids: Sequence[GridMap], config: TrainConfig,
                 online: NetworkParams | None = None, rng: np.random.Generator | None = None):
        self.config = config
        self.arch = config.arch
        self.bases = np.stack([g.base_encoding for g in grids])
        self.online = online if online is not None else init_params(config.arch, config.seed)
        self.target = copy_params(self.online)
        self.buffer = ReplayBuffer(config.replay_capacity)
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.updates = 0

    def train_step(self) -> float | None:
        """One Adam step on a sampled mini-batch; ``None`` while replay is warming up."""
        cfg = self.config
        if len(self.buffer) < max(cfg.min_replay_before_training, 1):
            return None
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        states = _encode_positions(self.bases, batch.map_index, batch.state_xy)
        # terminal next states may be off-map; their encodings are never used
        next_xy = np.where(batch.terminal[:, None], batch.state_xy, batch.next_xy)
        nexts = _encode_positions(self.bases, batch.map_index, next_xy)
        targets = double_dqn_targets(
            self.online, self.target, self.arch, batch.reward, nexts, batch.terminal, cfg.gamma
        )
        grads, q = backward_batch(self.online, self.arch, states, batch.action, targets)
        adam_step(self.online, grads, cfg.optimizer)
        self.updates += 1
        if self.updates % cfg.target_sync_period == 0:
            self.target = copy_params(self.online)
        taken = q[np.arange(len(targets)), batch.action]
        return float(np.mean((targets - taken) ** 2))


def run_training(
    grids: GridMap | Sequence[GridMap], config: TrainConfig, log_every: int = 0
) -> tuple[NetworkParams, list[EpisodeRecord]]:
    """Interact and learn for ``config.total_train_steps`` environment steps.

    With several maps, each episode picks one uniformly. An episode cut off by
    the step budget is not recorded.
    """
    grids = [grids] if isinstance(grids, GridMap) else list(grids)
    arch = config.arch
    for g in grids:
        if (g.height, g.width) != (arch.input_h, arch.input_w):
            raise ValueError(f"map is {g.width}x{g.height} but the network expects {arch.input_w}x{arch.input_h}")
    rng = np.random.default_rng(config.seed)
    learner = Learner(grids, config, rng=rng)
    candidates = [free_positions(g) for g in grids]
    records: list[EpisodeRecord] = []

    def new_episode() -> tuple[int, Position]:
        m = int(rng.integers(len(grids))) if len(grids) > 1 else 0
        return m, reset_episode(grids[m], config, rng, candidates[m])

    map_idx, pos = new_episode()
    grid = grids[map_idx]
    path, total, steps = [pos], 0.0, 0
    for step in range(config.total_train_steps):
        state = grid.base_encoding.copy()
        state[pos.y, pos.x] = ROBOT_VALUE
        eps = epsilon_at(step, config)
        action = select_action(forward(learner.online, arch, state), eps, rng)
        outcome = apply_action(grid, pos, action)
        reward = step_reward(config.reward, grid.start, grid.end, pos, outcome,
                             shaped=config.use_shaped_reward)
        terminal = outcome.terminal is not Termination.NONE
        learner.buffer.push(Transition(pos, action, reward, outcome.next, terminal, map_idx))
        learner.train_step()

        steps += 1
        total += reward
        path.append(outcome.next)
        pos = outcome.next
        timed_out = not terminal and steps >= config.max_episode_steps
        if terminal or timed_out:
            cause = outcome.terminal if terminal else Termination.STEP_CAP
            records.append(EpisodeRecord(path[0], steps, total, cause, path, eps, map_idx))
            if log_every and len(records) % log_every == 0:
                recent = records[-log_every:]
                log.info(
                    "step %d episode %d eps %.3f success %.2f avg reward/step %.3f",
                    step + 1, len(records), eps,
                    np.mean([r.success for r in recent]),
                    np.mean([r.average_reward_per_step for r in recent]),
                )
            map_idx, pos = new_episode()
            grid = grids[map_idx]
            path, total, steps = [pos], 0.0, 0
    return learner.online, records


def rollout_policy(
    grid: GridMap,
    params: NetworkParams,
    start: Position,
    step_cap: int = 200,
    arch: NetworkArch | None = None,
    reward: RewardParams | None = None,
) -> EpisodeRecord:
    """Greedy rollout; revisiting a cell counts as failure (``Termination.LOOP``)."""
    arch = arch or NetworkArch(input_h=grid.height, input_w=grid.width)
    reward = reward or RewardParams()
    pos = Position(*start)
    path = [pos]
    visited = {pos}
    total = 0.0
    cause = Termination.STEP_CAP
    for _ in range(step_cap):
        state = grid.base_encoding.copy()
        state[pos.y, pos.x] = ROBOT_VALUE
        action = ACTIONS[int(np.argmax(forward(params, arch, state)))]
        outcome = apply_action(grid, pos, action)
        total += step_reward(reward, grid.start, grid.end, pos, outcome)
        path.append(outcome.next)
        if outcome.terminal is not Termination.NONE:
            cause = outcome.terminal
            break
        if outcome.next in visited:
            cause = Termination.LOOP
            break
        visited.add(outcome.next)
        pos = outcome.next
    return EpisodeRecord(path[0], len(path) - 1, total, cause, path)


CURVE_HEADER = ("episode", "steps", "total_reward", "avg_reward_per_step", "termination", "epsilon")


def write_episode_csv(records: Sequence[EpisodeRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for i, r in enumerate(records):
            writer.writerow([i, r.steps, repr(r.total_reward), repr(r.average_reward_per_step),
                             r.termination.value, repr(r.epsilon)])


def read_episode_csv(path: str | Path) -> list[dict[str, float | str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CURVE_HEADER)}")
        rows = []
        for row in reader:
            rows.append({k: (v if k == "termination" else float(v)) for k, v in row.items()})
    return rows
