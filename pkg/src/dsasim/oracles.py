"""Exact references: expected one-step rewards by enumeration, a hindsight
(genie) baseline, and value iteration over the fully observed joint chain."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .env import SpectrumEnv, ScenarioError, vacancy_count

ENUMERATION_LIMIT = 20
VALUE_ITERATION_LIMIT = 12


class EnumerationLimitError(ScenarioError):
    """Raised when a brute-force enumeration would exceed its size bound."""


class QTable:
    """Sparse action-value table; absent entries read as 0.

    Keys are whatever hashable state representation the caller uses (full
    occupancy tuples for oracle tables, (last action, observation) pairs for
    the tabular learner).
    """

    def __init__(self, n_actions: int):
        self.n_actions = int(n_actions)
        self._values: dict = {}

    def __len__(self) -> int:
        return len(self._values)

    def get(self, state, action: int) -> float:
        return self._values.get((state, action), 0.0)

    def set(self, state, action: int, value: float) -> None:
        if not np.isfinite(value):
            raise ValueError(f"Q-value for ({state}, {action}) must be finite, got {value}")
        self._values[(state, action)] = float(value)

    def best_action(self, state) -> int:
        """Argmax over actions, smallest index on exact ties."""
        best, best_value = 0, self.get(state, 0)
        for action in range(1, self.n_actions):
            value = self.get(state, action)
            if value > best_value:
                best, best_value = action, value
        return best

    def max_value(self, state) -> float:
        return max(self.get(state, action) for action in range(self.n_actions))

    def items(self):
        return self._values.items()


@lru_cache(maxsize=32)
def parent_configurations(n_parents: int) -> np.ndarray:
    """All 2^i parent bit vectors, ordered by binary count (first parent is
    the most significant bit). Read-only."""
    count = 1 << n_parents
    configs = ((np.arange(count)[:, None] >> np.arange(n_parents - 1, -1, -1)) & 1).astype(np.uint8)
    configs.setflags(write=False)
    return configs


def _successor_probabilities(env: SpectrumEnv, state: np.ndarray, configs: np.ndarray) -> np.ndarray:
    """P(next parent configuration | current state), one entry per row of configs."""
    matrix = env.config.transition_matrix()
    current = env.parents_of_state(state)
    to_vacant = matrix[current, 0]
    to_occupied = matrix[current, 1]
    factors = np.where(configs == 0, to_vacant[None, :], to_occupied[None, :])
    return factors.prod(axis=1)


def _segment_success_probs(env: SpectrumEnv, state: np.ndarray) -> np.ndarray:
    """For each segment k: probability that next slot's segment k holds at
    least ``demand`` vacant channels."""
    i = env.config.n_independents
    if i > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"enumeration over 2^{i} successor configurations exceeds the 2^{ENUMERATION_LIMIT} bound")
    configs = parent_configurations(i)
    probs = _successor_probabilities(env, state, configs)
    states = env.states_from_parents(configs)
    zeros = (states == 0).astype(np.int64)
    cumulative = np.zeros((zeros.shape[0], zeros.shape[1] + 1), dtype=np.int64)
    np.cumsum(zeros, axis=1, out=cumulative[:, 1:])
    c = env.config.segment_len
    counts = cumulative[:, c:] - cumulative[:, :-c]
    return probs @ (counts >= env.config.demand)


def expected_action_reward(state: np.ndarray, action: int, env: SpectrumEnv) -> float:
    """Expected next-slot reward of ``action`` from ``state``: the exact
    enumeration of Sum_{s'} P(s'|s) r(s', action), reward taken directly from
    the vacancy test (no feedback round-trip)."""
    n_segments = env.config.n_segments
    if not 0 <= action <= n_segments:
        raise ScenarioError(f"action {action} outside 0..{n_segments}")
    if action == 0:
        return 0.0
    q = _segment_success_probs(env, np.asarray(state))[action - 1]
    return float(4.0 * q - 2.0)


def expected_rewards_all_actions(state: np.ndarray, env: SpectrumEnv) -> np.ndarray:
    """Expected rewards for every action at once, sharing one enumeration.

    Equals per-action expected_action_reward calls (same products summed in
    the same configuration order), just without repeating the state expansion.
    """
    values = np.zeros(env.config.n_actions, dtype=np.float64)
    values[1:] = 4.0 * _segment_success_probs(env, np.asarray(state)) - 2.0
    return values


def genie_action(state_next: np.ndarray, env: SpectrumEnv) -> int:
    """Smallest feasible segment of the realized next state, else idle."""
    bits = np.asarray(state_next)
    c, d = env.config.segment_len, env.config.demand
    for k in range(1, env.config.n_segments + 1):
        if vacancy_count(bits, k, c) >= d:
            return k
    return 0


def value_iteration(env: SpectrumEnv, gamma: float, tol: float, max_iters: int = 100_000) -> QTable:
    """Optimal Q for the fully observed joint chain, by fixed-point iteration.

    The decision model matches the simulator's timing: an action chosen in
    state s is executed against the successor s', so
    Q(s,a) = Sum_{s'} P(s'|s) [r(s',a) + gamma * max_a' Q(s',a')].
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    i = env.config.n_independents
    if i > VALUE_ITERATION_LIMIT:
        raise EnumerationLimitError(f"value iteration over 2^{i} states exceeds the 2^{VALUE_ITERATION_LIMIT} bound")
    configs = parent_configurations(i)
    n_states = configs.shape[0]
    n_actions = env.config.n_actions
    states = env.states_from_parents(configs)

    matrix = env.config.transition_matrix()
    transition = np.ones((n_states, n_states), dtype=np.float64)
    for j in range(i):
        transition *= matrix[configs[:, j]][:, configs[:, j]]

    zeros = (states == 0).astype(np.int64)
    cumulative = np.zeros((n_states, states.shape[1] + 1), dtype=np.int64)
    np.cumsum(zeros, axis=1, out=cumulative[:, 1:])
    c = env.config.segment_len
    counts = cumulative[:, c:] - cumulative[:, :-c]
    rewards = np.zeros((n_states, n_actions), dtype=np.float64)
    rewards[:, 1:] = np.where(counts >= env.config.demand, 2.0, -2.0)

    q = np.zeros((n_states, n_actions), dtype=np.float64)
    expected_reward = transition @ rewards
    for _ in range(max_iters):
        v = q.max(axis=1)
        q_next = expected_reward + gamma * (transition @ v)[:, None]
        residual = np.max(np.abs(q_next - q))
        q = q_next
        if residual <= tol:
            break
    else:
        raise RuntimeError(f"value iteration did not converge within {max_iters} iterations (check gamma < 1)")

    table = QTable(n_actions)
    for idx in range(n_states):
        key = tuple(int(b) for b in states[idx])
        for action in range(n_actions):
            table.set(key, action, q[idx, action])
    return table
