"""Non-deep baseline policies: random segment choice, one-step-lookahead
expected-reward maximization, and tabular Q-learning on (action, observation)
pairs, plus the text export format for Q tables."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .env import SpectrumEnv
from .oracles import QTable, expected_rewards_all_actions, genie_action


@dataclass(frozen=True)
class AgentState:
    """What the learner actually sees each slot: its last action and the
    observed bits of the segment that action sensed."""

    last_action: int
    observation: tuple[int, ...]


def initial_agent_state(env: SpectrumEnv) -> AgentState:
    """Before the first decision the agent idles, which still senses segment 1."""
    c = env.config.segment_len
    observation = tuple(int(b) for b in env.state[:c])
    return AgentState(last_action=0, observation=observation)


def random_policy(rng: np.random.Generator, env: SpectrumEnv) -> int:
    """Uniform over segments 1..N-C+1; never idles."""
    return int(rng.integers(1, env.config.n_segments + 1))


TIE_TOLERANCE = 1e-9


def improvident_policy(state: np.ndarray, env: SpectrumEnv) -> int:
    """Argmax of expected next-slot reward, idle included at value 0.

    Ties break to the smallest action index, so idle wins when no segment has
    positive expected reward margin. Values within TIE_TOLERANCE of the
    maximum count as tied: mathematically equal segments (symmetric states)
    pick up last-ulp noise from summation order, and that noise must not
    decide the action.
    """
    values = expected_rewards_all_actions(state, env)
    best = float(np.max(values))
    for action, value in enumerate(values):
        if value >= best - TIE_TOLERANCE:
            return action
    raise AssertionError("unreachable: the maximum is always within tolerance of itself")


def ql_select(table: QTable, x: AgentState) -> int:
    """Greedy action for the tabular learner; unseen pairs read as 0."""
    return table.best_action(x)


def ql_update(
    table: QTable,
    x_t: AgentState,
    action: int,
    reward: float,
    x_next: AgentState,
    alpha: float,
    gamma: float,
) -> QTable:
    """One temporal-difference update toward r + gamma * max_a' q(x', a').

    Mutates exactly the (x_t, action) entry and returns the table.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0,1], got {alpha}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0,1), got {gamma}")
    old = table.get(x_t, action)
    target = reward + gamma * table.max_value(x_next)
    table.set(x_t, action, old + alpha * (target - old))
    return table


def train_q_learning(
    env: SpectrumEnv,
    slots: int,
    alpha: float | None,
    gamma: float,
    rng: np.random.Generator,
    epsilon_fn: Callable[[int], float],
    full_observation: bool = False,
    visit_decay: bool = False,
) -> QTable:
    """Slot-by-slot tabular training with an injected exploration schedule
    (the harness passes the same linear decay the deep agent uses).

    full_observation keys the table on the true channel state instead of the
    (action, observation) pair; visit_decay replaces the fixed step size with
    1/(1+visits) per entry. Both are for convergence studies against the
    planning reference, which is defined on full states.
    """
    if not visit_decay and alpha is None:
        raise ValueError("alpha is required unless visit_decay is set")
    table = QTable(env.config.n_actions)
    visits: dict[tuple, int] = {}

    def current_key():
        if full_observation:
            return tuple(int(b) for b in env.state)
        return None

    x = current_key() if full_observation else initial_agent_state(env)
    for t in range(slots):
        epsilon = epsilon_fn(t)
        if rng.random() < epsilon:
            action = int(rng.integers(0, table.n_actions))
        else:
            action = ql_select(table, x)
        outcome = env.step(action)
        if full_observation:
            x_next = current_key()
        else:
            x_next = AgentState(action, outcome.observation)
        if visit_decay:
            seen = visits.get((x, action), 0)
            visits[(x, action)] = seen + 1
            step_size = 1.0 / (1.0 + seen)
        else:
            step_size = alpha
        ql_update(table, x, action, outcome.reward, x_next, step_size, gamma)
        x = x_next
    return table


def _state_key_str(state) -> str:
    if isinstance(state, AgentState):
        return f"{state.last_action}:" + "".join(str(b) for b in state.observation)
    return "".join(str(int(b)) for b in state)


def _state_key_parse(token: str):
    if ":" in token:
        head, bits = token.split(":", 1)
        return AgentState(int(head), tuple(int(b) for b in bits))
    return tuple(int(b) for b in token)


def save_qtable(table: QTable, path: str | Path) -> None:
    """Line-oriented dump: one "state-bits action value" row per entry,
    sorted for reproducible files."""
    lines = [f"# n_actions={table.n_actions}"]
    entries = sorted(
        ((_state_key_str(state), action, value) for (state, action), value in table.items()),
        key=lambda row: (row[0], row[1]),
    )
    for key, action, value in entries:
        lines.append(f"{key} {action} {value!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_qtable(path: str | Path) -> QTable:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# n_actions="):
        raise ValueError(f"{path} is not a Q-table dump (missing n_actions header)")
    table = QTable(int(lines[0].split("=", 1)[1]))
    for line in lines[1:]:
        if not line.strip():
            continue
        key, action, value = line.split()
        table.set(_state_key_parse(key), int(action), float(value))
    return table


class RandomPolicy:
    """Evaluation wrapper around random_policy with its own action stream."""

    name = "random"

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def decide(self, x: AgentState, env: SpectrumEnv) -> int:
        return random_policy(self._rng, env)


class ImprovidentPolicy:
    """Evaluation wrapper with oracle access to the current true state."""

    name = "improvident"

    def decide(self, x: AgentState, env: SpectrumEnv) -> int:
        return improvident_policy(env.state, env)


class GeniePolicy:
    """Upper-bound baseline that reads the realized next state."""

    name = "genie"

    def decide(self, x: AgentState, env: SpectrumEnv) -> int:
        return genie_action(env.peek_next(), env)


class QTablePolicy:
    """Frozen tabular policy for evaluation runs."""

    name = "qlearning"

    def __init__(self, table: QTable):
        self.table = table

    def decide(self, x: AgentState, env: SpectrumEnv) -> int:
        return ql_select(self.table, x)
