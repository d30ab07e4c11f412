"""Deep Q-learning agent: one-hot state encoding, epsilon-greedy selection
with a linear decay, FIFO replay memory with uniform sampling, target-network
bootstrapping, the training loop, and the reward-watchdog retraining monitor."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import SpectrumEnv
from .neural import NetworkParams, OptState, adam_step, forward, init_network, loss_and_gradients
from .policies import AgentState, initial_agent_state

REWARD_VALUES = (-2.0, 0.0, 2.0)


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs. Defaults give the desk-scale profile; the literal
    large-memory profile ships as a config file."""

    memory_size: int = 50_000
    batch_size: int = 32
    gamma: float = 0.9
    learning_rate: float = 0.00025
    epsilon_start: float = 0.9
    epsilon_decay_steps: int = 10_000
    target_sync_freq: int = 200
    max_train_iters: int = 50_000
    warmup_size: int = 1_000
    ql_alpha: float = 0.05
    ql_train_steps: int | None = None

    def validate(self) -> None:
        if not 1 <= self.batch_size <= self.warmup_size <= self.memory_size:
            raise ValueError(
                "batch_size <= warmup_size <= memory_size violated: "
                f"B={self.batch_size}, W={self.warmup_size}, M={self.memory_size}"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if not 0.0 <= self.epsilon_start <= 1.0:
            raise ValueError(f"epsilon_start must lie in [0,1], got {self.epsilon_start}")
        if self.epsilon_decay_steps < 1:
            raise ValueError(f"epsilon_decay_steps must be >= 1, got {self.epsilon_decay_steps}")
        if self.target_sync_freq < 1:
            raise ValueError(f"target_sync_freq must be >= 1, got {self.target_sync_freq}")
        if self.max_train_iters < 0:
            raise ValueError(f"max_train_iters must be >= 0, got {self.max_train_iters}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.ql_alpha <= 1.0:
            raise ValueError(f"ql_alpha must lie in (0,1], got {self.ql_alpha}")
        if self.ql_train_steps is not None and self.ql_train_steps < 1:
            raise ValueError(f"ql_train_steps must be >= 1, got {self.ql_train_steps}")

    @classmethod
    def from_dict(cls, raw: dict) -> "Hyperparams":
        unknown = sorted(set(raw) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {', '.join(unknown)}")
        hyper = cls(**raw)
        hyper.validate()
        return hyper

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class Transition:
    """One experience tuple, with both agent states already encoded."""

    x: np.ndarray
    action: int
    reward: float
    x_next: np.ndarray


def encode_state(action: int, observation: Sequence[int], n_actions: int) -> np.ndarray:
    """Concatenate a one-hot action (element action+1 of n_actions, 1-indexed)
    with the observation bits."""
    if not 0 <= action < n_actions:
        raise ValueError(f"action {action} outside 0..{n_actions - 1}")
    obs = np.asarray(observation, dtype=np.float64)
    if obs.ndim != 1 or not np.all((obs == 0.0) | (obs == 1.0)):
        raise ValueError("observation must be a flat vector of bits")
    vec = np.zeros(n_actions + obs.shape[0], dtype=np.float64)
    vec[action] = 1.0
    vec[n_actions:] = obs
    return vec


def decode_state(vec: np.ndarray, n_actions: int) -> tuple[int, tuple[int, ...]]:
    vec = np.asarray(vec)
    head = vec[:n_actions]
    if np.sum(head == 1.0) != 1 or np.sum(head) != 1.0:
        raise ValueError("encoding head is not a one-hot action")
    action = int(np.argmax(head))
    return action, tuple(int(b) for b in vec[n_actions:])


def epsilon_at(iteration: int, hyper: Hyperparams) -> float:
    """Linear decay from epsilon_start to 0 over epsilon_decay_steps, 0 after."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if iteration >= hyper.epsilon_decay_steps:
        return 0.0
    return hyper.epsilon_start * (1.0 - iteration / hyper.epsilon_decay_steps)


def greedy_action(params: NetworkParams, x: np.ndarray) -> tuple[int, float]:
    """Argmax action (smallest index on ties) and its Q-value."""
    q = forward(params, x)
    action = int(np.argmax(q))
    return action, float(q[action])


def select_action(params: NetworkParams, x: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy: explore uniformly over all actions (greedy included)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0,1], got {epsilon}")
    n_actions = params.weights[-1].shape[1]
    if rng.random() < epsilon:
        return int(rng.integers(0, n_actions))
    return greedy_action(params, x)[0]


def compute_targets(
    target_params: NetworkParams,
    rewards: np.ndarray,
    next_states: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Bootstrap targets y = r + gamma * max_a Q(x', a) from the target
    network only; the live network never enters."""
    next_q = forward(target_params, next_states)
    return np.asarray(rewards, dtype=np.float64) + gamma * next_q.max(axis=1)


def sync_target(params: NetworkParams) -> NetworkParams:
    """Fresh bit-exact copy for use as the target network."""
    return params.copy()


class ReplayMemory:
    """Bounded FIFO of transitions backed by preallocated arrays; once full,
    each push overwrites the single oldest entry."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.state_dim = state_dim
        self._x = np.empty((capacity, state_dim), dtype=np.float64)
        self._actions = np.empty(capacity, dtype=np.int64)
        self._rewards = np.empty(capacity, dtype=np.float64)
        self._x_next = np.empty((capacity, state_dim), dtype=np.float64)
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition) -> None:
        if transition.reward not in REWARD_VALUES:
            raise ValueError(f"reward {transition.reward} outside {REWARD_VALUES}")
        if transition.x.shape != (self.state_dim,) or transition.x_next.shape != (self.state_dim,):
            raise ValueError("transition encodings do not match the memory's state_dim")
        self._x[self._head] = transition.x
        self._actions[self._head] = transition.action
        self._rewards[self._head] = transition.reward
        self._x_next[self._head] = transition.x_next
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Uniform sample with replacement over the current contents."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.integers(0, self._size, size=batch_size)
        if self._size == self.capacity:
            idx = (self._head + idx) % self.capacity
        return self._x[idx], self._actions[idx], self._rewards[idx], self._x_next[idx]

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = (self._head - self._size) % self.capacity
        order = (start + np.arange(self._size)) % self.capacity
        return [
            Transition(self._x[j].copy(), int(self._actions[j]), float(self._rewards[j]), self._x_next[j].copy())
            for j in order
        ]

    def clear(self) -> None:
        self._size = 0
        self._head = 0


@dataclass
class TrainedAgent:
    """Final network plus the telemetry the evaluation layer consumes."""

    params: NetworkParams
    hyper: Hyperparams
    n_actions: int
    obs_len: int
    losses: list[float] = field(default_factory=list)
    max_q: list[float] = field(default_factory=list)
    updates: int = 0
    syncs: int = 0

    def encode(self, x: AgentState) -> np.ndarray:
        return encode_state(x.last_action, x.observation, self.n_actions)


class DQNPolicy:
    """Greedy evaluation wrapper around a trained (or loaded) network."""

    name = "dqn"

    def __init__(self, params: NetworkParams, n_actions: int):
        self.params = params
        self.n_actions = n_actions

    def decide(self, x: AgentState, env: SpectrumEnv) -> int:
        vec = encode_state(x.last_action, x.observation, self.n_actions)
        return greedy_action(self.params, vec)[0]


def train(
    env: SpectrumEnv,
    hyper: Hyperparams,
    rng: np.random.Generator,
    hidden_dim: int = 50,
    hidden_layers: int = 3,
) -> TrainedAgent:
    """Interaction loop: act epsilon-greedily, store the transition, and once
    the memory holds warmup_size entries run one sampled update per slot,
    syncing the target network every target_sync_freq updates. Stops after
    max_train_iters updates; epsilon is indexed by the update counter, so it
    stays at epsilon_start through warm-up.
    """
    hyper.validate()
    n_actions = env.config.n_actions
    obs_len = env.config.segment_len
    state_dim = n_actions + obs_len

    params = init_network(state_dim, hidden_dim, n_actions, rng, hidden_layers=hidden_layers)
    target = sync_target(params)
    opt = OptState.for_params(params)
    memory = ReplayMemory(hyper.memory_size, state_dim)

    x = initial_agent_state(env)
    x_vec = encode_state(x.last_action, x.observation, n_actions)
    updates = 0
    syncs = 0
    losses: list[float] = []
    max_q_trace: list[float] = []

    while updates < hyper.max_train_iters:
        epsilon = epsilon_at(updates, hyper)
        action = select_action(params, x_vec, epsilon, rng)
        outcome = env.step(action)
        next_vec = encode_state(action, outcome.observation, n_actions)
        memory.push(Transition(x_vec, action, outcome.reward, next_vec))

        if len(memory) >= hyper.warmup_size:
            max_q_trace.append(greedy_action(params, x_vec)[1])
            batch_x, batch_a, batch_r, batch_xn = memory.sample(hyper.batch_size, rng)
            targets = compute_targets(target, batch_r, batch_xn, hyper.gamma)
            loss, grads = loss_and_gradients(params, batch_x, batch_a, targets)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite ({loss}) at update {updates}")
            params, opt = adam_step(params, grads, opt, hyper.learning_rate)
            updates += 1
            losses.append(loss)
            if updates % hyper.target_sync_freq == 0:
                target = sync_target(params)
                syncs += 1
        x_vec = next_vec

    return TrainedAgent(
        params=params,
        hyper=hyper,
        n_actions=n_actions,
        obs_len=obs_len,
        losses=losses,
        max_q=max_q_trace,
        updates=updates,
        syncs=syncs,
    )


@dataclass
class MonitorOutcome:
    """What the watchdog saw: per-slot rewards of the greedy phases, the slot
    indices where retraining fired, and the final agent."""

    agent: TrainedAgent
    rewards: list[float]
    retrain_events: list[int]


def monitor_retrain(
    agent: TrainedAgent,
    env: SpectrumEnv,
    window_len: int,
    threshold: float,
    hyper: Hyperparams,
    slots: int,
    rng: np.random.Generator,
) -> MonitorOutcome:
    """Run the greedy policy; whenever the reward accumulated over the last
    window_len slots drops below threshold, retrain from scratch on the live
    environment (replay memory starts empty) and resume monitoring."""
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    rewards: list[float] = []
    retrain_events: list[int] = []
    window: deque[float] = deque(maxlen=window_len)
    window_sum = 0.0
    x = initial_agent_state(env)

    for slot in range(slots):
        vec = encode_state(x.last_action, x.observation, agent.n_actions)
        action = greedy_action(agent.params, vec)[0]
        outcome = env.step(action)
        rewards.append(outcome.reward)
        if len(window) == window_len:
            window_sum -= window[0]
        window.append(outcome.reward)
        window_sum += outcome.reward
        x = AgentState(action, outcome.observation)

        if len(window) == window_len and window_sum < threshold:
            retrain_events.append(slot)
            agent = train(env, hyper, rng)
            window.clear()
            window_sum = 0.0
            x = initial_agent_state(env)
    return MonitorOutcome(agent=agent, rewards=rewards, retrain_events=retrain_events)
