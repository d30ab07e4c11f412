"""Per-slot outcome classification and the derived run metrics: decision
accuracy, its conservative-credit variant, interference, discounted return,
and the averaged max-Q learning signal."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .env import SpectrumEnv
from .policies import AgentState, initial_agent_state

DEFAULT_BETA = 0.5


class Situation(Enum):
    """The four per-slot outcomes: idling when nothing was available, idling
    away a usable slot, transmitting successfully, or colliding."""

    RIGHT_IDLE = "right_idle"
    CONSERVATIVE = "conservative"
    SUCCESS = "success"
    FAILURE = "failure"


def classify_step(action: int, feedback: int | None, feasible_flag: bool) -> Situation:
    if action == 0:
        return Situation.CONSERVATIVE if feasible_flag else Situation.RIGHT_IDLE
    if feedback is None:
        raise ValueError("transmitting actions must carry feedback")
    return Situation.SUCCESS if feedback == 1 else Situation.FAILURE


@dataclass
class MetricsReport:
    """Counters and rates for one evaluation run. The reward series and the
    optional per-update max-Q trace ride along for plotting."""

    scenario_id: str
    policy: str
    repetition: int
    slots: int
    right_idle: int
    conservative: int
    success: int
    failure: int
    decision_accuracy: float
    modified_decision_accuracy: float
    beta: float
    interference: float
    discounted_return: float
    gamma: float
    wall_clock_per_decision: float
    rewards: list[float] = field(default_factory=list)
    avg_max_q_series: list[float] | None = None
    final_avg_max_q: float | None = None
    train_updates: int | None = None


def build_report(
    scenario_id: str,
    policy: str,
    repetition: int,
    counts: dict[Situation, int],
    rewards: list[float],
    gamma: float,
    beta: float,
    wall_clock_per_decision: float,
) -> MetricsReport:
    """Derive every rate from the raw counters (single place for the formulas)."""
    slots = sum(counts.values())
    if slots < 1:
        raise ValueError("cannot build a report over zero slots")
    right = counts[Situation.RIGHT_IDLE] + counts[Situation.SUCCESS]
    discounted = 0.0
    weight = 1.0
    for reward in rewards:
        discounted += weight * reward
        weight *= gamma
    return MetricsReport(
        scenario_id=scenario_id,
        policy=policy,
        repetition=repetition,
        slots=slots,
        right_idle=counts[Situation.RIGHT_IDLE],
        conservative=counts[Situation.CONSERVATIVE],
        success=counts[Situation.SUCCESS],
        failure=counts[Situation.FAILURE],
        decision_accuracy=right / slots,
        modified_decision_accuracy=(right + beta * counts[Situation.CONSERVATIVE]) / slots,
        beta=beta,
        interference=counts[Situation.FAILURE] / slots,
        discounted_return=discounted,
        gamma=gamma,
        wall_clock_per_decision=wall_clock_per_decision,
        rewards=rewards,
    )


def run_evaluation(
    policy,
    env: SpectrumEnv,
    slots: int,
    gamma: float,
    beta: float = DEFAULT_BETA,
    scenario_id: str = "",
    repetition: int = 0,
) -> MetricsReport:
    """Drive ``slots`` decision slots and classify each one. Wall-clock is the
    mean latency of the policy's decide call alone (training excluded)."""
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0,1], got {beta}")
    counts = {situation: 0 for situation in Situation}
    rewards: list[float] = []
    latency = 0.0
    x = initial_agent_state(env)
    for _ in range(slots):
        tic = time.perf_counter()
        action = policy.decide(x, env)
        latency += time.perf_counter() - tic
        outcome = env.step(action)
        counts[classify_step(action, outcome.feedback, env.feasible(env.state))] += 1
        rewards.append(outcome.reward)
        x = AgentState(action, outcome.observation)
    return build_report(
        scenario_id=scenario_id,
        policy=getattr(policy, "name", type(policy).__name__),
        repetition=repetition,
        counts=counts,
        rewards=rewards,
        gamma=gamma,
        beta=beta,
        wall_clock_per_decision=latency / slots,
    )


def avg_max_q(traces: Sequence[Sequence[float]], initial_state_count: int | None = None) -> list[float]:
    """Pointwise mean of per-update max-Q traces from runs that started in
    distinct initial states."""
    if len(traces) == 0:
        raise ValueError("avg_max_q needs at least one trace")
    if initial_state_count is not None and len(traces) != initial_state_count:
        raise ValueError(f"expected {initial_state_count} traces, got {len(traces)}")
    length = len(traces[0])
    for idx, trace in enumerate(traces):
        if len(trace) != length:
            raise ValueError(f"trace {idx} has length {len(trace)}, expected {length}")
    stacked = np.asarray(traces, dtype=np.float64)
    return list(stacked.mean(axis=0))


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """Plain trailing mean over full windows only."""
    values = np.asarray(series, dtype=np.float64)
    if window < 1 or window > values.shape[0]:
        raise ValueError(f"window must lie in 1..{values.shape[0]}, got {window}")
    kernel = np.ones(window, dtype=np.float64) / window
    return np.convolve(values, kernel, mode="valid")
