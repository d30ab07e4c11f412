"""Simulator and agent suite for opportunistic spectrum access with channel
aggregation: correlated multichannel occupancy dynamics, sensing policies
(random, myopic one-step, tabular Q-learning, deep Q-network), exact planning
baselines, and an evaluation harness with CSV/JSON reports and figures."""

__version__ = "0.1.0"

from .dqn import DivergenceError, DQNPolicy, Hyperparams, ReplayMemory, TrainedAgent, encode_state, epsilon_at, train
from .env import ScenarioConfig, ScenarioError, SpectrumEnv, StepOutcome, load_scenario, save_scenario
from .metrics import MetricsReport, Situation, run_evaluation
from .oracles import QTable, expected_action_reward, genie_action, value_iteration
from .policies import (
    AgentState,
    GeniePolicy,
    ImprovidentPolicy,
    QTablePolicy,
    RandomPolicy,
    improvident_policy,
    initial_agent_state,
    random_policy,
    train_q_learning,
)

__all__ = [
    "AgentState",
    "DivergenceError",
    "DQNPolicy",
    "GeniePolicy",
    "Hyperparams",
    "ImprovidentPolicy",
    "MetricsReport",
    "QTable",
    "QTablePolicy",
    "RandomPolicy",
    "ReplayMemory",
    "ScenarioConfig",
    "ScenarioError",
    "Situation",
    "SpectrumEnv",
    "StepOutcome",
    "TrainedAgent",
    "__version__",
    "encode_state",
    "epsilon_at",
    "expected_action_reward",
    "genie_action",
    "improvident_policy",
    "initial_agent_state",
    "load_scenario",
    "random_policy",
    "run_evaluation",
    "save_scenario",
    "train",
    "train_q_learning",
    "value_iteration",
]
