"""Tests for the deep Q-learning agent: hyperparameter validation, state
encoding, the epsilon schedule, action selection, bootstrap targets, replay
memory semantics, the training loop's counters and telemetry, and the
reward-watchdog retraining monitor."""

import numpy as np
import pytest

from dsasim.dqn import (
    DivergenceError,
    DQNPolicy,
    Hyperparams,
    MonitorOutcome,
    NetworkParams,
    ReplayMemory,
    Transition,
    compute_targets,
    encode_state,
    decode_state,
    epsilon_at,
    greedy_action,
    monitor_retrain,
    select_action,
    sync_target,
    train,
)
from dsasim.env import ScenarioConfig, SpectrumEnv
from dsasim.policies import initial_agent_state

TINY_HYPER = Hyperparams(
    memory_size=512,
    batch_size=8,
    gamma=0.9,
    learning_rate=0.005,
    epsilon_start=0.9,
    epsilon_decay_steps=400,
    target_sync_freq=100,
    max_train_iters=800,
    warmup_size=50,
)


def make_env(**overrides) -> SpectrumEnv:
    base = {
        "n_channels": 3,
        "segment_len": 2,
        "demand": 1,
        "p00": 0.8,
        "p11": 0.2,
        "independents": (1, 2),
        "dependents": ((3, 1, -1),),
        "env_seed": 0,
        "topology_seed": 0,
    }
    base.update(overrides)
    return SpectrumEnv(ScenarioConfig(**base), rng=np.random.default_rng(base["env_seed"]))


# ------------------------------------------------------------- hyperparams


def test_hyperparams_defaults_are_valid():
    Hyperparams().validate()


@pytest.mark.parametrize(
    "overrides,fragment",
    [
        ({"batch_size": 0}, "batch_size"),
        ({"batch_size": 2000, "warmup_size": 1000}, "batch_size"),
        ({"warmup_size": 60_000}, "warmup_size"),
        ({"gamma": 0.0}, "gamma"),
        ({"gamma": 1.0}, "gamma"),
        ({"epsilon_start": 1.5}, "epsilon_start"),
        ({"epsilon_decay_steps": 0}, "epsilon_decay_steps"),
        ({"target_sync_freq": 0}, "target_sync_freq"),
        ({"max_train_iters": -1}, "max_train_iters"),
        ({"learning_rate": 0.0}, "learning_rate"),
        ({"ql_alpha": 0.0}, "ql_alpha"),
    ],
)
def test_hyperparams_validation_names_the_offender(overrides, fragment):
    hyper = Hyperparams(**overrides)
    with pytest.raises(ValueError, match=fragment):
        hyper.validate()


def test_hyperparams_dict_round_trip():
    hyper = Hyperparams(memory_size=1234, batch_size=16, warmup_size=100)
    again = Hyperparams.from_dict(hyper.to_dict())
    assert again == hyper


def test_hyperparams_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="momentum"):
        Hyperparams.from_dict({"momentum": 0.9})


def test_hyperparams_from_dict_accepts_partial_dicts():
    hyper = Hyperparams.from_dict({"batch_size": 4})
    assert hyper.batch_size == 4
    assert hyper.memory_size == Hyperparams().memory_size


# ----------------------------------------------------------- state encoding


def test_encode_state_one_hot_position_is_action_plus_one():
    # 24 channels sensed 8 at a time: 18 actions, 26-dimensional encoding.
    vec = encode_state(0, [0] * 8, 18)
    assert vec.shape == (26,)
    assert vec[0] == 1.0
    assert np.all(vec[1:] == 0.0)


def test_encode_state_last_segment_all_ones():
    vec = encode_state(17, [1] * 8, 18)
    assert np.sum(vec[:18]) == 1.0
    assert vec[17] == 1.0
    assert np.all(vec[18:] == 1.0)


def test_encode_decode_round_trip_exhaustive():
    # Every action and observation pattern for a 6-channel, 2-sense setup.
    n_actions = 6
    for action in range(n_actions):
        for o0 in (0, 1):
            for o1 in (0, 1):
                vec = encode_state(action, (o0, o1), n_actions)
                assert decode_state(vec, n_actions) == (action, (o0, o1))


def test_encode_state_rejects_bad_inputs():
    with pytest.raises(ValueError):
        encode_state(-1, [0, 0], 4)
    with pytest.raises(ValueError):
        encode_state(4, [0, 0], 4)
    with pytest.raises(ValueError):
        encode_state(1, [0, 2], 4)


def test_decode_state_rejects_non_one_hot_head():
    with pytest.raises(ValueError):
        decode_state(np.zeros(6), 4)
    vec = encode_state(1, (0, 1), 4)
    vec[2] = 1.0
    with pytest.raises(ValueError):
        decode_state(vec, 4)


# --------------------------------------------------------- epsilon schedule


def test_epsilon_schedule_endpoints_and_midpoint():
    hyper = Hyperparams()
    assert epsilon_at(0, hyper) == pytest.approx(0.9)
    assert epsilon_at(5_000, hyper) == pytest.approx(0.45)
    assert epsilon_at(10_000, hyper) == 0.0
    assert epsilon_at(123_456, hyper) == 0.0


def test_epsilon_schedule_is_monotone_nonincreasing():
    hyper = Hyperparams(epsilon_decay_steps=997)
    values = [epsilon_at(t, hyper) for t in range(0, 1_200, 7)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_epsilon_rejects_negative_iteration():
    with pytest.raises(ValueError):
        epsilon_at(-1, Hyperparams())


# ----------------------------------------------------------- action choice


def constant_net(bias_values) -> NetworkParams:
    """Single linear layer ignoring its input: outputs equal the bias row."""
    bias = np.asarray(bias_values, dtype=np.float64)
    return NetworkParams(weights=[np.zeros((3, bias.size))], biases=[bias])


def test_select_action_epsilon_zero_is_argmax():
    params = constant_net([0.0, 0.0, 1.0, 0.0])
    rng = np.random.default_rng(0)
    x = np.zeros(3)
    assert all(select_action(params, x, 0.0, rng) == 2 for _ in range(50))


def test_greedy_action_breaks_ties_toward_smallest_index():
    params = constant_net([0.5, 0.5, 0.5, 0.5])
    action, value = greedy_action(params, np.zeros(3))
    assert action == 0
    assert value == pytest.approx(0.5)


def test_select_action_epsilon_one_is_uniform():
    params = constant_net([0.0, 0.0, 1.0, 0.0])
    rng = np.random.default_rng(1)
    x = np.zeros(3)
    draws = np.array([select_action(params, x, 1.0, rng) for _ in range(100_000)])
    for action in range(4):
        assert np.mean(draws == action) == pytest.approx(0.25, abs=0.01)


def test_select_action_mixture_law_at_half_epsilon():
    params = constant_net([0.0, 0.0, 1.0, 0.0])
    rng = np.random.default_rng(2)
    x = np.zeros(3)
    draws = np.array([select_action(params, x, 0.5, rng) for _ in range(100_000)])
    assert np.mean(draws == 2) == pytest.approx(0.5 + 0.5 / 4, abs=0.01)
    assert np.mean(draws == 0) == pytest.approx(0.5 / 4, abs=0.01)


def test_select_action_rejects_bad_epsilon():
    params = constant_net([0.0, 1.0])
    with pytest.raises(ValueError):
        select_action(params, np.zeros(3), 1.5, np.random.default_rng(0))


# -------------------------------------------------------- bootstrap targets


def test_compute_targets_substitution():
    target = constant_net([1.0, 0.0, -5.0])
    y = compute_targets(target, np.array([2.0]), np.zeros((1, 3)), gamma=0.9)
    assert y[0] == pytest.approx(2.9)


def test_compute_targets_zero_net_returns_rewards():
    target = constant_net([0.0, 0.0, 0.0])
    rewards = np.array([-2.0, 0.0, 2.0])
    y = compute_targets(target, rewards, np.zeros((3, 3)), gamma=0.9)
    np.testing.assert_allclose(y, rewards)


def test_compute_targets_ignores_other_networks():
    target = constant_net([1.0, 0.0, 0.0])
    live = constant_net([100.0, 0.0, 0.0])
    before = compute_targets(target, np.array([0.0, 2.0]), np.zeros((2, 3)), 0.9)
    live.biases[0][:] = -77.0
    after = compute_targets(target, np.array([0.0, 2.0]), np.zeros((2, 3)), 0.9)
    np.testing.assert_array_equal(before, after)


def test_sync_target_is_bit_exact_and_detached():
    rng = np.random.default_rng(3)
    live = NetworkParams(
        weights=[rng.normal(size=(4, 5)), rng.normal(size=(5, 3))],
        biases=[rng.normal(size=5), rng.normal(size=3)],
    )
    target = sync_target(live)
    x = rng.normal(size=4)
    from dsasim.neural import forward

    assert np.array_equal(forward(target, x), forward(live, x))
    live.weights[0][:] = 0.0
    assert not np.array_equal(forward(target, x), forward(live, x))


# ------------------------------------------------------------ replay memory


def encoded(state_dim: int, tag: float) -> np.ndarray:
    vec = np.zeros(state_dim)
    vec[0] = tag
    return vec


def test_replay_memory_is_strict_fifo():
    memory = ReplayMemory(capacity=5, state_dim=2)
    for j in range(8):
        reward = (-2.0, 0.0, 2.0)[j % 3]
        memory.push(Transition(encoded(2, j), j, reward, encoded(2, j)))
        assert len(memory) <= 5
    kept = memory.contents()
    assert [t.action for t in kept] == [3, 4, 5, 6, 7]


def test_replay_memory_sample_draws_only_current_contents():
    memory = ReplayMemory(capacity=4, state_dim=2)
    for j in range(11):
        memory.push(Transition(encoded(2, j), j, 0.0, encoded(2, j)))
    _, actions, _, _ = memory.sample(1_000, np.random.default_rng(0))
    assert set(actions) <= {7, 8, 9, 10}


def test_replay_memory_sampling_is_uniform():
    memory = ReplayMemory(capacity=100, state_dim=1)
    for j in range(100):
        memory.push(Transition(np.zeros(1), j, 0.0, np.zeros(1)))
    _, actions, _, _ = memory.sample(100_000, np.random.default_rng(5))
    freqs = np.bincount(actions, minlength=100) / 100_000
    assert np.max(np.abs(freqs - 0.01)) < 0.02


def test_replay_memory_validation():
    with pytest.raises(ValueError):
        ReplayMemory(capacity=0, state_dim=3)
    memory = ReplayMemory(capacity=3, state_dim=3)
    with pytest.raises(ValueError, match="reward"):
        memory.push(Transition(np.zeros(3), 0, 1.5, np.zeros(3)))
    with pytest.raises(ValueError, match="state_dim"):
        memory.push(Transition(np.zeros(4), 0, 2.0, np.zeros(3)))
    with pytest.raises(ValueError):
        memory.sample(4, np.random.default_rng(0))


def test_replay_memory_clear_empties():
    memory = ReplayMemory(capacity=3, state_dim=1)
    memory.push(Transition(np.zeros(1), 0, 2.0, np.zeros(1)))
    memory.clear()
    assert len(memory) == 0
    with pytest.raises(ValueError):
        memory.sample(1, np.random.default_rng(0))


def test_replay_memory_sample_with_replacement_beats_size():
    memory = ReplayMemory(capacity=10, state_dim=1)
    memory.push(Transition(np.zeros(1), 7, 0.0, np.zeros(1)))
    _, actions, _, _ = memory.sample(32, np.random.default_rng(0))
    assert actions.shape == (32,)
    assert np.all(actions == 7)


# ------------------------------------------------------------ training loop


def test_train_counters_and_telemetry_lengths():
    env = make_env()
    agent = train(env, TINY_HYPER, np.random.default_rng(11), hidden_dim=8, hidden_layers=1)
    assert agent.updates == TINY_HYPER.max_train_iters
    assert agent.syncs == TINY_HYPER.max_train_iters // TINY_HYPER.target_sync_freq
    assert len(agent.losses) == agent.updates
    assert len(agent.max_q) == agent.updates
    assert all(np.isfinite(agent.losses))
    assert agent.n_actions == env.config.n_actions
    assert agent.obs_len == env.config.segment_len


def test_train_zero_iterations_returns_untrained_net():
    env = make_env()
    hyper = Hyperparams(
        memory_size=64, batch_size=4, warmup_size=8, max_train_iters=0
    )
    agent = train(env, hyper, np.random.default_rng(0), hidden_dim=4, hidden_layers=1)
    assert agent.updates == 0
    assert agent.syncs == 0
    assert agent.losses == []
    assert agent.max_q == []


def test_train_is_seed_deterministic():
    hyper = Hyperparams(
        memory_size=256, batch_size=8, warmup_size=32, max_train_iters=120,
        target_sync_freq=40, epsilon_decay_steps=100,
    )
    agents = [
        train(make_env(), hyper, np.random.default_rng(99), hidden_dim=6, hidden_layers=1)
        for _ in range(2)
    ]
    for wa, wb in zip(agents[0].params.weights, agents[1].params.weights):
        assert np.array_equal(wa, wb)
    assert agents[0].losses == agents[1].losses
    assert agents[0].max_q == agents[1].max_q


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_train_raises_divergence_error_on_exploding_loss():
    # Adam steps are bounded by the learning rate, so the rate must be large
    # enough that a single update pushes the squared error past float range.
    env = make_env()
    hyper = Hyperparams(
        memory_size=128, batch_size=8, warmup_size=16, max_train_iters=500,
        learning_rate=1e80,
    )
    with pytest.raises(DivergenceError):
        train(env, hyper, np.random.default_rng(3), hidden_dim=6, hidden_layers=1)


def test_train_learns_to_transmit_on_an_always_vacant_channel():
    # p00=1 and p11=0 drive every channel vacant and keep it there, so any
    # segment action earns +2 each slot while idling earns 0.  The greedy
    # policy after training must transmit from every agent state it visits.
    env = make_env(p00=1.0, p11=0.0, env_seed=5)
    agent = train(env, TINY_HYPER, np.random.default_rng(7), hidden_dim=8, hidden_layers=1)
    policy = DQNPolicy(agent.params, agent.n_actions)
    x = initial_agent_state(env)
    rewards = []
    for _ in range(50):
        action = policy.decide(x, env)
        outcome = env.step(action)
        rewards.append(outcome.reward)
        x = type(x)(action, outcome.observation)
    assert rewards == [2.0] * 50


def test_dqn_policy_is_deterministic_given_params():
    env = make_env()
    agent = train(env, TINY_HYPER, np.random.default_rng(1), hidden_dim=6, hidden_layers=1)
    policy = DQNPolicy(agent.params, agent.n_actions)
    x = initial_agent_state(env)
    first = policy.decide(x, env)
    assert all(policy.decide(x, env) == first for _ in range(10))


# -------------------------------------------------------- retrain watchdog


RETRAIN_HYPER = Hyperparams(
    memory_size=64, batch_size=4, warmup_size=8, max_train_iters=12,
    target_sync_freq=5, epsilon_decay_steps=10,
)


def test_monitor_never_retrains_a_performing_agent():
    env = make_env(p00=1.0, p11=0.0, env_seed=5)
    agent = train(env, TINY_HYPER, np.random.default_rng(7), hidden_dim=8, hidden_layers=1)
    outcome = monitor_retrain(
        agent, env, window_len=20, threshold=10.0, hyper=TINY_HYPER,
        slots=500, rng=np.random.default_rng(0),
    )
    assert outcome.retrain_events == []
    assert len(outcome.rewards) == 500
    assert outcome.agent is agent


def test_monitor_threshold_minus_inf_matches_pure_greedy():
    agent = train(make_env(), TINY_HYPER, np.random.default_rng(2), hidden_dim=6, hidden_layers=1)
    env_a = make_env(env_seed=33)
    env_b = make_env(env_seed=33)
    watched = monitor_retrain(
        agent, env_a, window_len=5, threshold=-np.inf, hyper=TINY_HYPER,
        slots=300, rng=np.random.default_rng(0),
    )
    policy = DQNPolicy(agent.params, agent.n_actions)
    x = initial_agent_state(env_b)
    manual = []
    for _ in range(300):
        action = policy.decide(x, env_b)
        step = env_b.step(action)
        manual.append(step.reward)
        x = type(x)(action, step.observation)
    assert watched.retrain_events == []
    assert watched.rewards == manual


def test_monitor_retrains_when_window_starves():
    # An untrained net on a harsh environment cannot keep the windowed reward
    # above an impossible threshold, so the watchdog must fire on the first
    # full window and, because the window restarts after retraining, every
    # following event is at least a full window later.
    env = make_env(p00=0.2, p11=0.8, env_seed=9)
    seed_agent = train(env, RETRAIN_HYPER, np.random.default_rng(4), hidden_dim=4, hidden_layers=1)
    outcome = monitor_retrain(
        seed_agent, env, window_len=10, threshold=1e9, hyper=RETRAIN_HYPER,
        slots=100, rng=np.random.default_rng(8),
    )
    assert outcome.retrain_events[0] == 9
    gaps = np.diff(outcome.retrain_events)
    assert np.all(gaps >= 10)
    assert outcome.agent is not seed_agent


def test_monitor_rejects_bad_window():
    agent = train(make_env(), RETRAIN_HYPER, np.random.default_rng(0), hidden_dim=4, hidden_layers=1)
    with pytest.raises(ValueError):
        monitor_retrain(
            agent, make_env(), window_len=0, threshold=0.0,
            hyper=RETRAIN_HYPER, slots=10, rng=np.random.default_rng(0),
        )


def test_monitor_outcome_reports_rewards_for_every_slot():
    env = make_env()
    agent = train(env, RETRAIN_HYPER, np.random.default_rng(5), hidden_dim=4, hidden_layers=1)
    outcome = monitor_retrain(
        agent, env, window_len=50, threshold=-1e9, hyper=RETRAIN_HYPER,
        slots=123, rng=np.random.default_rng(1),
    )
    assert isinstance(outcome, MonitorOutcome)
    assert len(outcome.rewards) == 123
    assert set(outcome.rewards) <= {-2.0, 0.0, 2.0}
