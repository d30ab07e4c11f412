"""Independent reference implementations used only by the tests.

Everything here is written from the problem statement with the dumbest
construction available (itertools enumeration, per-config Python loops,
explicit probability products) so it shares no code path with the package.
"""

from __future__ import annotations

import itertools

import numpy as np


def window_vacancies(bits: list[int], segment_len: int) -> list[int]:
    """Zero count of every length-C window, 1-indexed segments."""
    n = len(bits)
    counts = []
    for start in range(n - segment_len + 1):
        counts.append(sum(1 for b in bits[start : start + segment_len] if b == 0))
    return counts


def brute_feasible(bits: list[int], demand: int, segment_len: int) -> bool:
    return any(v >= demand for v in window_vacancies(bits, segment_len))


def brute_genie_action(bits: list[int], demand: int, segment_len: int) -> int:
    for idx, v in enumerate(window_vacancies(bits, segment_len), start=1):
        if v >= demand:
            return idx
    return 0


class BruteTopology:
    """Per-topology enumeration tables for expected-reward queries.

    Successor parent configurations come from itertools.product; the full
    channel state of each configuration and its per-action reward are built
    with plain Python once, so per-state queries only need the transition
    probabilities of the current parent values.
    """

    def __init__(self, config):
        self.config = config
        self.parents = list(config.independents)
        self.child_of = {child: (parent, rho) for child, parent, rho in config.dependents}
        self.configs = [list(c) for c in itertools.product([0, 1], repeat=len(self.parents))]
        self.rewards = []
        self.states = []
        for parent_bits in self.configs:
            bits = self._full_state(parent_bits)
            self.states.append(bits)
            row = [0.0]
            for v in window_vacancies(bits, config.segment_len):
                row.append(2.0 if v >= config.demand else -2.0)
            self.rewards.append(row)
        self.rewards = np.array(self.rewards)

    def _full_state(self, parent_bits: list[int]) -> list[int]:
        value = {}
        for parent, bit in zip(self.parents, parent_bits):
            value[parent] = bit
        for child, (parent, rho) in self.child_of.items():
            value[child] = value[parent] if rho == 1 else 1 - value[parent]
        return [value[ch] for ch in range(1, self.config.n_channels + 1)]

    def successor_probs(self, state) -> np.ndarray:
        p00, p11 = self.config.p00, self.config.p11
        trans = {
            (0, 0): p00,
            (0, 1): 1.0 - p00,
            (1, 0): 1.0 - p11,
            (1, 1): p11,
        }
        current = [int(state[parent - 1]) for parent in self.parents]
        probs = []
        for nxt in self.configs:
            p = 1.0
            for cur_bit, nxt_bit in zip(current, nxt):
                p *= trans[(cur_bit, nxt_bit)]
            probs.append(p)
        return np.array(probs)

    def expected_rewards(self, state) -> list[float]:
        """Expected reward of every action 0..N-C+1 from this state."""
        probs = self.successor_probs(state)
        return [float(probs @ self.rewards[:, a]) for a in range(self.rewards.shape[1])]

    def best_action(self, state, tie_tolerance: float = 1e-9) -> int:
        """Smallest action whose value is within tie_tolerance of the best.

        Mathematically tied actions differ by summation-order noise only, so
        anything inside the tolerance counts as the same value.
        """
        values = self.expected_rewards(state)
        best = max(values)
        for action, value in enumerate(values):
            if value >= best - tie_tolerance:
                return action
        raise AssertionError("max of values is always within tolerance")


def brute_forward(weights, biases, inputs):
    """Feedforward pass written as explicit per-layer loops: ReLU on every
    layer except the last, linear output."""
    x = np.asarray(inputs, dtype=float)
    for idx, (w, b) in enumerate(zip(weights, biases)):
        x = x @ w + b
        if idx < len(weights) - 1:
            x = np.where(x > 0.0, x, 0.0)
    return x


def finite_difference_grads(loss_fn, params, h: float = 1e-5):
    """Central differences of loss_fn over every weight and bias entry.

    params is any object with .weights and .biases lists of arrays; loss_fn
    takes (weights, biases) and returns a scalar. Returns (grad_weights,
    grad_biases) lists shaped like the parameters.
    """
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    grad_w = [np.zeros_like(w) for w in weights]
    grad_b = [np.zeros_like(b) for b in biases]
    for arrays, grads in ((weights, grad_w), (biases, grad_b)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.size):
                keep = flat[idx]
                flat[idx] = keep + h
                up = loss_fn(weights, biases)
                flat[idx] = keep - h
                down = loss_fn(weights, biases)
                flat[idx] = keep
                gflat[idx] = (up - down) / (2.0 * h)
    return grad_w, grad_b


def discounted_sum(rewards, gamma: float) -> float:
    total = 0.0
    for t, r in enumerate(rewards):
        total += (gamma ** t) * r
    return total


def random_small_config(rng: np.random.Generator):
    """A random valid scenario dict with i <= 6, explicit topology."""
    from dsasim.env import scenario_from_dict

    n = int(rng.integers(4, 11))
    c = int(rng.integers(1, n))
    d = int(rng.integers(1, c + 1))
    i = int(rng.integers(1, min(6, n) + 1))
    channels = list(rng.permutation(np.arange(1, n + 1)))
    independents = sorted(int(ch) for ch in channels[:i])
    dependents = []
    for ch in channels[i:]:
        parent = int(rng.choice(independents))
        rho = int(rng.choice([-1, 1]))
        dependents.append([int(ch), parent, rho])
    return scenario_from_dict(
        {
            "n_channels": n,
            "segment_len": c,
            "demand": d,
            "p00": float(rng.uniform(0.05, 0.95)),
            "p11": float(rng.uniform(0.05, 0.95)),
            "independents": independents,
            "dependents": dependents,
            "env_seed": int(rng.integers(0, 2**31)),
            "topology_seed": 0,
        }
    )
