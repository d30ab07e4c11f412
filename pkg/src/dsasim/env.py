"""Correlated N-channel Markov spectrum environment.

Channels are binary (0 = vacant, 1 = occupied). A subset of channels evolves
independently under a shared 2x2 transition matrix; every remaining channel
copies (rho = +1) or inverts (rho = -1) one independent parent, so the joint
chain has exactly 2^i reachable states for i independent channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class ScenarioError(ValueError):
    """Raised for invalid scenario configurations or scenario files."""


SCENARIO_KEYS = (
    "n_channels",
    "segment_len",
    "demand",
    "p00",
    "p11",
    "independents",
    "dependents",
    "env_seed",
    "topology_seed",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one channel system.

    Channel indices are 1-based. ``independents`` lists the channels that
    evolve on their own; ``dependents`` holds ``(child, parent, rho)`` triples
    where rho = +1 copies the parent and rho = -1 inverts it. ``p00`` is the
    probability a vacant channel stays vacant, ``p11`` the probability an
    occupied channel stays occupied (rows of the transition matrix sum to 1
    by construction).
    """

    n_channels: int
    segment_len: int
    demand: int
    p00: float
    p11: float
    independents: tuple[int, ...]
    dependents: tuple[tuple[int, int, int], ...]
    env_seed: int
    topology_seed: int = 0

    @property
    def p01(self) -> float:
        return 1.0 - self.p00

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def n_segments(self) -> int:
        return self.n_channels - self.segment_len + 1

    @property
    def n_actions(self) -> int:
        # idle plus one action per segment
        return self.n_channels - self.segment_len + 2

    @property
    def n_independents(self) -> int:
        return len(self.independents)

    def transition_matrix(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]], dtype=np.float64)

    def validate(self) -> None:
        n, c, d = self.n_channels, self.segment_len, self.demand
        if not 1 <= c < n:
            raise ScenarioError(f"segment_len must satisfy 1 <= C < N, got C={c}, N={n}")
        if not 1 <= d <= c:
            raise ScenarioError(f"demand must satisfy 1 <= d <= C, got demand={d}, C={c}")
        matrix = self.transition_matrix()
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0.0) or np.any(matrix > 1.0):
            raise ScenarioError(f"transition matrix entries must lie in [0,1], got p00={self.p00}, p11={self.p11}")
        if np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-12):
            raise ScenarioError("transition matrix rows must sum to 1")
        if not self.independents:
            raise ScenarioError("independents must list at least one channel")
        seen = set(self.independents)
        if len(seen) != len(self.independents):
            raise ScenarioError("independents contains duplicate channel indices")
        for child, parent, rho in self.dependents:
            if child in seen:
                raise ScenarioError(f"channel {child} assigned more than once")
            seen.add(child)
            if parent not in self.independents:
                raise ScenarioError(f"dependent channel {child} references non-independent parent {parent}")
            if rho not in (+1, -1):
                raise ScenarioError(f"dependent channel {child} has rho={rho}, expected +1 or -1")
        if seen != set(range(1, n + 1)):
            raise ScenarioError("independents and dependents must partition channels 1..N")


def generate_topology(
    n_channels: int, n_independents: int, rho: int, topology_seed: int
) -> tuple[tuple[int, ...], tuple[tuple[int, int, int], ...]]:
    """Draw a random correlation topology: which channels are independent and
    who parents each dependent. All dependents share the single rho."""
    if rho not in (+1, -1):
        raise ScenarioError(f"rho must be +1 or -1, got {rho}")
    if not 1 <= n_independents <= n_channels:
        raise ScenarioError(f"independents count must lie in 1..N, got {n_independents}")
    rng = np.random.default_rng(topology_seed)
    channels = np.arange(1, n_channels + 1)
    independents = np.sort(rng.choice(channels, size=n_independents, replace=False))
    independent_set = set(int(ch) for ch in independents)
    dependents = []
    for ch in channels:
        if int(ch) in independent_set:
            continue
        parent = int(rng.choice(independents))
        dependents.append((int(ch), parent, rho))
    return tuple(int(ch) for ch in independents), tuple(dependents)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from scenario-file contents.

    Two topology forms are accepted: explicit (``independents`` a list of
    channels and ``dependents`` a list of [child, parent, rho] triples) and
    auto-generated (``independents`` an integer count and ``dependents`` the
    shared rho, expanded deterministically from ``topology_seed``).
    """
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = sorted(set(raw) - set(SCENARIO_KEYS))
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
    missing = sorted(set(SCENARIO_KEYS) - set(raw))
    if missing:
        raise ScenarioError(f"missing scenario keys: {', '.join(missing)}")
    for key in ("n_channels", "segment_len", "demand", "env_seed", "topology_seed"):
        if not isinstance(raw[key], int) or isinstance(raw[key], bool):
            raise ScenarioError(f"{key} must be an integer")
    for key in ("p00", "p11"):
        if not isinstance(raw[key], (int, float)) or isinstance(raw[key], bool):
            raise ScenarioError(f"{key} must be a number")

    independents = raw["independents"]
    dependents = raw["dependents"]
    if isinstance(independents, int):
        if not isinstance(dependents, int):
            raise ScenarioError("auto topology needs dependents to be the shared rho (+1 or -1)")
        independents, dependents = generate_topology(
            raw["n_channels"], independents, dependents, raw["topology_seed"]
        )
    elif isinstance(independents, list):
        if not isinstance(dependents, list):
            raise ScenarioError("explicit topology needs dependents as a list of [child, parent, rho]")
        if not all(isinstance(ch, int) for ch in independents):
            raise ScenarioError("independents entries must be integers")
        triples = []
        for entry in dependents:
            if not (isinstance(entry, list) and len(entry) == 3 and all(isinstance(v, int) for v in entry)):
                raise ScenarioError(f"dependents entries must be [child, parent, rho] triples, got {entry!r}")
            triples.append((entry[0], entry[1], entry[2]))
        independents = tuple(independents)
        dependents = tuple(triples)
    else:
        raise ScenarioError("independents must be a list of channels or an integer count")

    config = ScenarioConfig(
        n_channels=raw["n_channels"],
        segment_len=raw["segment_len"],
        demand=raw["demand"],
        p00=float(raw["p00"]),
        p11=float(raw["p11"]),
        independents=independents,
        dependents=dependents,
        env_seed=raw["env_seed"],
        topology_seed=raw["topology_seed"],
    )
    config.validate()
    return config


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Serialize with the topology materialized (explicit form)."""
    return {
        "n_channels": config.n_channels,
        "segment_len": config.segment_len,
        "demand": config.demand,
        "p00": config.p00,
        "p11": config.p11,
        "independents": [int(ch) for ch in config.independents],
        "dependents": [[int(c), int(p), int(r)] for c, p, r in config.dependents],
        "env_seed": config.env_seed,
        "topology_seed": config.topology_seed,
    }


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw)


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(config), indent=2) + "\n")


@dataclass(frozen=True)
class StepOutcome:
    """Result of executing one action against the slot's realized state."""

    action: int
    observation: tuple[int, ...]
    feedback: int | None
    reward: float


def vacancy_count(bits: Sequence[int] | np.ndarray, segment: int, segment_len: int) -> int:
    """Number of vacant channels in 1-based segment k (channels k..k+C-1)."""
    bits = np.asarray(bits)
    n_segments = bits.shape[0] - segment_len + 1
    if not 1 <= segment <= n_segments:
        raise ScenarioError(f"segment index {segment} outside 1..{n_segments}")
    window = bits[segment - 1 : segment - 1 + segment_len]
    return int(np.sum(window == 0))


def feasible(bits: Sequence[int] | np.ndarray, demand: int, segment_len: int) -> bool:
    """True iff some segment holds at least ``demand`` vacant channels."""
    bits = np.asarray(bits)
    n_segments = bits.shape[0] - segment_len + 1
    zeros = (bits == 0).astype(np.int64)
    window = np.convolve(zeros, np.ones(segment_len, dtype=np.int64), mode="valid")
    return bool(np.any(window[:n_segments] >= demand))


def execute(state_next: Sequence[int] | np.ndarray, action: int, demand: int, segment_len: int) -> StepOutcome:
    """Apply one action to the state of the slot where it takes effect.

    Idle (action 0) transmits nothing but still senses segment 1; action k>=1
    senses segment k and earns 4f-2 with f = 1 iff the segment holds at least
    ``demand`` vacant channels.
    """
    bits = np.asarray(state_next)
    n_segments = bits.shape[0] - segment_len + 1
    if not 0 <= action <= n_segments:
        raise ScenarioError(f"action {action} outside 0..{n_segments}")
    segment = 1 if action == 0 else action
    observation = tuple(int(b) for b in bits[segment - 1 : segment - 1 + segment_len])
    if action == 0:
        return StepOutcome(action=0, observation=observation, feedback=None, reward=0.0)
    f = 1 if vacancy_count(bits, action, segment_len) >= demand else 0
    return StepOutcome(action=action, observation=observation, feedback=f, reward=float(4 * f - 2))


class SpectrumEnv:
    """Stateful simulator for one scenario.

    The per-slot protocol is: the agent picks an action from last slot's
    knowledge, the chain advances one step, and the action is executed against
    the new state (its reward and observation come from that state). Actions
    never influence the chain, so two environments built with equal seeds
    produce identical state trajectories regardless of policy.
    """

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator | None = None):
        config.validate()
        self.config = config
        self._rng = rng if rng is not None else np.random.default_rng(config.env_seed)
        self._p01 = config.p01
        self._p11 = config.p11
        slot_of = {ch: j for j, ch in enumerate(config.independents)}
        parent_slot = np.zeros(config.n_channels, dtype=np.int64)
        flip = np.zeros(config.n_channels, dtype=np.uint8)
        for ch in config.independents:
            parent_slot[ch - 1] = slot_of[ch]
        for child, parent, rho in config.dependents:
            parent_slot[child - 1] = slot_of[parent]
            flip[child - 1] = 0 if rho == +1 else 1
        self._parent_slot = parent_slot
        self._flip = flip
        self._parent_bits = self._draw_initial_parents()
        self._pending: np.ndarray | None = None

    @property
    def state(self) -> np.ndarray:
        """Current joint occupancy vector (copy)."""
        return self.state_from_parents(self._parent_bits)

    @property
    def parent_bits(self) -> np.ndarray:
        return self._parent_bits.copy()

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    def _draw_initial_parents(self) -> np.ndarray:
        p01, p10 = self.config.p01, self.config.p10
        pi0 = 0.5 if p01 + p10 == 0.0 else p10 / (p01 + p10)
        draws = self._rng.random(self.config.n_independents)
        return (draws >= pi0).astype(np.uint8)

    def state_from_parents(self, parent_bits: np.ndarray) -> np.ndarray:
        """Expand independent-channel bits into the full N-channel state."""
        return parent_bits[..., self._parent_slot] ^ self._flip

    def states_from_parents(self, parent_matrix: np.ndarray) -> np.ndarray:
        """Vectorized expansion of a (rows, i) matrix of parent configurations."""
        return parent_matrix[:, self._parent_slot] ^ self._flip

    def advance_parents(self, parent_bits: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """One Markov step of the independent channels."""
        rng = rng if rng is not None else self._rng
        draws = rng.random(parent_bits.shape[0])
        return np.where(parent_bits == 0, draws < self._p01, draws < self._p11).astype(np.uint8)

    def parents_of_state(self, state: Sequence[int] | np.ndarray) -> np.ndarray:
        """Independent-channel bits of a full state, in topology slot order."""
        idx = np.asarray(self.config.independents) - 1
        return np.asarray(state, dtype=np.uint8)[idx]

    def advance(self, state: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Functional step: advance an arbitrary valid state by one slot."""
        return self.state_from_parents(self.advance_parents(self.parents_of_state(state), rng))

    def peek_next(self) -> np.ndarray:
        """Realized next state, drawn once and reused by the following step."""
        if self._pending is None:
            self._pending = self.advance_parents(self._parent_bits)
        return self.state_from_parents(self._pending)

    def step(self, action: int) -> StepOutcome:
        """Advance one slot and execute ``action`` against the new state."""
        if self._pending is not None:
            nxt = self._pending
            self._pending = None
        else:
            nxt = self.advance_parents(self._parent_bits)
        self._parent_bits = nxt
        return execute(self.state_from_parents(nxt), action, self.config.demand, self.config.segment_len)

    def set_transition(self, p00: float, p11: float) -> None:
        """Swap channel dynamics mid-run (state is kept)."""
        if not (0.0 <= p00 <= 1.0 and 0.0 <= p11 <= 1.0):
            raise ScenarioError(f"transition matrix entries must lie in [0,1], got p00={p00}, p11={p11}")
        self.config = replace(self.config, p00=p00, p11=p11)
        self._p01 = self.config.p01
        self._p11 = self.config.p11
        self._pending = None

    def vacancy_count(self, bits: np.ndarray, segment: int) -> int:
        return vacancy_count(bits, segment, self.config.segment_len)

    def feasible(self, bits: np.ndarray) -> bool:
        return feasible(bits, self.config.demand, self.config.segment_len)


def build_scenario(config: ScenarioConfig, rng: np.random.Generator | None = None) -> SpectrumEnv:
    """Construct an environment with its initial state drawn from the
    stationary distribution of the per-channel chain."""
    return SpectrumEnv(config, rng=rng)
