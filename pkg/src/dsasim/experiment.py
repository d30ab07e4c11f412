"""Experiment driver: plan files, seed derivation, per-run training and
evaluation, checkpoints with replay manifests, and sweep orchestration."""

from __future__ import annotations

import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dqn import DQNPolicy, Hyperparams, train
from .env import ScenarioConfig, ScenarioError, SpectrumEnv, load_scenario, scenario_from_dict, scenario_to_dict
from .metrics import DEFAULT_BETA, MetricsReport, run_evaluation
from .neural import load_params, save_params
from .policies import (
    GeniePolicy,
    ImprovidentPolicy,
    QTablePolicy,
    RandomPolicy,
    load_qtable,
    save_qtable,
    train_q_learning,
)
from .report import emit_report, render_figures

OUTPUT_DIR_ENV = "DSASIM_OUT"

POLICY_NAMES = ("random", "improvident", "qlearning", "dqn", "genie")
LEARNABLE_POLICIES = ("qlearning", "dqn")

# Sub-stream tags keeping every RNG purpose distinct and reproducible.
_POLICY_STREAM = {name: idx + 1 for idx, name in enumerate(POLICY_NAMES)}
_TRAIN_ENV_TAG = 104_729

PLAN_KEYS = ("scenarios", "policies", "hyper", "slots", "repetitions", "output_dir", "format", "beta", "jobs", "seed")


class ConfigError(ValueError):
    """Raised for malformed plan or hyperparameter files."""


@dataclass
class ExperimentPlan:
    scenarios: list[tuple[str, ScenarioConfig]]
    policies: list[str]
    hyper: Hyperparams
    slots: int
    repetitions: int
    output_dir: Path
    fmt: str = "csv"
    beta: float = DEFAULT_BETA
    jobs: int = 1
    base_seed: int = 0

    def validate(self) -> None:
        ids = [sid for sid, _ in self.scenarios]
        if not ids:
            raise ConfigError("plan needs at least one scenario")
        if len(set(ids)) != len(ids):
            raise ConfigError(f"scenario ids must be unique, got {ids}")
        if not self.policies:
            raise ConfigError("plan needs at least one policy")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {name!r}, expected one of {', '.join(POLICY_NAMES)}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.slots < 1:
            raise ConfigError(f"slots must be >= 1, got {self.slots}")
        if self.fmt not in ("csv", "json", "both"):
            raise ConfigError(f"format must be csv, json, or both, got {self.fmt!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0,1], got {self.beta}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def load_hyper(source: str | Path | dict, base_dir: Path | None = None) -> Hyperparams:
    """Hyperparameters from a JSON file or an inline mapping; unspecified
    fields keep their defaults."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read hyperparameter file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"hyperparameter file {path} is not valid JSON: {exc}") from exc
    try:
        return Hyperparams.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid hyperparameters: {exc}") from exc


def _scenario_entry(entry, base_dir: Path) -> tuple[str, ScenarioConfig]:
    if isinstance(entry, str):
        path = Path(entry)
        if not path.is_absolute():
            path = base_dir / path
        return path.stem, load_scenario(path)
    if isinstance(entry, dict):
        extra = sorted(set(entry) - {"id", "config"})
        if extra or set(entry) != {"id", "config"}:
            raise ConfigError(f"inline scenario entries need exactly the keys id and config, got {sorted(entry)}")
        return str(entry["id"]), scenario_from_dict(entry["config"])
    raise ConfigError(f"scenario entries must be file paths or {{id, config}} objects, got {entry!r}")


def parse_config(path: str | Path) -> ExperimentPlan:
    """Read and fully validate an experiment plan file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read plan file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"plan file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("plan must be a JSON object")
    unknown = sorted(set(raw) - set(PLAN_KEYS))
    if unknown:
        raise ConfigError(f"unknown plan keys: {', '.join(unknown)}")
    for key in ("scenarios", "policies", "hyper", "slots", "repetitions"):
        if key not in raw:
            raise ConfigError(f"plan is missing required key {key!r}")

    base_dir = path.parent
    try:
        scenarios = [_scenario_entry(entry, base_dir) for entry in raw["scenarios"]]
    except ScenarioError as exc:
        raise ConfigError(f"invalid scenario in plan: {exc}") from exc
    hyper = load_hyper(raw["hyper"], base_dir)

    output_dir = Path(raw.get("output_dir", "out"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    plan = ExperimentPlan(
        scenarios=scenarios,
        policies=list(raw["policies"]),
        hyper=hyper,
        slots=raw["slots"],
        repetitions=raw["repetitions"],
        output_dir=output_dir,
        fmt=raw.get("format", "csv"),
        beta=raw.get("beta", DEFAULT_BETA),
        jobs=raw.get("jobs", 1),
        base_seed=raw.get("seed", 0),
    )
    plan.validate()
    return plan


def plan_to_dict(plan: ExperimentPlan) -> dict:
    """Plan serialization with scenarios and hyperparameters inlined, so the
    emitted file is self-contained and re-parses to an equivalent plan."""
    return {
        "scenarios": [{"id": sid, "config": scenario_to_dict(cfg)} for sid, cfg in plan.scenarios],
        "policies": list(plan.policies),
        "hyper": plan.hyper.to_dict(),
        "slots": plan.slots,
        "repetitions": plan.repetitions,
        "output_dir": str(plan.output_dir),
        "format": plan.fmt,
        "beta": plan.beta,
        "jobs": plan.jobs,
        "seed": plan.base_seed,
    }


def save_plan(plan: ExperimentPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")


def scenario_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(scenario_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def eval_env(config: ScenarioConfig, repetition: int) -> SpectrumEnv:
    """Evaluation environment; every policy of one (scenario, repetition)
    shares this stream, so their state trajectories are identical."""
    return SpectrumEnv(config, rng=np.random.default_rng([config.env_seed, repetition]))


def train_env(config: ScenarioConfig, repetition: int, policy_name: str) -> SpectrumEnv:
    return SpectrumEnv(
        config,
        rng=np.random.default_rng([config.env_seed, repetition, _TRAIN_ENV_TAG, _POLICY_STREAM[policy_name]]),
    )


def agent_rng(base_seed: int, config: ScenarioConfig, repetition: int, policy_name: str) -> np.random.Generator:
    return np.random.default_rng([base_seed, config.env_seed, repetition, _POLICY_STREAM[policy_name]])


def train_policy(
    config: ScenarioConfig,
    policy_name: str,
    hyper: Hyperparams,
    repetition: int = 0,
    base_seed: int = 0,
):
    """Train a learnable policy on its own environment stream. Returns the
    TrainedAgent for dqn or the QTable for qlearning."""
    if policy_name not in LEARNABLE_POLICIES:
        raise ConfigError(f"policy {policy_name!r} is not trainable")
    env = train_env(config, repetition, policy_name)
    rng = agent_rng(base_seed, config, repetition, policy_name)
    if policy_name == "dqn":
        return train(env, hyper, rng)
    # The table updates one state-action cell per step, so the tabular run
    # gets its own (larger) step budget and keeps exploring across all of it;
    # a schedule that goes greedy early strands the walk in states whose
    # cells were never written.
    steps = hyper.max_train_iters if hyper.ql_train_steps is None else hyper.ql_train_steps
    horizon = max(1, steps)
    return train_q_learning(
        env,
        slots=steps,
        alpha=hyper.ql_alpha,
        gamma=hyper.gamma,
        rng=rng,
        epsilon_fn=lambda t: hyper.epsilon_start * max(0.0, 1.0 - t / horizon),
    )


def _write_manifest(path: Path, config: ScenarioConfig, policy_name: str, hyper: Hyperparams, repetition: int, base_seed: int, updates: int) -> None:
    manifest = {
        "package_version": __version__,
        "policy": policy_name,
        "scenario_sha256": scenario_hash(config),
        "hyper": hyper.to_dict(),
        "seeds": {
            "env_seed": config.env_seed,
            "topology_seed": config.topology_seed,
            "repetition": repetition,
            "base_seed": base_seed,
        },
        "train_updates": updates,
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def run_single(
    scenario_id: str,
    config: ScenarioConfig,
    policy_name: str,
    hyper: Hyperparams,
    slots: int,
    repetition: int,
    beta: float,
    base_seed: int,
    checkpoint_dir: Path | None = None,
) -> MetricsReport:
    """Train (when applicable) and evaluate one scenario/policy/repetition."""
    telemetry = None
    if policy_name == "random":
        policy = RandomPolicy(agent_rng(base_seed, config, repetition, policy_name))
    elif policy_name == "improvident":
        policy = ImprovidentPolicy()
    elif policy_name == "genie":
        policy = GeniePolicy()
    elif policy_name == "qlearning":
        table = train_policy(config, policy_name, hyper, repetition, base_seed)
        policy = QTablePolicy(table)
        if checkpoint_dir is not None:
            stem = checkpoint_dir / f"{scenario_id}_{policy_name}_rep{repetition}"
            save_qtable(table, stem.with_suffix(".qtable.txt"))
            ql_steps = hyper.max_train_iters if hyper.ql_train_steps is None else hyper.ql_train_steps
            _write_manifest(stem.with_suffix(".manifest.json"), config, policy_name, hyper, repetition, base_seed, ql_steps)
    elif policy_name == "dqn":
        agent = train_policy(config, policy_name, hyper, repetition, base_seed)
        telemetry = agent
        policy = DQNPolicy(agent.params, agent.n_actions)
        if checkpoint_dir is not None:
            stem = checkpoint_dir / f"{scenario_id}_{policy_name}_rep{repetition}"
            save_params(agent.params, stem.with_suffix(".npz"))
            _write_manifest(stem.with_suffix(".manifest.json"), config, policy_name, hyper, repetition, base_seed, agent.updates)
    else:
        raise ConfigError(f"unknown policy {policy_name!r}")

    report = run_evaluation(
        policy,
        eval_env(config, repetition),
        slots=slots,
        gamma=hyper.gamma,
        beta=beta,
        scenario_id=scenario_id,
        repetition=repetition,
    )
    if telemetry is not None:
        report.avg_max_q_series = list(telemetry.max_q)
        report.train_updates = telemetry.updates
        if telemetry.max_q:
            tail = telemetry.max_q[-min(500, len(telemetry.max_q)) :]
            report.final_avg_max_q = float(np.mean(tail))
    return report


def _run_task(task: dict):
    """Worker wrapper: never lets an exception cross the process boundary."""
    try:
        config = scenario_from_dict(task["config"])
        hyper = Hyperparams.from_dict(task["hyper"])
        checkpoint_dir = Path(task["checkpoint_dir"]) if task["checkpoint_dir"] else None
        report = run_single(
            scenario_id=task["scenario_id"],
            config=config,
            policy_name=task["policy"],
            hyper=hyper,
            slots=task["slots"],
            repetition=task["repetition"],
            beta=task["beta"],
            base_seed=task["base_seed"],
            checkpoint_dir=checkpoint_dir,
        )
        return ("ok", task["key"], report)
    except Exception as exc:  # noqa: BLE001 - isolation boundary per run
        return ("fail", task["key"], f"{type(exc).__name__}: {exc}")


def run_experiment(plan: ExperimentPlan) -> int:
    """Execute the full sweep; returns the process exit status (0 clean,
    1 if any run failed). Failed runs are reported and skipped, the rest of
    the sweep still completes."""
    plan.validate()
    out_dir = plan.output_dir
    checkpoint_dir = out_dir / "checkpoints"
    needs_checkpoints = any(p in LEARNABLE_POLICIES for p in plan.policies)
    out_dir.mkdir(parents=True, exist_ok=True)
    if needs_checkpoints:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for scenario_idx, (scenario_id, config) in enumerate(plan.scenarios):
        for repetition in range(plan.repetitions):
            for policy_idx, policy_name in enumerate(plan.policies):
                tasks.append(
                    {
                        "key": (scenario_idx, repetition, policy_idx),
                        "scenario_id": scenario_id,
                        "config": scenario_to_dict(config),
                        "policy": policy_name,
                        "hyper": plan.hyper.to_dict(),
                        "slots": plan.slots,
                        "repetition": repetition,
                        "beta": plan.beta,
                        "base_seed": plan.base_seed,
                        "checkpoint_dir": str(checkpoint_dir) if needs_checkpoints else "",
                    }
                )

    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(task) for task in tasks]

    reports: list[tuple[tuple, MetricsReport]] = []
    failures: list[tuple[tuple, str]] = []
    for status, key, payload in outcomes:
        if status == "ok":
            reports.append((key, payload))
        else:
            failures.append((key, payload))

    for key, message in failures:
        scenario_id = plan.scenarios[key[0]][0]
        policy_name = plan.policies[key[2]]
        print(f"run failed: scenario={scenario_id} policy={policy_name} repetition={key[1]}: {message}", file=sys.stderr)

    if reports:
        ordered = [report for _, report in sorted(reports, key=lambda pair: pair[0])]
        emit_report(ordered, plan.fmt, out_dir)
        render_figures(ordered, out_dir / "figures")
    return 1 if failures else 0


def load_policy_checkpoint(policy_name: str, path: str | Path, n_actions: int):
    """Rebuild an evaluation policy from a checkpoint file."""
    if policy_name == "dqn":
        params = load_params(path)
        return DQNPolicy(params, n_actions)
    if policy_name == "qlearning":
        table = load_qtable(path)
        if table.n_actions != n_actions:
            raise ConfigError(f"checkpoint has {table.n_actions} actions, scenario needs {n_actions}")
        return QTablePolicy(table)
    raise ConfigError(f"policy {policy_name!r} does not take checkpoints")
