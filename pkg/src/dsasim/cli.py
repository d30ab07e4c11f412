"""Command-line entry point: train single agents, evaluate policy suites on a
scenario, or run full sweep plans."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .dqn import DivergenceError, Hyperparams
from .env import ScenarioError, load_scenario
from .experiment import (
    LEARNABLE_POLICIES,
    OUTPUT_DIR_ENV,
    POLICY_NAMES,
    ConfigError,
    _write_manifest,
    eval_env,
    load_hyper,
    load_policy_checkpoint,
    parse_config,
    run_experiment,
    run_single,
    scenario_hash,
    train_policy,
)
from .metrics import DEFAULT_BETA, run_evaluation
from .neural import save_params
from .policies import save_qtable
from .report import emit_report, render_figures


def _resolve_out(flag_value: str | None, fallback: str | Path) -> Path:
    """Output directory precedence: explicit flag, then the environment
    override, then the caller's default."""
    if flag_value:
        return Path(flag_value)
    env_value = os.environ.get(OUTPUT_DIR_ENV)
    if env_value:
        return Path(env_value)
    return Path(fallback)


def _load_hyper_arg(path: str | None) -> Hyperparams:
    if path is None:
        return Hyperparams()
    return load_hyper(path)


def _cmd_train(args: argparse.Namespace) -> int:
    if args.policy not in LEARNABLE_POLICIES:
        raise ConfigError(f"--policy must be one of {', '.join(LEARNABLE_POLICIES)} for train, got {args.policy!r}")
    config = load_scenario(args.scenario)
    scenario_id = Path(args.scenario).stem
    hyper = _load_hyper_arg(args.hyper)
    out_dir = _resolve_out(args.out, "out")
    out_dir.mkdir(parents=True, exist_ok=True)

    result = train_policy(config, args.policy, hyper, repetition=args.rep, base_seed=args.seed)
    stem = out_dir / f"{scenario_id}_{args.policy}_rep{args.rep}"
    if args.policy == "dqn":
        checkpoint = stem.with_suffix(".npz")
        save_params(result.params, checkpoint)
        updates = result.updates
    else:
        checkpoint = stem.with_suffix(".qtable.txt")
        save_qtable(result, checkpoint)
        updates = hyper.max_train_iters
    _write_manifest(stem.with_suffix(".manifest.json"), config, args.policy, hyper, args.rep, args.seed, updates)
    print(f"trained {args.policy} on {scenario_id} ({updates} updates)")
    print(f"checkpoint: {checkpoint}")
    print(f"manifest:   {stem.with_suffix('.manifest.json')}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    scenario_id = Path(args.scenario).stem
    hyper = _load_hyper_arg(args.hyper)
    policies = args.policy or list(POLICY_NAMES)
    for name in policies:
        if name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {name!r}, expected one of {', '.join(POLICY_NAMES)}")
    if args.checkpoint is not None:
        if len(policies) != 1 or policies[0] not in LEARNABLE_POLICIES:
            raise ConfigError("--checkpoint needs exactly one learnable --policy")
    out_dir = _resolve_out(args.out, "out")
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    failures = 0
    for name in policies:
        try:
            if args.checkpoint is not None:
                policy = load_policy_checkpoint(name, args.checkpoint, config.n_actions)
                report = run_evaluation(
                    policy,
                    eval_env(config, args.rep),
                    slots=args.slots,
                    gamma=hyper.gamma,
                    beta=args.beta,
                    scenario_id=scenario_id,
                    repetition=args.rep,
                )
            else:
                report = run_single(
                    scenario_id=scenario_id,
                    config=config,
                    policy_name=name,
                    hyper=hyper,
                    slots=args.slots,
                    repetition=args.rep,
                    beta=args.beta,
                    base_seed=args.seed,
                    checkpoint_dir=None,
                )
        except (DivergenceError, OSError) as exc:
            failures += 1
            print(f"run failed: scenario={scenario_id} policy={name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            continue
        reports.append(report)
        print(
            f"{scenario_id} {name}: accuracy={report.decision_accuracy:.4f} "
            f"modified={report.modified_decision_accuracy:.4f} interference={report.interference:.4f}"
        )

    if reports:
        paths = emit_report(reports, args.format, out_dir)
        figures = render_figures(reports, out_dir / "figures")
        for path in paths + figures:
            print(f"wrote {path}")
    return 1 if failures else 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    plan = parse_config(args.plan)
    if args.jobs is not None:
        plan.jobs = args.jobs
    if args.format is not None:
        plan.fmt = args.format
    out_flag = args.out
    if out_flag or os.environ.get(OUTPUT_DIR_ENV):
        plan.output_dir = _resolve_out(out_flag, plan.output_dir)
    plan.validate()
    total = len(plan.scenarios) * len(plan.policies) * plan.repetitions
    print(f"sweep: {len(plan.scenarios)} scenarios x {len(plan.policies)} policies x {plan.repetitions} repetitions = {total} runs")
    status = run_experiment(plan)
    print(f"report under {plan.output_dir}")
    return status


def _cmd_hash(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    print(scenario_hash(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsasim",
        description="Spectrum sensing and aggregation simulator: train and evaluate channel-selection policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one learnable policy and save its checkpoint")
    train.add_argument("--scenario", required=True, help="scenario JSON file")
    train.add_argument("--policy", required=True, help="qlearning or dqn")
    train.add_argument("--hyper", help="hyperparameter JSON file (defaults when omitted)")
    train.add_argument("--seed", type=int, default=0, help="base seed for the agent RNG stream")
    train.add_argument("--rep", type=int, default=0, help="repetition index (varies the RNG streams)")
    train.add_argument("--out", help=f"output directory (default out/, env {OUTPUT_DIR_ENV} overrides)")
    train.set_defaults(handler=_cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate policies on one scenario and write a report")
    evaluate.add_argument("--scenario", required=True, help="scenario JSON file")
    evaluate.add_argument("--policy", action="append", help="policy name, repeatable (default: all)")
    evaluate.add_argument("--hyper", help="hyperparameter JSON file (defaults when omitted)")
    evaluate.add_argument("--slots", type=int, default=10_000, help="evaluation length in time slots")
    evaluate.add_argument("--seed", type=int, default=0, help="base seed for agent RNG streams")
    evaluate.add_argument("--rep", type=int, default=0, help="repetition index (varies the RNG streams)")
    evaluate.add_argument("--checkpoint", help="load this checkpoint instead of training (one learnable policy)")
    evaluate.add_argument("--beta", type=float, default=DEFAULT_BETA, help="conservative-decision credit in the modified accuracy")
    evaluate.add_argument("--format", choices=("csv", "json", "both"), default="csv", help="report format")
    evaluate.add_argument("--out", help=f"output directory (default out/, env {OUTPUT_DIR_ENV} overrides)")
    evaluate.set_defaults(handler=_cmd_eval)

    sweep = sub.add_parser("sweep", help="run a full experiment plan")
    sweep.add_argument("--plan", required=True, help="experiment plan JSON file")
    sweep.add_argument("--jobs", type=int, help="max parallel runs (default: plan value or 1)")
    sweep.add_argument("--format", choices=("csv", "json", "both"), help="override the plan's report format")
    sweep.add_argument("--out", help=f"override the plan's output directory (env {OUTPUT_DIR_ENV} also overrides)")
    sweep.set_defaults(handler=_cmd_sweep)

    fingerprint = sub.add_parser("hash", help="print the canonical scenario fingerprint")
    fingerprint.add_argument("--scenario", required=True, help="scenario JSON file")
    fingerprint.set_defaults(handler=_cmd_hash)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
