"""Command-line entry point.

Subcommands: train, eval, compare, transfer, sweep, probe. Every run is a
pure function of its flags and input files; outputs carry no timestamps.

Exit codes: 0 success, 1 usage error, 2 configuration or validation error.
Set AUTOSCALE_LOG=DEBUG|INFO|WARNING|ERROR for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from statistics import median

import numpy as np

from .agent import (
    ARRIVAL_MODELS,
    Hyperparams,
    QTable,
    QTableFormatError,
    detect_convergence,
    train,
    transfer_init,
)
from .harness import compare, emit_report, fmt, overhead_probe, run_experiment
from .policies import AgentPolicy, OraclePolicy, fit_comparators, fixed_policies, reward_model
from .profiles import WorldConfigError, load_world_file, resolve_world_path
from .scenarios import variance_grid

log = logging.getLogger("infersched")

POLICY_NAMES = ("agent", "oracle", "edge-cpu", "edge-best", "cloud", "connected-edge", "lr", "knn")
GRID = "GRID"


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_list(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser, *, scenario=True, policies=False, steps=False, episodes=True):
    p.add_argument("--world", default="mi8pro.world",
                   help="world file path or shipped world name (default: mi8pro.world)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random stream (default: 0)")
    p.add_argument("--out", default=".", help="output directory, created if missing (default: .)")
    if scenario:
        p.add_argument("--scenario", default="S1",
                       help=f"comma-separated scenario ids from the world, or {GRID} for the "
                            "full 64-cell variance grid (default: S1)")
    if policies:
        p.add_argument("--policies", default=",".join(POLICY_NAMES),
                       help=f"comma-separated policy names from {', '.join(POLICY_NAMES)} (default: all)")
    if steps:
        p.add_argument("--steps", type=int, default=100, help="evaluation inferences per run (default: 100)")
    if episodes:
        p.add_argument("--episodes", type=int, default=100,
                       help="training episodes; one episode runs every NN once per scenario (default: 100)")
        p.add_argument("--nns", default=None, help="comma-separated NN names (default: all in the world)")
        p.add_argument("--arrival", choices=ARRIVAL_MODELS, default="round_robin",
                       help="request arrival model used for the next state (default: round_robin)")
    hp = p.add_argument_group("hyperparameters")
    hp.add_argument("--learning-rate", type=float, default=0.9, help="Q-update learning rate (default: 0.9)")
    hp.add_argument("--discount", type=float, default=0.1, help="discount factor (default: 0.1)")
    hp.add_argument("--epsilon", type=float, default=0.1, help="exploration probability in training (default: 0.1)")
    hp.add_argument("--alpha", type=float, default=0.1, help="latency weight in the reward (default: 0.1)")
    hp.add_argument("--beta", type=float, default=0.1, help="accuracy weight in the reward (default: 0.1)")
    hp.add_argument("--normalized-units", action="store_true",
                    help="divide latency by the QoS target and energy by --energy-scale in the reward")
    hp.add_argument("--energy-scale", type=float, default=1.0,
                    help="energy divisor in joules for --normalized-units (default: 1.0)")
    hp.add_argument("--negate-latency-term", action="store_true",
                    help="subtract instead of add the latency term when QoS is met")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infersched", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a Q-table; writes qtable.qtab and reward_history.csv")
    _add_common(p)
    p.add_argument("--q-in", default=None, help="start from this Q-table instead of a random one")

    p = sub.add_parser("eval", help="run one policy on each scenario; writes CSV and JSON reports")
    _add_common(p, steps=True)
    p.add_argument("--policy", default="agent", help=f"one of {', '.join(POLICY_NAMES)} (default: agent)")
    p.add_argument("--q-in", default=None, help="evaluate this Q-table instead of training the agent first")
    p.add_argument("--k", type=int, default=5, help="neighbours for the knn policy (1, 3 or 5; default: 5)")

    p = sub.add_parser("compare", help="run several policies per scenario; writes comparison CSVs")
    _add_common(p, policies=True, steps=True)
    p.add_argument("--q-in", default=None, help="use this Q-table for the agent instead of training")
    p.add_argument("--k", type=int, default=5, help="neighbours for the knn policy (1, 3 or 5; default: 5)")

    p = sub.add_parser("transfer", help="paired scratch vs transfer-initialised training on a target world")
    _add_common(p)
    p.add_argument("--from", dest="q_from", required=True, help="trained source Q-table")
    p.add_argument("--seeds", type=int, default=10, help="number of paired seeds, starting at --seed (default: 10)")
    p.add_argument("--window", type=int, default=10, help="convergence window (default: 10)")
    p.add_argument("--tol", type=float, default=0.05, help="convergence tolerance (default: 0.05)")

    p = sub.add_parser("sweep", help="compare over scenarios x seeds; writes per-cell reports and sweep.csv")
    _add_common(p, policies=True, steps=True)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at --seed (default: 3)")
    p.add_argument("--k", type=int, default=5, help="neighbours for the knn policy (1, 3 or 5; default: 5)")

    p = sub.add_parser("probe", help="decision-time and table-size overhead of a Q-table")
    _add_common(p)
    p.add_argument("--q-in", default=None, help="probe this Q-table instead of training one")
    p.add_argument("--trials", type=int, default=10000, help="timed decisions (default: 10000)")
    return parser


# ---------------------------------------------------------------------------
# shared plumbing


def _hyperparams(args) -> Hyperparams:
    try:
        return Hyperparams(
            learning_rate=args.learning_rate, discount=args.discount, epsilon=args.epsilon,
            alpha=args.alpha, beta=args.beta, normalized_units=args.normalized_units,
            energy_scale_j=args.energy_scale, negate_latency_term=args.negate_latency_term,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _world(args):
    try:
        return load_world_file(resolve_world_path(args.world))
    except FileNotFoundError as exc:
        raise ConfigError(f"world file not found: {exc}") from None
    except WorldConfigError as exc:
        raise ConfigError(f"invalid world: {exc}") from None


def _scenarios(world, text: str, *, allow_grid: bool) -> list:
    ids = _csv_list(text)
    if not ids:
        raise ConfigError("no scenario given")
    out = []
    for sid in ids:
        if sid == GRID:
            if not allow_grid:
                raise ConfigError(f"{GRID} is only valid for training")
            out.extend(variance_grid())
            continue
        try:
            out.append(world.scenario(sid))
        except KeyError:
            known = ", ".join(s.id for s in world.scenarios)
            raise ConfigError(f"unknown scenario {sid!r} (world has: {known})") from None
    return out


def _nns(world, args):
    if getattr(args, "nns", None) is None:
        return list(world.nns)
    try:
        return [world.nn(name) for name in _csv_list(args.nns)]
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _policy_names(text: str) -> list:
    names = _csv_list(text)
    unknown = [n for n in names if n not in POLICY_NAMES]
    if unknown or not names:
        raise ConfigError(f"unknown policy {unknown or text!r}; choose from {', '.join(POLICY_NAMES)}")
    return names


def _load_q(path, world) -> QTable:
    try:
        q = QTable.load(path)
    except FileNotFoundError:
        raise ConfigError(f"Q-table not found: {path}") from None
    except QTableFormatError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if tuple(q.action_set) != tuple(reward_model(world).actions):
        raise ConfigError(f"{path} was trained for a different action set than {world.name}")
    return q


def _check_positive(**values):
    for name, v in values.items():
        if v < 1:
            raise ConfigError(f"--{name} must be >= 1")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_agent(world, scenarios, args, hp, seed, init=None):
    return train(
        world, scenarios, _nns(world, args), args.episodes, hp, np.random.default_rng(seed),
        init=init, arrival=args.arrival,
    )


def _make_policies(world, names, scenario, args, hp, seed, comparators=None):
    policies = []
    fixed = None
    for name in names:
        if name == "agent":
            if getattr(args, "q_in", None):
                q = _load_q(args.q_in, world)
            else:
                q, _ = _train_agent(world, [scenario], args, hp, seed)
            policies.append(AgentPolicy(q))
        elif name == "oracle":
            policies.append(OraclePolicy(hp))
        elif name in ("lr", "knn"):
            if comparators is None:
                comparators = _comparators(world, args, hp)
            policies.append(comparators[0] if name == "lr" else comparators[1])
        else:
            if fixed is None:
                fixed = {p.name: p for p in fixed_policies(world, hp)}
            if name not in fixed:
                raise ConfigError(f"policy {name} is not available in world {world.name}")
            policies.append(fixed[name])
    return policies


def _comparators(world, args, hp):
    if args.k not in (1, 3, 5):
        raise ConfigError("--k must be 1, 3 or 5")
    return fit_comparators(world, None, args.k, hp)


def _write(path: Path, data: bytes):
    path.write_bytes(data)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    scenarios = _scenarios(world, args.scenario, allow_grid=True)
    _check_positive(episodes=args.episodes)
    init = _load_q(args.q_in, world) if args.q_in else None
    out = _out_dir(args)
    q, history = _train_agent(world, scenarios, args, hp, args.seed, init)
    _write(out / "qtable.qtab", q.to_bytes())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "mean_reward", "greedy_reward"])
    for e, (r, g) in enumerate(zip(history.rewards, history.greedy_mean)):
        w.writerow([e, fmt(r), fmt(g)])
    _write(out / "reward_history.csv", buf.getvalue().encode())
    conv = detect_convergence(history)
    print(f"trained {args.episodes} episodes ({history.samples} samples); "
          f"convergence episode: {'none' if conv is None else conv}")
    return 0


def cmd_eval(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    scenarios = _scenarios(world, args.scenario, allow_grid=False)
    names = _policy_names(args.policy)
    if len(names) != 1:
        raise ConfigError("eval takes exactly one --policy")
    _check_positive(steps=args.steps, episodes=args.episodes)
    out = _out_dir(args)
    for sc in scenarios:
        (policy,) = _make_policies(world, names, sc, args, hp, args.seed)
        report = run_experiment(world, sc, policy, _nns(world, args), args.steps, args.seed, hp)
        stem = f"{policy.name}_{sc.id}"
        _write(out / f"{stem}.csv", emit_report(report, "csv"))
        _write(out / f"{stem}.json", emit_report(report, "json"))
        print(f"{sc.id} {policy.name}: ppw_normalized={fmt(report.ppw_normalized)} "
              f"qos_violation_ratio={fmt(report.qos_violation_ratio)} "
              f"prediction_accuracy={fmt(report.prediction_accuracy)}")
    return 0


def _compare_cell(world, sc, names, args, hp, seed, comparators):
    policies = _make_policies(world, names, sc, args, hp, seed, comparators)
    reports = [run_experiment(world, sc, p, _nns(world, args), args.steps, seed, hp) for p in policies]
    return reports, compare(reports)


def cmd_compare(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    scenarios = _scenarios(world, args.scenario, allow_grid=False)
    names = _policy_names(args.policies)
    _check_positive(steps=args.steps, episodes=args.episodes)
    comparators = _comparators(world, args, hp) if {"lr", "knn"} & set(names) else None
    out = _out_dir(args)
    for sc in scenarios:
        _, table = _compare_cell(world, sc, names, args, hp, args.seed, comparators)
        data = table.to_csv()
        _write(out / f"comparison_{sc.id}.csv", data)
        sys.stdout.write(data.decode())
    return 0


def cmd_transfer(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    scenarios = _scenarios(world, args.scenario, allow_grid=True)
    _check_positive(episodes=args.episodes, seeds=args.seeds)
    try:
        source = QTable.load(args.q_from)
    except FileNotFoundError:
        raise ConfigError(f"Q-table not found: {args.q_from}") from None
    except QTableFormatError as exc:
        raise ConfigError(f"{args.q_from}: {exc}") from None
    actions = reward_model(world, hp).actions
    out = _out_dir(args)
    rows = []
    for seed in range(args.seed, args.seed + args.seeds):
        _, h_scratch = _train_agent(world, scenarios, args, hp, seed)
        init = transfer_init(source, actions, np.random.default_rng([seed, 1]))
        _, h_transfer = _train_agent(world, scenarios, args, hp, seed, init)
        rows.append((seed, detect_convergence(h_scratch, args.window, args.tol),
                     detect_convergence(h_transfer, args.window, args.tol)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "scratch_episode", "transfer_episode"])
    for seed, a, b in rows:
        w.writerow([seed, "" if a is None else a, "" if b is None else b])
    _write(out / "transfer.csv", buf.getvalue().encode())
    # unconverged runs count as the full episode budget
    scratch = median(args.episodes if a is None else a for _, a, _ in rows)
    transfer = median(args.episodes if b is None else b for _, _, b in rows)
    reduction = (scratch - transfer) / scratch * 100 if scratch else 0.0
    summary = {
        "median_scratch_episode": scratch,
        "median_transfer_episode": transfer,
        "reduction_percent": round(reduction, 6),
        "seeds": args.seeds,
        "unconverged_scratch": sum(a is None for _, a, _ in rows),
        "unconverged_transfer": sum(b is None for _, _, b in rows),
    }
    _write(out / "transfer_summary.json", (json.dumps(summary, indent=1) + "\n").encode())
    change = f"{reduction:.1f}% fewer" if reduction >= 0 else f"{-reduction:.1f}% more"
    print(f"median convergence episode: scratch {scratch}, transfer {transfer} ({change} episodes)")
    return 0


def cmd_sweep(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    scenarios = _scenarios(world, args.scenario, allow_grid=False)
    names = _policy_names(args.policies)
    _check_positive(steps=args.steps, episodes=args.episodes, seeds=args.seeds)
    comparators = _comparators(world, args, hp) if {"lr", "knn"} & set(names) else None
    out = _out_dir(args)
    merged = io.StringIO()
    w = csv.writer(merged, lineterminator="\n")
    header = None
    # cells run in a fixed order so the merged file is deterministic
    for sc in scenarios:
        for seed in range(args.seed, args.seed + args.seeds):
            reports, table = _compare_cell(world, sc, names, args, hp, seed, comparators)
            cell = out / f"{sc.id}_seed{seed}"
            cell.mkdir(exist_ok=True)
            for r in reports:
                _write(cell / f"{r.policy}.csv", emit_report(r, "csv"))
            data = table.to_csv().decode().splitlines()
            _write(cell / "comparison.csv", ("\n".join(data) + "\n").encode())
            if header is None:
                header = ["seed"] + data[0].split(",")
                w.writerow(header)
            for line in data[1:]:
                w.writerow([seed] + next(csv.reader([line])))
    _write(out / "sweep.csv", merged.getvalue().encode())
    sys.stdout.write(merged.getvalue())
    return 0


def cmd_probe(args) -> int:
    world, hp = _world(args), _hyperparams(args)
    _check_positive(trials=args.trials)
    if args.q_in:
        q = _load_q(args.q_in, world)
    else:
        _check_positive(episodes=args.episodes)
        q, _ = _train_agent(world, _scenarios(world, args.scenario, allow_grid=True), args, hp, args.seed)
    result = overhead_probe(q, args.trials, args.seed)
    out = _out_dir(args)
    # timing varies run to run, so it goes to stdout only
    _write(out / "probe.json", (json.dumps({"table_bytes": result.table_bytes, "trials": args.trials}, indent=1) + "\n").encode())
    print(f"mean decision time: {result.mean_decision_us:.2f} us over {args.trials} trials; "
          f"serialized table: {result.table_bytes} bytes")
    return 0


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
    "transfer": cmd_transfer, "sweep": cmd_sweep, "probe": cmd_probe,
}


def _setup_logging():
    level = os.environ.get("AUTOSCALE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"infersched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
