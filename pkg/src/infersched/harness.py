"""Experiment runner, metrics and report emission."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .agent import DEFAULT_HP, Hyperparams, N_STATES, QTable, compute_reward, select_action
from .envsim import ExecutionOutcome
from .policies import Policy, edge_cpu_action, oracle_decide, reward_model
from .profiles import Action, NnProfile, WorldConfig
from .scenarios import ScenarioSpec, VarianceSnapshot, step_scenario

CSV_COLUMNS = ("step", "nn", "action", "latency_s", "energy_j", "accuracy", "reward", "qos_met", "oracle_match")
COMPARISON_COLUMNS = (
    "rank", "policy", "scenario", "ppw", "ppw_normalized", "qos_violation_ratio",
    "accuracy_violation_ratio", "prediction_accuracy", "mean_reward", "steps",
)


def fmt(x: float) -> str:
    """Floats in reports carry nine significant digits."""
    return format(float(x), ".9g")


def _round9(x: float) -> float:
    return float(fmt(x))


@dataclass(frozen=True)
class RunRecord:
    step: int
    nn: str
    snapshot: VarianceSnapshot
    action: Action
    outcome: ExecutionOutcome
    oracle_action: Action
    reward: float

    @property
    def oracle_match(self) -> bool:
        return self.action == self.oracle_action


@dataclass(frozen=True)
class ExperimentReport:
    policy: str
    scenario: str
    world: str
    seed: int
    records: tuple
    ppw: float
    ppw_normalized: float
    qos_violation_ratio: float
    accuracy_violation_ratio: float
    prediction_accuracy: float
    mean_reward: float

    @property
    def steps(self) -> int:
        return len(self.records)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "scenario": self.scenario,
            "world": self.world,
            "seed": self.seed,
            "steps": self.steps,
            "ppw": self.ppw,
            "ppw_normalized": self.ppw_normalized,
            "qos_violation_ratio": self.qos_violation_ratio,
            "accuracy_violation_ratio": self.accuracy_violation_ratio,
            "prediction_accuracy": self.prediction_accuracy,
            "mean_reward": self.mean_reward,
        }


def _schedule(world: WorldConfig, nn_schedule) -> list:
    if nn_schedule is None:
        return list(world.nns)
    out = [world.nn(x) if isinstance(x, str) else x for x in nn_schedule]
    if not out:
        raise ValueError("NN schedule is empty")
    return out


def run_experiment(
    world: WorldConfig,
    scenario: ScenarioSpec,
    policy: Policy,
    nn_schedule: Optional[Sequence] = None,
    steps: int = 100,
    seed: int = 0,
    hp: Hyperparams = DEFAULT_HP,
) -> ExperimentReport:
    """Run ``policy`` for ``steps`` inferences of ``scenario``.

    NNs are drawn cyclically from ``nn_schedule`` (every NN of the world by
    default). ``seed`` drives the scenario's random draws, so the report is
    a pure function of its arguments.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    schedule = _schedule(world, nn_schedule)
    model = reward_model(world, hp)
    sim = model.sim
    baseline = edge_cpu_action(world)
    records = []
    energy = base_energy = 0.0
    for k in range(steps):
        snap = step_scenario(scenario, k, seed)
        nn: NnProfile = schedule[k % len(schedule)]
        action = policy.decide(world, nn, snap)
        if action not in sim.index:
            raise ValueError(f"policy {policy.name} chose {action.label}, unknown to this world")
        outcome = sim.outcome(nn, sim.index[action], snap)
        records.append(
            RunRecord(k, nn.name, snap, action, outcome, oracle_decide(world, nn, snap, hp),
                      compute_reward(outcome, nn, hp))
        )
        energy += outcome.energy_j
        if baseline is not None:
            base_energy += sim.outcome(nn, sim.index[baseline], snap).energy_j
    n = len(records)
    ppw = n / energy
    return ExperimentReport(
        policy=policy.name,
        scenario=scenario.id,
        world=world.name,
        seed=seed,
        records=tuple(records),
        ppw=ppw,
        # PPW ratio on the same request sequence reduces to an energy ratio
        ppw_normalized=base_energy / energy if baseline is not None else float("nan"),
        qos_violation_ratio=sum(not r.outcome.qos_met for r in records) / n,
        accuracy_violation_ratio=sum(not r.outcome.accuracy_met for r in records) / n,
        prediction_accuracy=sum(r.oracle_match for r in records) / n,
        mean_reward=float(np.mean([r.reward for r in records])),
    )


# ---------------------------------------------------------------------------
# comparison


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonTable:
    """Per-policy metrics of one scenario, ranked by normalised PPW."""

    scenario: str
    world: str
    rows: tuple  # summary dicts, best first

    def row(self, policy: str) -> dict:
        for r in self.rows:
            if r["policy"] == policy:
                return r
        raise KeyError(policy)

    def to_csv(self) -> bytes:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for rank, r in enumerate(self.rows, 1):
            w.writerow([rank, r["policy"], r["scenario"]] + [
                fmt(r[c]) for c in COMPARISON_COLUMNS[3:-1]
            ] + [r["steps"]])
        return out.getvalue().encode()


def compare(reports: Sequence[ExperimentReport]) -> ComparisonTable:
    if not reports:
        raise ComparisonError("nothing to compare")
    first = reports[0]
    for r in reports[1:]:
        if (r.scenario, r.world) != (first.scenario, first.world):
            raise ComparisonError(
                f"reports mix {first.world}/{first.scenario} with {r.world}/{r.scenario}"
            )
    rows = sorted((r.summary() for r in reports), key=lambda s: (-s["ppw_normalized"], s["policy"]))
    return ComparisonTable(first.scenario, first.world, tuple(rows))


# ---------------------------------------------------------------------------
# emission


def emit_report(report: ExperimentReport, format: str = "csv") -> bytes:
    """Serialise ``report``. Identical reports give identical bytes.

    CSV columns: step, nn, action, latency_s, energy_j, accuracy, reward,
    qos_met, oracle_match. JSON holds the summary plus the same records.
    """
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.records:
            w.writerow([
                r.step, r.nn, r.action.label, fmt(r.outcome.latency_s), fmt(r.outcome.energy_j),
                fmt(r.outcome.accuracy), fmt(r.reward), str(r.outcome.qos_met).lower(),
                str(r.oracle_match).lower(),
            ])
        return out.getvalue().encode()
    if format == "json":
        summary = {k: (_round9(v) if isinstance(v, float) else v) for k, v in report.summary().items()}
        doc = {
            "summary": summary,
            "columns": list(CSV_COLUMNS),
            "records": [
                {
                    "step": r.step,
                    "nn": r.nn,
                    "action": r.action.label,
                    "latency_s": _round9(r.outcome.latency_s),
                    "energy_j": _round9(r.outcome.energy_j),
                    "accuracy": _round9(r.outcome.accuracy),
                    "reward": _round9(r.reward),
                    "qos_met": r.outcome.qos_met,
                    "oracle_match": r.oracle_match,
                    "oracle_action": r.oracle_action.label,
                }
                for r in report.records
            ],
        }
        return (json.dumps(doc, indent=1) + "\n").encode()
    raise ValueError(f"unknown report format {format!r}")


# ---------------------------------------------------------------------------
# overhead


@dataclass(frozen=True)
class OverheadReport:
    mean_decision_s: float
    table_bytes: int
    trials: int

    @property
    def mean_decision_us(self) -> float:
        return self.mean_decision_s * 1e6

    def __iter__(self):
        return iter((self.mean_decision_s, self.table_bytes))


def overhead_probe(q: QTable, trials: int = 1000, seed: int = 0) -> OverheadReport:
    """Mean wall-clock time of one epsilon-greedy decision over random
    states, and the size of the serialised table."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    states = rng.integers(N_STATES, size=trials)
    hp = q.hp
    total = 0
    for s in states:
        t0 = time.perf_counter_ns()
        select_action(q, int(s), hp, rng)
        total += time.perf_counter_ns() - t0
    return OverheadReport(total / trials / 1e9, len(q.to_bytes()), trials)
