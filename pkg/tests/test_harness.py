import csv
import io
import json

import numpy as np
import pytest

from infersched.agent import N_STATES, QTable, train
from infersched.harness import (
    CSV_COLUMNS,
    ComparisonError,
    compare,
    emit_report,
    overhead_probe,
    run_experiment,
)
from infersched.policies import AgentPolicy, OraclePolicy, fixed_policies
from infersched.profiles import enumerate_actions, load_shipped_world

SHIPPED = ("mi8pro", "s10e", "motox")


@pytest.fixture(scope="module")
def s1_agent(mi8pro):
    q, _ = train(mi8pro, mi8pro.scenario("S1"), episodes=10_000, rng=np.random.default_rng(0))
    return AgentPolicy(q)


@pytest.fixture(scope="module")
def s1_reports(mi8pro, s1_agent):
    sc = mi8pro.scenario("S1")
    policies = [OraclePolicy(), s1_agent] + fixed_policies(mi8pro)
    return [run_experiment(mi8pro, sc, p, steps=100, seed=0) for p in policies]


class TestRunExperiment:
    def test_oracle_self_match(self, mi8pro):
        report = run_experiment(mi8pro, mi8pro.scenario("D3"), OraclePolicy(), steps=150, seed=2)
        assert report.prediction_accuracy == 1.0

    @pytest.mark.parametrize("world_name", SHIPPED)
    def test_normalization_anchor(self, world_name):
        world = load_shipped_world(world_name)
        edge_cpu = fixed_policies(world)[0]
        for sc in world.scenarios:
            assert run_experiment(world, sc, edge_cpu, steps=40, seed=1).ppw_normalized == 1.0

    def test_converged_agent_on_s1(self, mi8pro, s1_agent):
        report = run_experiment(mi8pro, mi8pro.scenario("S1"), s1_agent, steps=100, seed=0)
        assert report.prediction_accuracy >= 0.95

    def test_metric_invariants(self, mi8pro):
        for p in fixed_policies(mi8pro):
            r = run_experiment(mi8pro, mi8pro.scenario("D2"), p, steps=120, seed=4)
            for ratio in (r.qos_violation_ratio, r.accuracy_violation_ratio, r.prediction_accuracy):
                assert 0.0 <= ratio <= 1.0
            assert r.ppw == pytest.approx(len(r.records) / sum(x.outcome.energy_j for x in r.records), rel=1e-12)
            assert all(x.outcome.action == x.action for x in r.records)

    def test_schedule_cycles(self, mi8pro):
        r = run_experiment(mi8pro, mi8pro.scenario("S1"), OraclePolicy(), ["MobileBERT", "Resnet50"], steps=5)
        assert [x.nn for x in r.records] == ["MobileBERT", "Resnet50"] * 2 + ["MobileBERT"]

    def test_rejects_zero_steps(self, mi8pro):
        with pytest.raises(ValueError):
            run_experiment(mi8pro, mi8pro.scenario("S1"), OraclePolicy(), steps=0)

    @pytest.mark.parametrize("world_name", SHIPPED)
    def test_oracle_qos_vs_local_baselines(self, world_name):
        world = load_shipped_world(world_name)
        for sc in world.scenarios:
            oracle = run_experiment(world, sc, OraclePolicy(), steps=100, seed=0).qos_violation_ratio
            for p in fixed_policies(world):
                if p.name != "cloud":
                    assert oracle <= run_experiment(world, sc, p, steps=100, seed=0).qos_violation_ratio

    def test_cloud_can_beat_oracle_qos(self, mi8pro):
        # the reward trades a QoS miss against energy, so an always-cloud
        # policy may miss the deadline less often than the reward maximiser
        sc = mi8pro.scenario("S3")
        cloud = {p.name: p for p in fixed_policies(mi8pro)}["cloud"]
        oracle = run_experiment(mi8pro, sc, OraclePolicy(), steps=100)
        assert run_experiment(mi8pro, sc, cloud, steps=100).qos_violation_ratio < oracle.qos_violation_ratio
        assert oracle.mean_reward > run_experiment(mi8pro, sc, cloud, steps=100).mean_reward


class TestCompare:
    def test_oracle_has_max_reward(self, s1_reports):
        table = compare(s1_reports)
        best = table.row("oracle")["mean_reward"]
        assert all(best >= r["mean_reward"] for r in table.rows)

    def test_agent_beats_baselines(self, s1_reports):
        table = compare(s1_reports)
        agent = table.row("agent")["ppw_normalized"]
        for name in ("edge-cpu", "edge-best", "cloud", "connected-edge"):
            assert agent >= table.row(name)["ppw_normalized"]

    def test_ranked_by_ppw(self, s1_reports):
        values = [r["ppw_normalized"] for r in compare(s1_reports).rows]
        assert values == sorted(values, reverse=True)

    def test_empty(self):
        with pytest.raises(ComparisonError):
            compare([])

    def test_mismatched_scenario(self, mi8pro, s1_reports):
        other = run_experiment(mi8pro, mi8pro.scenario("S2"), OraclePolicy(), steps=10)
        with pytest.raises(ComparisonError, match="S2"):
            compare([s1_reports[0], other])

    def test_csv(self, s1_reports):
        rows = list(csv.reader(io.StringIO(compare(s1_reports).to_csv().decode())))
        assert rows[0][:3] == ["rank", "policy", "scenario"]
        assert len(rows) == 1 + len(s1_reports)


class TestEmitReport:
    def test_csv_header(self, s1_reports):
        first = emit_report(s1_reports[0], "csv").decode().splitlines()[0]
        assert first == "step,nn,action,latency_s,energy_j,accuracy,reward,qos_met,oracle_match"
        assert first == ",".join(CSV_COLUMNS)

    def test_repeatable(self, s1_reports):
        for fmt in ("csv", "json"):
            assert emit_report(s1_reports[2], fmt) == emit_report(s1_reports[2], fmt)

    def test_record_counts_agree(self, s1_reports):
        r = s1_reports[1]
        rows = emit_report(r, "csv").decode().strip().splitlines()
        doc = json.loads(emit_report(r, "json"))
        assert len(rows) - 1 == len(doc["records"]) == r.steps

    def test_nine_significant_digits(self, mi8pro):
        r = run_experiment(mi8pro, mi8pro.scenario("S1"), OraclePolicy(), steps=3)
        row = next(csv.DictReader(io.StringIO(emit_report(r, "csv").decode())))
        assert row["latency_s"] == format(r.records[0].outcome.latency_s, ".9g")
        assert row["qos_met"] in ("true", "false")

    def test_rerun_is_byte_identical(self, mi8pro):
        sc = mi8pro.scenario("D3")
        out = {emit_report(run_experiment(mi8pro, sc, OraclePolicy(), steps=60, seed=8), "json") for _ in range(3)}
        assert len(out) == 1

    def test_unknown_format(self, s1_reports):
        with pytest.raises(ValueError):
            emit_report(s1_reports[0], "xml")


class TestOverheadProbe:
    def test_full_table(self, mi8pro):
        q = QTable.random(enumerate_actions(mi8pro), np.random.default_rng(0))
        result = overhead_probe(q, trials=2000)
        assert result.table_bytes <= 4 * 1024 * 1024
        assert result.table_bytes == len(q.to_bytes())
        assert 0 < result.mean_decision_s < 1e-3
        assert result.mean_decision_us == result.mean_decision_s * 1e6

    def test_single_trial(self, mi8pro):
        q = QTable.random(enumerate_actions(mi8pro)[:3], np.random.default_rng(0))
        mean_s, size = overhead_probe(q, trials=1)
        assert mean_s > 0 and size > N_STATES * 3 * 8

    def test_rejects_zero_trials(self, mi8pro):
        q = QTable.random(enumerate_actions(mi8pro)[:3], np.random.default_rng(0))
        with pytest.raises(ValueError):
            overhead_probe(q, trials=0)
