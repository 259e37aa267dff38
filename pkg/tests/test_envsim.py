import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infersched.envsim import (
    Simulator,
    UnknownActionError,
    interference_slowdown,
    layer_affinity,
    simulate_execution,
    transmission_time,
)
from infersched.profiles import Action, NetworkInterfaceSpec, RssiBin, enumerate_actions
from infersched.scenarios import (
    GaussianRssi,
    ScenarioSpec,
    Trace,
    VarianceSnapshot,
    read_trace_csv,
    snapshots,
    step_scenario,
    variance_grid,
    write_trace_csv,
)

S1 = VarianceSnapshot(0.0, 0.0, -60.0, -60.0)
CPU_HOG = VarianceSnapshot(0.9, 0.0, -60.0, -60.0)
MEM_HOG = VarianceSnapshot(0.0, 0.9, -60.0, -60.0)
WEAK_WIFI = VarianceSnapshot(0.0, 0.0, -85.0, -60.0)

IFACE = NetworkInterfaceSpec("WLAN", (
    RssiBin(-80.0, 0.0, 1.0, 0.8, 10_000_000.0),
    RssiBin(None, -80.0, 1.5, 0.9, 1_000_000.0),
))


def local(world, kind):
    return [a for a in enumerate_actions(world) if a.processor == kind]


class TestScenarios:
    def test_s1(self, mi8pro):
        for k in (0, 1, 57):
            assert step_scenario(mi8pro.scenario("S1"), k) == S1

    def test_s4(self, mi8pro):
        assert step_scenario(mi8pro.scenario("S4"), 12).rssi_wlan_dbm == -85.0

    def test_d3_mean(self, mi8pro):
        d3 = mi8pro.scenario("D3")
        assert d3.generator == GaussianRssi(-75.0, 10.0, "WLAN", S1)
        draws = [s.rssi_wlan_dbm for s in snapshots(d3, 1000, seed=11)]
        assert abs(np.mean(draws) + 75.0) <= 1.0
        assert min(draws) >= -100.0 and max(draws) <= -30.0

    def test_catalog_shapes(self, mi8pro):
        kinds = {s.id: type(s.generator).__name__ for s in mi8pro.scenarios}
        assert kinds == {
            "S1": "Constant", "S2": "Constant", "S3": "Constant", "S4": "Constant", "S5": "Constant",
            "D1": "Trace", "D2": "Trace", "D3": "GaussianRssi",
        }
        assert step_scenario(mi8pro.scenario("S2"), 0).co_cpu_util >= 0.75
        assert step_scenario(mi8pro.scenario("S3"), 0).co_mem_util >= 0.75
        assert step_scenario(mi8pro.scenario("S5"), 0).rssi_p2p_dbm <= -80.0

    def test_trace_cycles(self):
        rows = (VarianceSnapshot(0.1), VarianceSnapshot(0.2), VarianceSnapshot(0.3))
        sc = ScenarioSpec("t", Trace(rows, period=2))
        assert [step_scenario(sc, k).co_cpu_util for k in range(8)] == [0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.1, 0.1]

    def test_gaussian_order_independent(self, mi8pro):
        d3 = mi8pro.scenario("D3")
        forward = snapshots(d3, 20, seed=5)
        assert [step_scenario(d3, k, 5) for k in reversed(range(20))] == forward[::-1]
        assert snapshots(d3, 20, seed=6) != forward

    def test_trace_csv_round_trip(self):
        # six significant digits on disk
        rows = tuple(VarianceSnapshot(0.125 * i, 0.0625 * i) for i in range(5))
        assert read_trace_csv(write_trace_csv(rows)) == rows
        lossy = read_trace_csv(write_trace_csv([VarianceSnapshot(1 / 3)]))[0]
        assert lossy.co_cpu_util == pytest.approx(1 / 3, rel=1e-6)

    def test_grid(self):
        grid = variance_grid()
        assert len(grid) == 64
        assert len({step_scenario(s, 0) for s in grid}) == 64

    @pytest.mark.parametrize("field, value", [("co_cpu_util", 1.5), ("rssi_wlan_dbm", 3.0), ("co_mem_util", math.nan)])
    def test_snapshot_validation(self, field, value):
        with pytest.raises(ValueError, match=field):
            VarianceSnapshot(**{field: value})


class TestTransmission:
    def test_regular(self):
        assert transmission_time(1_000_000, IFACE, -60.0) == pytest.approx(0.1, rel=1e-15)

    def test_weak_is_ten_times_slower(self):
        assert transmission_time(1_000_000, IFACE, -85.0) == pytest.approx(1.0, rel=1e-15)

    def test_zero_payload(self):
        with pytest.raises(ValueError):
            transmission_time(0, IFACE, -60.0)

    def test_bin_edge_is_weak(self):
        assert transmission_time(1_000_000, IFACE, -80.0) == pytest.approx(1.0)


class TestLayerAffinity:
    def test_gpu_one_fc(self, mi8pro):
        nn = mi8pro.nn("InceptionV1")
        assert (nn.fc_layers, nn.rc_layers) == (1, 0)
        assert layer_affinity(nn, "GPU", mi8pro) == pytest.approx(1.02, rel=1e-15)

    def test_cpu_is_one(self, mi8pro):
        assert all(layer_affinity(nn, "CPU", mi8pro) == 1.0 for nn in mi8pro.nns)

    def test_fc_monotone_on_dsp(self, mi8pro):
        assert layer_affinity(mi8pro.nn("MobilenetV3"), "DSP", mi8pro) > layer_affinity(
            mi8pro.nn("MobilenetV1"), "DSP", mi8pro
        )


class TestSimulateExecution:
    def test_cpu_co_runner(self, mi8pro):
        nn = mi8pro.nn("MobilenetV1")
        for a in local(mi8pro, "CPU"):
            assert simulate_execution(mi8pro, nn, a, CPU_HOG).latency_s > simulate_execution(mi8pro, nn, a, S1).latency_s
        for a in local(mi8pro, "GPU") + local(mi8pro, "DSP"):
            assert simulate_execution(mi8pro, nn, a, CPU_HOG).latency_s == simulate_execution(mi8pro, nn, a, S1).latency_s

    def test_memory_co_runner(self, mi8pro):
        nn = mi8pro.nn("InceptionV1")
        for a in enumerate_actions(mi8pro):
            if not a.is_remote:
                assert simulate_execution(mi8pro, nn, a, MEM_HOG).latency_s > simulate_execution(mi8pro, nn, a, S1).latency_s

    def test_weak_wifi_cloud(self, mi8pro):
        nn = mi8pro.nn("InceptionV3")
        weak = simulate_execution(mi8pro, nn, Action("cloud"), WEAK_WIFI)
        strong = simulate_execution(mi8pro, nn, Action("cloud"), S1)
        assert weak.latency_s > strong.latency_s
        assert weak.energy.tx_j > strong.energy.tx_j

    def test_unknown_action(self, mi8pro, s10e):
        with pytest.raises(UnknownActionError):
            simulate_execution(s10e, s10e.nns[0], Action("edge", "DSP", 0, "INT8"), S1)
        with pytest.raises(UnknownActionError):
            simulate_execution(mi8pro, mi8pro.nns[0], Action("edge", "CPU", 99, "FP32"), S1)

    def test_dsp_energy_consistency(self, mi8pro):
        (dsp,) = local(mi8pro, "DSP")
        for nn in mi8pro.nns:
            out = simulate_execution(mi8pro, nn, dsp, MEM_HOG)
            assert out.energy.total_j == 1.8 * out.latency_s

    def test_outcome_flags(self, mi8pro):
        for nn in mi8pro.nns:
            for a in enumerate_actions(mi8pro):
                out = simulate_execution(mi8pro, nn, a, S1)
                assert out.action == a
                assert out.qos_met == (out.latency_s < nn.qos_target_s)
                assert out.accuracy_met == (out.accuracy >= nn.accuracy_requirement)

    def test_deterministic(self, mi8pro):
        nn, a = mi8pro.nns[3], enumerate_actions(mi8pro)[17]
        assert simulate_execution(mi8pro, nn, a, CPU_HOG) == simulate_execution(mi8pro, nn, a, CPU_HOG)

    def test_simulator_cache_matches(self, mi8pro):
        sim = Simulator(mi8pro)
        nn = mi8pro.nns[0]
        snap = VarianceSnapshot(0.3, 0.2, -70.0, -90.0)
        assert sim.outcomes(nn, snap) == [simulate_execution(mi8pro, nn, a, snap) for a in sim.actions]


utils = st.floats(0.0, 1.0, allow_nan=False)


class TestMonotonicity:
    @settings(max_examples=50, deadline=None)
    @given(lo=utils, hi=utils, mem=utils, nn_i=st.integers(0, 9))
    def test_cpu_latency_in_co_cpu(self, mi8pro, lo, hi, mem, nn_i):
        lo, hi = sorted((lo, hi))
        nn = mi8pro.nns[nn_i]
        a = local(mi8pro, "CPU")[-1]
        slow = simulate_execution(mi8pro, nn, a, VarianceSnapshot(hi, mem)).latency_s
        assert slow >= simulate_execution(mi8pro, nn, a, VarianceSnapshot(lo, mem)).latency_s

    @settings(max_examples=50, deadline=None)
    @given(lo=utils, hi=utils, cpu=utils, kind=st.sampled_from(["CPU", "GPU", "DSP"]))
    def test_local_latency_in_co_mem(self, mi8pro, lo, hi, cpu, kind):
        lo, hi = sorted((lo, hi))
        nn = mi8pro.nn("Resnet50")
        for a in local(mi8pro, kind):
            slow = simulate_execution(mi8pro, nn, a, VarianceSnapshot(cpu, hi)).latency_s
            assert slow >= simulate_execution(mi8pro, nn, a, VarianceSnapshot(cpu, lo)).latency_s

    @settings(max_examples=50, deadline=None)
    @given(weak=st.floats(-100.0, -80.0), strong=st.floats(-79.9, -30.0), platform=st.sampled_from(["cloud", "connected_edge"]))
    def test_remote_improves_with_signal(self, mi8pro, weak, strong, platform):
        field = "rssi_wlan_dbm" if platform == "cloud" else "rssi_p2p_dbm"
        nn = mi8pro.nn("MobileBERT")
        bad = simulate_execution(mi8pro, nn, Action(platform), VarianceSnapshot(**{field: weak}))
        good = simulate_execution(mi8pro, nn, Action(platform), VarianceSnapshot(**{field: strong}))
        assert good.latency_s <= bad.latency_s
        assert good.energy.tx_j <= bad.energy.tx_j


def test_interference_slowdown_formula(mi8pro):
    snap = VarianceSnapshot(0.5, 0.4)
    assert interference_slowdown(snap, "GPU", mi8pro) == pytest.approx(1 / (1 - 0.5 * 0.4))
    assert interference_slowdown(snap, "CPU", mi8pro) == pytest.approx(1 / (1 - 0.5 * 0.4) / (1 - 0.6 * 0.5))
