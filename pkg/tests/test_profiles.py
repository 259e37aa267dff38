import copy

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CPU_ONLY, build_world, shipped_doc
from infersched.policies import oracle_decide
from infersched.profiles import (
    Action,
    InvariantViolation,
    SchemaError,
    dump_world,
    enumerate_actions,
    load_shipped_world,
    load_world,
    validate_accuracy_table,
)
from infersched.scenarios import variance_grid, snapshots

SHIPPED = ("mi8pro.world", "s10e.world", "motox.world")

# layer compositions of the shipped NN catalog: (conv, fc, rc)
LAYERS = {
    "InceptionV1": (49, 1, 0),
    "InceptionV3": (94, 1, 0),
    "MobilenetV1": (14, 1, 0),
    "MobilenetV2": (35, 1, 0),
    "MobilenetV3": (23, 20, 0),
    "Resnet50": (53, 1, 0),
    "SSD-MobilenetV1": (19, 1, 0),
    "SSD-MobilenetV2": (52, 1, 0),
    "SSD-MobilenetV3": (28, 20, 0),
    "MobileBERT": (0, 1, 24),
}


class TestLoadWorld:
    def test_mi8pro_cpu(self, mi8pro):
        cpu = mi8pro.edge.processor("CPU")
        assert len(cpu.vf_steps) == 23
        assert max(s.busy_power_w for s in cpu.vf_steps) == 5.5
        assert cpu.vf_steps[-1].frequency_hz == 2.8e9

    def test_mi8pro_gpu_dsp(self, mi8pro):
        gpu = mi8pro.edge.processor("GPU")
        assert len(gpu.vf_steps) == 7
        assert gpu.vf_steps[-1].busy_power_w == 2.8
        assert mi8pro.edge.processor("DSP").dsp_power_w == 1.8

    def test_zero_nns(self):
        with pytest.raises(SchemaError, match="nns must be nonempty"):
            build_world(nns=[])

    def test_dsp_two_steps(self):
        doc = copy.deepcopy(CPU_ONLY)
        doc["edge"]["processors"].append({
            "kind": "DSP", "peak_gmacs": 10.0, "dsp_power_w": 1.8, "supported_precisions": ["INT8"],
            "vf_steps": [[5e8, 1.0], [1e9, 1.8]],
        })
        with pytest.raises(InvariantViolation, match="DSP has exactly one step"):
            build_world(doc)

    def test_schema_error_names_field(self):
        doc = copy.deepcopy(CPU_ONLY)
        doc["nns"][0]["qos_target_s"] = -1
        with pytest.raises(SchemaError, match=r"nns\[0\]\.qos_target_s"):
            build_world(doc)

    @pytest.mark.parametrize("steps, message", [
        ([[2e9, 2.0], [1e9, 3.0]], "strictly increasing"),
        ([[1e9, 3.0], [2e9, 2.0]], "busy power nondecreasing"),
    ])
    def test_vf_invariants(self, steps, message):
        doc = copy.deepcopy(CPU_ONLY)
        doc["edge"]["processors"][0]["vf_steps"] = steps
        with pytest.raises(InvariantViolation, match=message):
            build_world(doc)

    def test_relative_speed_default(self):
        doc = copy.deepcopy(CPU_ONLY)
        doc["edge"]["processors"][0]["vf_steps"] = [[5e8, 1.0], [1e9, 2.0]]
        steps = build_world(doc).edge.processor("CPU").vf_steps
        assert [s.relative_speed for s in steps] == [0.5, 1.0]

    def test_duplicate_processor_kind(self):
        doc = copy.deepcopy(CPU_ONLY)
        doc["edge"]["processors"].append(copy.deepcopy(doc["edge"]["processors"][0]))
        with pytest.raises(InvariantViolation, match="at most one processor per kind"):
            build_world(doc)

    def test_unknown_schema_version(self):
        with pytest.raises(SchemaError, match="schema_version"):
            build_world(schema_version=2)


@pytest.mark.parametrize("name", SHIPPED)
class TestShippedWorlds:
    def test_layer_counts(self, name):
        world = load_shipped_world(name)
        assert {nn.name: (nn.conv_layers, nn.fc_layers, nn.rc_layers) for nn in world.nns} == LAYERS

    def test_round_trip(self, name):
        world = load_shipped_world(name)
        assert load_world(dump_world(world)) == world

    def test_accuracy_tables_complete(self, name):
        world = load_shipped_world(name)
        for nn in world.nns:
            assert validate_accuracy_table(nn, world) == []
            assert all(0.0 <= v <= 1.0 for v in nn.accuracy_by_target.values())

    def test_lower_precision_not_more_accurate(self, name):
        world = load_shipped_world(name)
        for nn in world.nns:
            for (platform, precision), v in nn.accuracy_by_target.items():
                fp32 = nn.accuracy(platform, "FP32")
                if precision != "FP32" and fp32 is not None:
                    assert v <= fp32

    def test_shipped_precisions(self, name):
        world = load_shipped_world(name)
        expected = {"CPU": ("FP32", "INT8"), "GPU": ("FP32", "FP16"), "DSP": ("INT8",)}
        for p in world.edge.processors:
            assert tuple(p.supported_precisions) == expected[p.kind]


def test_dsp_presence():
    assert load_shipped_world("mi8pro").edge.processor("DSP") is not None
    assert load_shipped_world("s10e").edge.processor("DSP") is None
    assert load_shipped_world("motox").edge.processor("DSP") is None


class TestEnumerateActions:
    def test_mi8pro_count(self, mi8pro):
        actions = enumerate_actions(mi8pro)
        by_proc = {}
        for a in actions:
            by_proc[a.processor or a.platform] = by_proc.get(a.processor or a.platform, 0) + 1
        assert by_proc == {"CPU": 46, "GPU": 14, "DSP": 1, "connected_edge": 1, "cloud": 1}
        assert len(actions) == 63

    def test_minimal_world(self, tiny):
        assert enumerate_actions(tiny) == [Action("edge", "CPU", 0, "FP32")]

    def test_stable_across_loads(self):
        a = [x.label for x in enumerate_actions(load_shipped_world())]
        b = [x.label for x in enumerate_actions(load_shipped_world())]
        assert a == b

    def test_no_duplicates(self, mi8pro):
        actions = enumerate_actions(mi8pro)
        assert len(set(actions)) == len(actions)

    def test_label_round_trip(self, mi8pro):
        for a in enumerate_actions(mi8pro):
            assert Action.from_label(a.label) == a


class TestAccuracyTable:
    def test_full_table(self, mi8pro):
        assert validate_accuracy_table(mi8pro.nns[0], mi8pro) == []

    def test_missing_dsp(self):
        doc = shipped_doc()
        del doc["nns"][0]["accuracy"]["DSP"]
        doc["scenarios"] = []
        world = load_world(yaml.safe_dump(doc))
        warnings = validate_accuracy_table(world.nns[0], world)
        assert len(warnings) == 1
        assert "DSP" in warnings[0] and "INT8" in warnings[0]

    def test_missing_cloud_never_chosen(self):
        doc = shipped_doc()
        doc["scenarios"] = []
        for nn in doc["nns"]:
            del nn["accuracy"]["cloud"]
        world = load_world(yaml.safe_dump(doc))
        assert all(validate_accuracy_table(nn, world) for nn in world.nns)
        for sc in variance_grid():
            for snap in snapshots(sc, 1):
                for nn in world.nns:
                    assert oracle_decide(world, nn, snap).platform != "cloud"


@settings(max_examples=30, deadline=None)
@given(
    n_steps=st.integers(1, 6),
    peak=st.floats(0.5, 10.0),
    precisions=st.sampled_from([["FP32"], ["FP32", "INT8"], ["INT8"]]),
)
def test_cpu_action_count(n_steps, peak, precisions):
    doc = copy.deepcopy(CPU_ONLY)
    proc = doc["edge"]["processors"][0]
    proc["vf_steps"] = [[1e8 * (i + 1), peak * (i + 1) / n_steps] for i in range(n_steps)]
    proc["supported_precisions"] = precisions
    world = build_world(doc)
    assert len(enumerate_actions(world)) == n_steps * len(precisions)
