import copy

import pytest
import yaml

from infersched.profiles import load_shipped_world, load_world

CPU_ONLY = {
    "schema_version": 1,
    "name": "tiny",
    "edge": {
        "name": "tiny-phone",
        "processors": [
            {
                "kind": "CPU",
                "core_count": 1,
                "peak_gmacs": 10.0,
                "idle_power_w": 0.1,
                "supported_precisions": ["FP32"],
                "vf_steps": [[1.0e9, 2.0]],
            }
        ],
    },
    "nns": [
        {
            "name": "net",
            "conv_layers": 20,
            "fc_layers": 1,
            "rc_layers": 0,
            "mac_count_millions": 500.0,
            "input_bytes": 150528,
            "output_bytes": 4004,
            "qos_target_s": 0.1,
            "accuracy": {"CPU": {"FP32": 0.7}},
        }
    ],
    "scenarios": [
        {"id": "S1", "constant": {"co_cpu_util": 0.0, "co_mem_util": 0.0, "rssi_wlan_dbm": -60.0, "rssi_p2p_dbm": -60.0}},
    ],
}


ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(getattr(item, "criterion_notes", []))
    ACCEPTANCE[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        verdict, title, detail = ACCEPTANCE[number]
        line = f"criterion {number:>2} {verdict}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of the running test."""
    notes = request.node.criterion_notes = []
    return notes.append


def build_world(doc=None, **overrides):
    """Load a world from the minimal CPU-only document with top-level overrides."""
    d = copy.deepcopy(doc if doc is not None else CPU_ONLY)
    d.update(copy.deepcopy(overrides))
    return load_world(yaml.safe_dump(d))


def shipped_doc(name="mi8pro.world"):
    from infersched.profiles import shipped_world_path

    return yaml.safe_load(shipped_world_path(name).read_text())


@pytest.fixture(scope="session")
def mi8pro():
    return load_shipped_world("mi8pro.world")


@pytest.fixture(scope="session")
def s10e():
    return load_shipped_world("s10e.world")


@pytest.fixture
def tiny():
    return build_world()
