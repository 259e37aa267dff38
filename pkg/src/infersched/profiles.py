"""Data model of the simulated execution world and its YAML-based world files.

A world file is a nested key-value document (YAML syntax) carrying a
``schema_version`` integer. See ``README.md`` for the full schema; the shipped
worlds live next to this module in ``worlds/``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .scenarios import (
    Constant,
    GaussianRssi,
    ScenarioSpec,
    Trace,
    VarianceSnapshot,
    read_trace_csv,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PROCESSOR_KINDS = ("CPU", "GPU", "DSP")
PRECISIONS = ("FP32", "FP16", "INT8")
INTERFACE_KINDS = ("WLAN", "P2P")
REMOTE_PLATFORMS = ("connected_edge", "cloud")
DEFAULT_PRECISIONS = {"CPU": ("FP32", "INT8"), "GPU": ("FP32", "FP16"), "DSP": ("INT8",)}
REMOTE_INTERFACE = {"connected_edge": "P2P", "cloud": "WLAN"}
SHIPPED_WORLDS = ("mi8pro.world", "s10e.world", "motox.world")


class WorldConfigError(ValueError):
    """Base class for world-file problems."""


class SchemaError(WorldConfigError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}" if path else reason)


class InvariantViolation(WorldConfigError):
    def __init__(self, invariant: str, where: str = ""):
        self.invariant = invariant
        super().__init__(f"{where}: {invariant}" if where else invariant)


@dataclass(frozen=True)
class VfStep:
    frequency_hz: float
    busy_power_w: float
    relative_speed: float = 1.0


@dataclass(frozen=True)
class ProcessorSpec:
    kind: str
    vf_steps: tuple
    peak_gmacs: float
    core_count: int = 1
    idle_power_w: float = 0.0
    dsp_power_w: Optional[float] = None
    supported_precisions: tuple = ()

    @property
    def top_step(self) -> int:
        return len(self.vf_steps) - 1


@dataclass(frozen=True)
class RssiBin:
    """Interface behaviour for RSSI in ``(min_dbm, max_dbm]``; ``min_dbm=None`` is unbounded."""

    min_dbm: Optional[float]
    max_dbm: float
    tx_power_w: float
    rx_power_w: float
    rate_bytes_s: float

    def covers(self, rssi_dbm: float) -> bool:
        return (self.min_dbm is None or rssi_dbm > self.min_dbm) and rssi_dbm <= self.max_dbm


@dataclass(frozen=True)
class NetworkInterfaceSpec:
    kind: str
    bins: tuple  # strongest first

    def bin_for(self, rssi_dbm: float) -> RssiBin:
        for b in self.bins:
            if b.covers(rssi_dbm):
                return b
        raise ValueError(f"{self.kind}: no RSSI bin covers {rssi_dbm} dBm")

    @property
    def tx_power_by_rssi(self) -> dict:
        return {(b.min_dbm, b.max_dbm): b.tx_power_w for b in self.bins}

    @property
    def rx_power_by_rssi(self) -> dict:
        return {(b.min_dbm, b.max_dbm): b.rx_power_w for b in self.bins}

    @property
    def rate_by_rssi(self) -> dict:
        return {(b.min_dbm, b.max_dbm): b.rate_bytes_s for b in self.bins}


@dataclass(frozen=True)
class NnProfile:
    name: str
    conv_layers: int
    fc_layers: int
    rc_layers: int
    mac_count_millions: float
    input_bytes: int
    output_bytes: int
    accuracy_by_target: Mapping  # (platform kind, precision) -> fraction
    qos_target_s: float
    accuracy_requirement: float = 0.5

    def accuracy(self, platform: str, precision: str) -> Optional[float]:
        return self.accuracy_by_target.get((platform, precision))

    def __hash__(self):
        return hash(self.name)


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    processors: tuple
    interfaces: tuple = ()
    dram_bandwidth_gbs: float = 10.0
    free_compute_energy: bool = False

    def processor(self, kind: str) -> Optional[ProcessorSpec]:
        for p in self.processors:
            if p.kind == kind:
                return p
        return None

    def interface(self, kind: str) -> Optional[NetworkInterfaceSpec]:
        for i in self.interfaces:
            if i.kind == kind:
                return i
        return None


@dataclass(frozen=True)
class ModelCoefficients:
    """Simulator constants that are configuration rather than code."""

    cpu_contention: float = 0.6
    mem_contention: float = 0.5
    precision_speedup: Mapping = field(
        default_factory=lambda: {"FP32": 1.0, "FP16": 1.5, "INT8": 2.0}
    )
    # per co-processor kind: {"fc": coeff, "rc": coeff}
    layer_affinity: Mapping = field(
        default_factory=lambda: {"GPU": {"fc": 0.02, "rc": 0.05}, "DSP": {"fc": 0.05, "rc": 0.1}}
    )


@dataclass(frozen=True)
class Action:
    """One execution choice. Remote actions carry ``processor=None``."""

    platform: str  # "edge", "connected_edge" or "cloud"
    processor: Optional[str] = None
    vf_index: Optional[int] = None
    precision: str = "FP32"

    @property
    def is_remote(self) -> bool:
        return self.platform != "edge"

    @property
    def accuracy_key(self) -> tuple:
        return (self.platform if self.is_remote else self.processor, self.precision)

    @property
    def label(self) -> str:
        if self.is_remote:
            return self.platform
        return f"{self.processor}:vf{self.vf_index}:{self.precision}"

    @classmethod
    def from_label(cls, label: str) -> "Action":
        if label in REMOTE_PLATFORMS:
            return cls(label)
        kind, vf, precision = label.split(":")
        return cls("edge", kind, int(vf.removeprefix("vf")), precision)

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class WorldConfig:
    edge: DeviceProfile
    nns: tuple
    scenarios: tuple = ()
    connected_edge: Optional[DeviceProfile] = None
    cloud: Optional[DeviceProfile] = None
    seed: int = 0
    model: ModelCoefficients = ModelCoefficients()
    name: str = ""

    def nn(self, name: str) -> NnProfile:
        for nn in self.nns:
            if nn.name == name:
                return nn
        raise KeyError(f"unknown NN {name!r}")

    def scenario(self, scenario_id: str) -> ScenarioSpec:
        for s in self.scenarios:
            if s.id == scenario_id:
                return s
        raise KeyError(f"unknown scenario {scenario_id!r}")

    def remote(self, platform: str) -> Optional[DeviceProfile]:
        return {"connected_edge": self.connected_edge, "cloud": self.cloud}[platform]


# ---------------------------------------------------------------------------
# actions


def enumerate_actions(world: WorldConfig) -> list:
    """All actions of ``world`` in their canonical order.

    Local processors come first (CPU, GPU, DSP), each expanded over supported
    precisions and then V/F steps; remote platforms follow.
    """
    actions = []
    for kind in PROCESSOR_KINDS:
        proc = world.edge.processor(kind)
        if proc is None:
            continue
        for precision in PRECISIONS:
            if precision not in proc.supported_precisions:
                continue
            for vf in range(len(proc.vf_steps)):
                actions.append(Action("edge", kind, vf, precision))
    for platform in REMOTE_PLATFORMS:
        if world.remote(platform) is not None:
            actions.append(Action(platform))
    return actions


def validate_accuracy_table(nn: NnProfile, world: WorldConfig) -> list:
    warnings = []
    seen = set()
    for action in enumerate_actions(world):
        key = action.accuracy_key
        if key in seen:
            continue
        seen.add(key)
        if key not in nn.accuracy_by_target:
            warnings.append(f"{nn.name}: no accuracy entry for ({key[0]}, {key[1]}); treated as 0")
    return warnings


# ---------------------------------------------------------------------------
# parsing helpers


def _req(doc: Mapping, key: str, path: str):
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected a mapping")
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "required field missing")
    return doc[key]


def _num(value, path: str, *, positive=False, nonneg=False, lo=None, hi=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(path, "must be finite")
    if positive and value <= 0:
        raise SchemaError(path, "must be positive")
    if nonneg and value < 0:
        raise SchemaError(path, "must be nonnegative")
    if lo is not None and value < lo or hi is not None and value > hi:
        raise SchemaError(path, f"must lie in [{lo}, {hi}]")
    return value


def _int(value, path: str, *, positive=False, nonneg=False) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    if positive and value <= 0:
        raise SchemaError(path, "must be positive")
    if nonneg and value < 0:
        raise SchemaError(path, "must be nonnegative")
    return value


def _list(value, path: str, *, nonempty=False) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list")
    if nonempty and not value:
        raise SchemaError(path, "must be nonempty")
    return value


def _parse_processor(doc: Mapping, path: str) -> ProcessorSpec:
    kind = _req(doc, "kind", path)
    if kind not in PROCESSOR_KINDS:
        raise SchemaError(f"{path}.kind", f"must be one of {PROCESSOR_KINDS}")
    raw_steps = _list(_req(doc, "vf_steps", path), f"{path}.vf_steps", nonempty=True)
    parsed = []
    for i, s in enumerate(raw_steps):
        p = f"{path}.vf_steps[{i}]"
        if isinstance(s, list):  # compact form [frequency_hz, busy_power_w(, relative_speed)]
            if len(s) not in (2, 3):
                raise SchemaError(p, "compact step must be [frequency_hz, busy_power_w(, relative_speed)]")
            s = dict(zip(("frequency_hz", "busy_power_w", "relative_speed"), s))
        freq = _num(_req(s, "frequency_hz", p), f"{p}.frequency_hz", positive=True)
        power = _num(_req(s, "busy_power_w", p), f"{p}.busy_power_w", positive=True)
        rel = s.get("relative_speed")
        rel = None if rel is None else _num(rel, f"{p}.relative_speed", positive=True)
        parsed.append((freq, power, rel))
    fmax = max(f for f, _, _ in parsed)
    steps = tuple(VfStep(f, pw, r if r is not None else f / fmax) for f, pw, r in parsed)
    precisions = doc.get("supported_precisions", list(DEFAULT_PRECISIONS[kind]))
    precisions = _list(precisions, f"{path}.supported_precisions", nonempty=True)
    for q in precisions:
        if q not in PRECISIONS:
            raise SchemaError(f"{path}.supported_precisions", f"unknown precision {q!r}")
    dsp_power = doc.get("dsp_power_w")
    return ProcessorSpec(
        kind=kind,
        vf_steps=steps,
        peak_gmacs=_num(_req(doc, "peak_gmacs", path), f"{path}.peak_gmacs", positive=True),
        core_count=_int(doc.get("core_count", 1), f"{path}.core_count", positive=True),
        idle_power_w=_num(doc.get("idle_power_w", 0.0), f"{path}.idle_power_w", nonneg=True),
        dsp_power_w=None if dsp_power is None else _num(dsp_power, f"{path}.dsp_power_w", positive=True),
        supported_precisions=tuple(q for q in PRECISIONS if q in precisions),
    )


def _parse_interface(doc: Mapping, path: str) -> NetworkInterfaceSpec:
    kind = _req(doc, "kind", path)
    if kind not in INTERFACE_KINDS:
        raise SchemaError(f"{path}.kind", f"must be one of {INTERFACE_KINDS}")
    bins = []
    for i, b in enumerate(_list(_req(doc, "bins", path), f"{path}.bins", nonempty=True)):
        p = f"{path}.bins[{i}]"
        lo = b.get("min_dbm")
        bins.append(
            RssiBin(
                min_dbm=None if lo is None else _num(lo, f"{p}.min_dbm"),
                max_dbm=_num(b.get("max_dbm", 0.0), f"{p}.max_dbm"),
                tx_power_w=_num(_req(b, "tx_power_w", p), f"{p}.tx_power_w", positive=True),
                rx_power_w=_num(_req(b, "rx_power_w", p), f"{p}.rx_power_w", positive=True),
                rate_bytes_s=_num(_req(b, "rate_bytes_s", p), f"{p}.rate_bytes_s", positive=True),
            )
        )
    return NetworkInterfaceSpec(kind, tuple(bins))


def _parse_device(doc: Mapping, path: str, *, free_compute_default=False) -> DeviceProfile:
    procs = _list(_req(doc, "processors", path), f"{path}.processors", nonempty=True)
    return DeviceProfile(
        name=str(_req(doc, "name", path)),
        processors=tuple(_parse_processor(p, f"{path}.processors[{i}]") for i, p in enumerate(procs)),
        interfaces=tuple(
            _parse_interface(d, f"{path}.interfaces[{i}]")
            for i, d in enumerate(_list(doc.get("interfaces", []), f"{path}.interfaces"))
        ),
        dram_bandwidth_gbs=_num(doc.get("dram_bandwidth_gbs", 10.0), f"{path}.dram_bandwidth_gbs", positive=True),
        free_compute_energy=bool(doc.get("free_compute_energy", free_compute_default)),
    )


def _parse_nn(doc: Mapping, path: str) -> NnProfile:
    acc = {}
    raw_acc = doc.get("accuracy", {})
    if not isinstance(raw_acc, Mapping):
        raise SchemaError(f"{path}.accuracy", "expected a mapping platform -> precision -> fraction")
    for platform, table in raw_acc.items():
        if not isinstance(table, Mapping):
            raise SchemaError(f"{path}.accuracy.{platform}", "expected a mapping precision -> fraction")
        for precision, value in table.items():
            acc[(str(platform), str(precision))] = _num(
                value, f"{path}.accuracy.{platform}.{precision}", lo=0.0, hi=1.0
            )
    return NnProfile(
        name=str(_req(doc, "name", path)),
        conv_layers=_int(_req(doc, "conv_layers", path), f"{path}.conv_layers", nonneg=True),
        fc_layers=_int(_req(doc, "fc_layers", path), f"{path}.fc_layers", nonneg=True),
        rc_layers=_int(_req(doc, "rc_layers", path), f"{path}.rc_layers", nonneg=True),
        mac_count_millions=_num(_req(doc, "mac_count_millions", path), f"{path}.mac_count_millions", positive=True),
        input_bytes=_int(_req(doc, "input_bytes", path), f"{path}.input_bytes", positive=True),
        output_bytes=_int(_req(doc, "output_bytes", path), f"{path}.output_bytes", positive=True),
        accuracy_by_target=acc,
        qos_target_s=_num(_req(doc, "qos_target_s", path), f"{path}.qos_target_s", positive=True),
        accuracy_requirement=_num(
            doc.get("accuracy_requirement", 0.5), f"{path}.accuracy_requirement", lo=0.0, hi=1.0
        ),
    )


def _parse_snapshot(doc, path: str, base: VarianceSnapshot = VarianceSnapshot()) -> VarianceSnapshot:
    doc = doc or {}
    values = {}
    for key in ("co_cpu_util", "co_mem_util", "rssi_wlan_dbm", "rssi_p2p_dbm"):
        if key in doc:
            values[key] = _num(doc[key], f"{path}.{key}")
    try:
        return VarianceSnapshot(**{**base.__dict__, **values})
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _parse_scenario(doc: Mapping, path: str, base_dir: Optional[Path]) -> ScenarioSpec:
    sid = str(_req(doc, "id", path))
    desc = str(doc.get("description", ""))
    kinds = [k for k in ("constant", "trace", "trace_file", "gaussian_rssi") if k in doc]
    if len(kinds) != 1:
        raise SchemaError(path, "exactly one of constant/trace/trace_file/gaussian_rssi is required")
    base = _parse_snapshot(doc.get("base"), f"{path}.base")
    kind = kinds[0]
    if kind == "constant":
        return ScenarioSpec(sid, Constant(_parse_snapshot(doc["constant"], f"{path}.constant", base)), desc)
    period = _int(doc.get("period", 1), f"{path}.period", positive=True)
    if kind == "trace_file":
        if base_dir is None:
            raise SchemaError(f"{path}.trace_file", "relative trace files need a base directory")
        trace_path = Path(base_dir) / str(doc["trace_file"])
        try:
            text = trace_path.read_text()
        except OSError as exc:
            raise SchemaError(f"{path}.trace_file", f"cannot read {trace_path}: {exc}") from None
        try:
            rows = read_trace_csv(text, base.rssi_wlan_dbm, base.rssi_p2p_dbm)
        except ValueError as exc:
            raise SchemaError(f"{path}.trace_file", str(exc)) from None
        if not rows:
            raise SchemaError(f"{path}.trace_file", "trace is empty")
        return ScenarioSpec(sid, Trace(rows, period), desc)
    if kind == "trace":
        raw = _list(doc["trace"], f"{path}.trace", nonempty=True)
        rows = tuple(_parse_snapshot(r, f"{path}.trace[{i}]", base) for i, r in enumerate(raw))
        return ScenarioSpec(sid, Trace(rows, period), desc)
    g = doc["gaussian_rssi"]
    gp = f"{path}.gaussian_rssi"
    iface = g.get("interface", "WLAN")
    if iface not in INTERFACE_KINDS:
        raise SchemaError(f"{gp}.interface", f"must be one of {INTERFACE_KINDS}")
    return ScenarioSpec(
        sid,
        GaussianRssi(
            mean_dbm=_num(_req(g, "mean_dbm", gp), f"{gp}.mean_dbm"),
            stddev_dbm=_num(_req(g, "stddev_dbm", gp), f"{gp}.stddev_dbm", nonneg=True),
            interface=iface,
            base=base,
        ),
        desc,
    )


def _parse_model(doc, path: str) -> ModelCoefficients:
    if doc is None:
        return ModelCoefficients()
    defaults = ModelCoefficients()
    speed = dict(defaults.precision_speedup)
    for k, v in (doc.get("precision_speedup") or {}).items():
        if k not in PRECISIONS:
            raise SchemaError(f"{path}.precision_speedup", f"unknown precision {k!r}")
        speed[k] = _num(v, f"{path}.precision_speedup.{k}", positive=True)
    affinity = {k: dict(v) for k, v in defaults.layer_affinity.items()}
    for kind, table in (doc.get("layer_affinity") or {}).items():
        if kind not in ("GPU", "DSP"):
            raise SchemaError(f"{path}.layer_affinity", f"only co-processors take affinity, got {kind!r}")
        for layer, v in table.items():
            if layer not in ("fc", "rc"):
                raise SchemaError(f"{path}.layer_affinity.{kind}", f"unknown layer type {layer!r}")
            affinity[kind][layer] = _num(v, f"{path}.layer_affinity.{kind}.{layer}", nonneg=True)
    return ModelCoefficients(
        cpu_contention=_num(doc.get("cpu_contention", defaults.cpu_contention), f"{path}.cpu_contention", lo=0.0, hi=0.999),
        mem_contention=_num(doc.get("mem_contention", defaults.mem_contention), f"{path}.mem_contention", lo=0.0, hi=0.999),
        precision_speedup=speed,
        layer_affinity=affinity,
    )


# ---------------------------------------------------------------------------
# invariants


def _check_processor(p: ProcessorSpec, where: str):
    steps = p.vf_steps
    if p.kind == "DSP":
        if len(steps) != 1:
            raise InvariantViolation("DSP has exactly one step", where)
        if p.dsp_power_w is None:
            raise InvariantViolation("DSP requires dsp_power_w", where)
    elif p.dsp_power_w is not None:
        raise InvariantViolation("dsp_power_w is only valid for DSP processors", where)
    if p.kind in ("GPU", "DSP") and p.core_count != 1:
        raise InvariantViolation("GPU/DSP core_count must be 1", where)
    for a, b in zip(steps, steps[1:]):
        if not b.frequency_hz > a.frequency_hz:
            raise InvariantViolation("V/F steps strictly increasing in frequency", where)
        if b.busy_power_w < a.busy_power_w:
            raise InvariantViolation("busy power nondecreasing with frequency", where)
        if b.relative_speed < a.relative_speed:
            raise InvariantViolation("relative speed nondecreasing with frequency", where)
    if any(not 0 < s.relative_speed <= 1 for s in steps):
        raise InvariantViolation("relative speed in (0, 1]", where)
    if steps[-1].relative_speed != 1.0:
        raise InvariantViolation("top V/F step has relative speed 1", where)


def _check_interface(iface: NetworkInterfaceSpec, where: str):
    for a, b in zip(iface.bins, iface.bins[1:]):
        if a.min_dbm is None or b.max_dbm != a.min_dbm:
            raise InvariantViolation("RSSI bins must be contiguous, strongest first", where)
        if not b.rate_bytes_s < a.rate_bytes_s:
            raise InvariantViolation("weaker RSSI bins have strictly lower data rate", where)
        if b.tx_power_w < a.tx_power_w:
            raise InvariantViolation("weaker RSSI bins have higher tx power", where)
    if iface.bins[-1].min_dbm is not None:
        raise InvariantViolation("weakest RSSI bin must be unbounded below", where)


def _check_device(dev: DeviceProfile, where: str):
    kinds = [p.kind for p in dev.processors]
    if len(set(kinds)) != len(kinds):
        raise InvariantViolation("at most one processor per kind", where)
    if "CPU" not in kinds and not dev.free_compute_energy:
        raise InvariantViolation("device needs a CPU", where)
    ikinds = [i.kind for i in dev.interfaces]
    if len(set(ikinds)) != len(ikinds):
        raise InvariantViolation("at most one interface per kind", where)
    for i, p in enumerate(dev.processors):
        _check_processor(p, f"{where}.processors[{i}]")
    for i, iface in enumerate(dev.interfaces):
        _check_interface(iface, f"{where}.interfaces[{i}]")


_SCENARIO_RULES = {
    "S1": lambda g: isinstance(g, Constant) and g.snapshot.co_cpu_util == 0 and g.snapshot.co_mem_util == 0
    and g.snapshot.rssi_wlan_dbm > -80 and g.snapshot.rssi_p2p_dbm > -80,
    "S2": lambda g: isinstance(g, Constant) and g.snapshot.co_cpu_util >= 0.75,
    "S3": lambda g: isinstance(g, Constant) and g.snapshot.co_mem_util >= 0.75,
    "S4": lambda g: isinstance(g, Constant) and g.snapshot.rssi_wlan_dbm <= -80,
    "S5": lambda g: isinstance(g, Constant) and g.snapshot.rssi_p2p_dbm <= -80,
    "D1": lambda g: isinstance(g, Trace),
    "D2": lambda g: isinstance(g, Trace),
    "D3": lambda g: isinstance(g, GaussianRssi) and g.interface == "WLAN",
}


def check_world(world: WorldConfig) -> None:
    """Raise :class:`InvariantViolation` if any world invariant is broken."""
    _check_device(world.edge, "edge")
    if world.edge.processor("CPU") is None:
        raise InvariantViolation("edge device needs a CPU", "edge")
    for platform in REMOTE_PLATFORMS:
        dev = world.remote(platform)
        if dev is None:
            continue
        _check_device(dev, platform)
        if world.edge.interface(REMOTE_INTERFACE[platform]) is None:
            raise InvariantViolation(f"{platform} needs a {REMOTE_INTERFACE[platform]} interface on the edge", "edge")
        if not any("FP32" in p.supported_precisions for p in dev.processors):
            raise InvariantViolation("remote platforms need an FP32-capable processor", platform)
    names = [nn.name for nn in world.nns]
    if len(set(names)) != len(names):
        raise InvariantViolation("NN names must be unique", "nns")
    ids = [s.id for s in world.scenarios]
    if len(set(ids)) != len(ids):
        raise InvariantViolation("scenario ids must be unique", "scenarios")
    devices = [world.edge.name] + [d.name for d in (world.connected_edge, world.cloud) if d is not None]
    if len(set(devices)) != len(devices):
        raise InvariantViolation("device names must be unique")
    for s in world.scenarios:
        rule = _SCENARIO_RULES.get(s.id)
        if rule is not None and not rule(s.generator):
            raise InvariantViolation(f"scenario {s.id} does not match its catalog definition", "scenarios")
        if isinstance(s.generator, GaussianRssi) and world.edge.interface(s.generator.interface) is None:
            raise InvariantViolation(f"scenario {s.id} references a missing {s.generator.interface} interface")


# ---------------------------------------------------------------------------
# load / dump


def load_world(config_text: str, base_dir=None) -> WorldConfig:
    """Parse and validate a world document.

    ``base_dir`` resolves relative ``trace_file`` references.
    Raises :class:`SchemaError` or :class:`InvariantViolation`.
    """
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise SchemaError("", f"not a valid document: {exc}") from None
    if not isinstance(doc, Mapping):
        raise SchemaError("", "top level must be a mapping")
    version = _int(_req(doc, "schema_version", ""), "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})")
    base_dir = Path(base_dir) if base_dir is not None else None
    nns_raw = doc.get("nns")
    if not nns_raw:
        raise SchemaError("nns", "nns must be nonempty")
    nns = tuple(_parse_nn(d, f"nns[{i}]") for i, d in enumerate(_list(nns_raw, "nns")))
    seed = _int(doc.get("seed", 0), "seed", nonneg=True)
    if seed >= 2**64:
        raise SchemaError("seed", "must fit in 64 bits")
    world = WorldConfig(
        name=str(doc.get("name", "")),
        edge=_parse_device(_req(doc, "edge", ""), "edge"),
        connected_edge=_parse_device(doc["connected_edge"], "connected_edge") if doc.get("connected_edge") else None,
        cloud=_parse_device(doc["cloud"], "cloud", free_compute_default=True) if doc.get("cloud") else None,
        nns=nns,
        scenarios=tuple(
            _parse_scenario(d, f"scenarios[{i}]", base_dir)
            for i, d in enumerate(_list(doc.get("scenarios", []), "scenarios"))
        ),
        seed=seed,
        model=_parse_model(doc.get("model"), "model"),
    )
    check_world(world)
    for nn in world.nns:
        for w in validate_accuracy_table(nn, world):
            log.warning(w)
    return world


def load_world_file(path) -> WorldConfig:
    path = Path(path)
    return load_world(path.read_text(), base_dir=path.parent)


def shipped_world_path(name: str = "mi8pro.world") -> Path:
    if not name.endswith(".world"):
        name += ".world"
    return Path(str(resources.files("infersched") / "worlds" / name))


def load_shipped_world(name: str = "mi8pro.world") -> WorldConfig:
    return load_world_file(shipped_world_path(name))


def resolve_world_path(spec: str) -> Path:
    """A path on disk, or the name of a shipped world."""
    path = Path(spec)
    if path.exists():
        return path
    shipped = shipped_world_path(path.name)
    if shipped.exists():
        return shipped
    raise FileNotFoundError(spec)


def _dump_snapshot(s: VarianceSnapshot) -> dict:
    return dict(s.__dict__)


def _dump_device(dev: DeviceProfile) -> dict:
    out: dict[str, Any] = {"name": dev.name, "dram_bandwidth_gbs": dev.dram_bandwidth_gbs}
    if dev.free_compute_energy:
        out["free_compute_energy"] = True
    out["processors"] = []
    for p in dev.processors:
        d: dict[str, Any] = {"kind": p.kind, "core_count": p.core_count, "peak_gmacs": p.peak_gmacs,
                             "idle_power_w": p.idle_power_w}
        if p.dsp_power_w is not None:
            d["dsp_power_w"] = p.dsp_power_w
        d["supported_precisions"] = list(p.supported_precisions)
        d["vf_steps"] = [[s.frequency_hz, s.busy_power_w, s.relative_speed] for s in p.vf_steps]
        out["processors"].append(d)
    out["interfaces"] = [
        {"kind": i.kind, "bins": [dict(b.__dict__) for b in i.bins]} for i in dev.interfaces
    ]
    return out


def _dump_scenario(s: ScenarioSpec) -> dict:
    out: dict[str, Any] = {"id": s.id}
    if s.description:
        out["description"] = s.description
    g = s.generator
    if isinstance(g, Constant):
        out["constant"] = _dump_snapshot(g.snapshot)
    elif isinstance(g, Trace):
        out["period"] = g.period
        out["trace"] = [_dump_snapshot(r) for r in g.rows]
    else:
        out["base"] = _dump_snapshot(g.base)
        out["gaussian_rssi"] = {"mean_dbm": g.mean_dbm, "stddev_dbm": g.stddev_dbm, "interface": g.interface}
    return out


def dump_world(world: WorldConfig) -> str:
    """Serialise ``world`` to a self-contained document (traces inlined)."""
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "name": world.name, "seed": world.seed}
    doc["model"] = {
        "cpu_contention": world.model.cpu_contention,
        "mem_contention": world.model.mem_contention,
        "precision_speedup": dict(world.model.precision_speedup),
        "layer_affinity": {k: dict(v) for k, v in world.model.layer_affinity.items()},
    }
    doc["edge"] = _dump_device(world.edge)
    if world.connected_edge is not None:
        doc["connected_edge"] = _dump_device(world.connected_edge)
    if world.cloud is not None:
        doc["cloud"] = _dump_device(world.cloud)
    nns = []
    for nn in world.nns:
        acc: dict[str, dict] = {}
        for (platform, precision), v in nn.accuracy_by_target.items():
            acc.setdefault(platform, {})[precision] = v
        nns.append({
            "name": nn.name, "conv_layers": nn.conv_layers, "fc_layers": nn.fc_layers,
            "rc_layers": nn.rc_layers, "mac_count_millions": nn.mac_count_millions,
            "input_bytes": nn.input_bytes, "output_bytes": nn.output_bytes,
            "qos_target_s": nn.qos_target_s, "accuracy_requirement": nn.accuracy_requirement,
            "accuracy": acc,
        })
    doc["nns"] = nns
    doc["scenarios"] = [_dump_scenario(s) for s in world.scenarios]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
