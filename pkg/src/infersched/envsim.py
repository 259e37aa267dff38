"""Simulated inference execution: latency, energy and accuracy of one action."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import (
    EnergyBreakdown,
    PowerTable,
    UtilizationSlice,
    cpu_energy,
    dsp_energy,
    gpu_energy,
    offload_energy,
)
from .profiles import (
    REMOTE_INTERFACE,
    Action,
    ModelCoefficients,
    NetworkInterfaceSpec,
    NnProfile,
    ProcessorSpec,
    WorldConfig,
    enumerate_actions,
)
from .scenarios import (  # noqa: F401  (re-exported)
    Constant,
    GaussianRssi,
    ScenarioSpec,
    Trace,
    VarianceSnapshot,
    step_scenario,
    variance_grid,
)


_DEFAULT_MODEL = ModelCoefficients()


class UnknownActionError(ValueError):
    pass


@dataclass(frozen=True)
class ExecutionOutcome:
    latency_s: float
    energy: EnergyBreakdown
    accuracy: float
    action: Action
    qos_met: bool
    accuracy_met: bool

    @property
    def energy_j(self) -> float:
        return self.energy.total_j


def transmission_time(payload_bytes: int, iface: NetworkInterfaceSpec, rssi_dbm: float) -> float:
    if payload_bytes <= 0:
        raise ValueError("payload must be at least one byte")
    return payload_bytes / iface.bin_for(rssi_dbm).rate_bytes_s


def layer_affinity(nn: NnProfile, kind: str, world: Optional[WorldConfig] = None) -> float:
    """Latency multiplier of running ``nn`` on processor ``kind``.

    FC and RC layers map poorly onto co-processors; the CPU is the reference.
    """
    if kind == "CPU":
        return 1.0
    table = (world.model if world is not None else _DEFAULT_MODEL).layer_affinity.get(kind, {})
    return 1.0 + table.get("fc", 0.0) * nn.fc_layers + table.get("rc", 0.0) * nn.rc_layers


def interference_slowdown(snap: VarianceSnapshot, kind: str, world: WorldConfig) -> float:
    m = world.model
    slow = 1.0 / (1.0 - m.mem_contention * snap.co_mem_util)
    if kind == "CPU":
        slow *= 1.0 / (1.0 - m.cpu_contention * snap.co_cpu_util)
    return slow


def _compute_time(world: WorldConfig, nn: NnProfile, proc: ProcessorSpec, vf: int, precision: str) -> float:
    speed = proc.peak_gmacs * proc.vf_steps[vf].relative_speed * world.model.precision_speedup[precision]
    return (nn.mac_count_millions / 1e3) / speed * layer_affinity(nn, proc.kind, world)


def _remote_compute_time(world: WorldConfig, nn: NnProfile, platform: str) -> float:
    # the remote side runs FP32 on its fastest capable processor, top V/F step
    dev = world.remote(platform)
    return min(
        _compute_time(world, nn, p, p.top_step, "FP32")
        for p in dev.processors
        if "FP32" in p.supported_precisions
    )


def _check_action(world: WorldConfig, action: Action) -> Optional[ProcessorSpec]:
    if action.is_remote:
        if action.platform not in REMOTE_INTERFACE or world.remote(action.platform) is None:
            raise UnknownActionError(f"no {action.platform} platform in this world")
        if action.precision != "FP32":
            raise UnknownActionError(f"remote actions run FP32, got {action.precision}")
        return None
    if action.platform != "edge":
        raise UnknownActionError(f"unknown platform {action.platform!r}")
    proc = world.edge.processor(action.processor)
    if (
        proc is None
        or action.vf_index is None
        or not 0 <= action.vf_index < len(proc.vf_steps)
        or action.precision not in proc.supported_precisions
    ):
        raise UnknownActionError(f"action {action.label} is not available on {world.edge.name}")
    return proc


def simulate_execution(
    world: WorldConfig, nn: NnProfile, action: Action, snap: VarianceSnapshot
) -> ExecutionOutcome:
    proc = _check_action(world, action)
    if proc is not None:
        latency = _compute_time(world, nn, proc, action.vf_index, action.precision)
        latency *= interference_slowdown(snap, proc.kind, world)
        freq = proc.vf_steps[action.vf_index].frequency_hz
        if proc.kind == "CPU":
            table = PowerTable.from_processor(proc, proc.core_count)
            per_core = [([UtilizationSlice(freq, latency)], 0.0)] * proc.core_count
            energy = cpu_energy(per_core, table)
        elif proc.kind == "GPU":
            energy = gpu_energy([UtilizationSlice(freq, latency)], 0.0, PowerTable.from_processor(proc))
        else:
            energy = dsp_energy(proc.dsp_power_w, latency)
    else:
        iface = world.edge.interface(REMOTE_INTERFACE[action.platform])
        rssi = snap.rssi_wlan_dbm if iface.kind == "WLAN" else snap.rssi_p2p_dbm
        radio = iface.bin_for(rssi)
        t_tx = transmission_time(nn.input_bytes, iface, rssi)
        t_rx = transmission_time(nn.output_bytes, iface, rssi)
        latency = t_tx + _remote_compute_time(world, nn, action.platform) + t_rx
        idle_w = world.edge.processor("CPU").idle_power_w
        energy = offload_energy(radio.tx_power_w, t_tx, radio.rx_power_w, t_rx, idle_w, latency)
    acc = nn.accuracy(*action.accuracy_key)
    acc = 0.0 if acc is None else acc
    return ExecutionOutcome(
        latency_s=latency,
        energy=energy,
        accuracy=acc,
        action=action,
        qos_met=latency < nn.qos_target_s,
        accuracy_met=acc >= nn.accuracy_requirement,
    )


class Simulator:
    """Caches the full per-action outcome table of (nn, snapshot) pairs.

    Outcomes depend on RSSI only through its interface bin, so snapshots are
    keyed by bin index rather than the raw dBm value.
    """

    def __init__(self, world: WorldConfig, actions=None):
        self.world = world
        self.actions = list(actions) if actions is not None else enumerate_actions(world)
        self.index = {a: i for i, a in enumerate(self.actions)}
        self._cache: dict = {}
        self._wlan = world.edge.interface("WLAN")
        self._p2p = world.edge.interface("P2P")

    def _bin_index(self, iface, rssi):
        if iface is None:
            return rssi
        for i, b in enumerate(iface.bins):
            if b.covers(rssi):
                return i
        return rssi

    def key(self, nn: NnProfile, snap: VarianceSnapshot):
        return (
            nn.name,
            snap.co_cpu_util,
            snap.co_mem_util,
            self._bin_index(self._wlan, snap.rssi_wlan_dbm),
            self._bin_index(self._p2p, snap.rssi_p2p_dbm),
        )

    def outcomes(self, nn: NnProfile, snap: VarianceSnapshot) -> list:
        k = self.key(nn, snap)
        table = self._cache.get(k)
        if table is None:
            table = [simulate_execution(self.world, nn, a, snap) for a in self.actions]
            self._cache[k] = table
        return table

    def outcome(self, nn: NnProfile, action_index: int, snap: VarianceSnapshot) -> ExecutionOutcome:
        return self.outcomes(nn, snap)[action_index]

    def arrays(self, nn: NnProfile, snap: VarianceSnapshot):
        """(latency, energy, accuracy) arrays over the action set."""
        k = ("arrays",) + self.key(nn, snap)
        arr = self._cache.get(k)
        if arr is None:
            outs = self.outcomes(nn, snap)
            arr = (
                np.array([o.latency_s for o in outs]),
                np.array([o.energy.total_j for o in outs]),
                np.array([o.accuracy for o in outs]),
            )
            self._cache[k] = arr
        return arr
