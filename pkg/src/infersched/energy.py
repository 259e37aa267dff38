"""Device-centric energy models for CPU, GPU, DSP and offloaded execution.

All functions are pure and linear in their time arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Tuple


class UnknownFrequencyError(ValueError):
    pass


@dataclass(frozen=True)
class UtilizationSlice:
    frequency_hz: float
    busy_time_s: float


@dataclass(frozen=True)
class PowerTable:
    """Busy power per frequency plus the idle power of one core / processor."""

    busy_power_w: Mapping[float, float]
    idle_power_w: float = 0.0

    @classmethod
    def from_processor(cls, proc, cores: int = 1) -> "PowerTable":
        return cls(
            {s.frequency_hz: s.busy_power_w / cores for s in proc.vf_steps},
            proc.idle_power_w / cores,
        )


@dataclass(frozen=True)
class EnergyBreakdown:
    compute_j: float = 0.0
    idle_j: float = 0.0
    tx_j: float = 0.0
    rx_j: float = 0.0

    @property
    def total_j(self) -> float:
        return self.compute_j + self.idle_j + self.tx_j + self.rx_j


def _busy_energy(slices: Iterable[UtilizationSlice], power: PowerTable) -> float:
    total = 0.0
    for s in slices:
        try:
            p = power.busy_power_w[s.frequency_hz]
        except KeyError:
            raise UnknownFrequencyError(f"frequency {s.frequency_hz} Hz not in power table") from None
        total += p * s.busy_time_s
    return total


def cpu_energy(
    per_core: Sequence[Tuple[Sequence[UtilizationSlice], float]], power: PowerTable
) -> EnergyBreakdown:
    """Utilisation-based CPU model: per core, busy power at each frequency
    times time spent there, plus idle power times idle time; summed over cores."""
    compute = 0.0
    idle = 0.0
    for slices, idle_time_s in per_core:
        compute += _busy_energy(slices, power)
        idle += power.idle_power_w * idle_time_s
    return EnergyBreakdown(compute_j=compute, idle_j=idle)


def gpu_energy(slices: Sequence[UtilizationSlice], idle_time_s: float, power: PowerTable) -> EnergyBreakdown:
    return EnergyBreakdown(compute_j=_busy_energy(slices, power), idle_j=power.idle_power_w * idle_time_s)


def dsp_energy(p_dsp_w: float, latency_s: float) -> EnergyBreakdown:
    return EnergyBreakdown(compute_j=p_dsp_w * latency_s)


def offload_energy(
    p_tx_w: float, t_tx_s: float, p_rx_w: float, t_rx_s: float, p_idle_w: float, total_latency_s: float
) -> EnergyBreakdown:
    """Signal-strength based model: radio power while sending and receiving,
    idle power for the rest of the end-to-end latency."""
    waiting = total_latency_s - t_tx_s - t_rx_s
    if waiting < 0:
        # float slack when t_tx + t_rx == latency by construction
        if waiting < -1e-12 * max(total_latency_s, 1.0):
            raise ValueError(
                f"t_tx + t_rx ({t_tx_s + t_rx_s}) exceeds total latency ({total_latency_s})"
            )
        waiting = 0.0
    return EnergyBreakdown(idle_j=p_idle_w * waiting, tx_j=p_tx_w * t_tx_s, rx_j=p_rx_w * t_rx_s)
