"""Runtime-variance snapshots and the scenario generators that produce them.

A scenario maps an inference step index to a :class:`VarianceSnapshot`.
Three generator kinds exist: a constant snapshot, a cyclic trace of
co-runner utilisation, and a Gaussian RSSI process on one interface.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from itertools import product
from typing import Iterable, Sequence, Union

import numpy as np

RSSI_MIN_DBM = -100.0
RSSI_MAX_DBM = -30.0

# Representative values used when a discretised variance cell has to be turned
# back into a concrete snapshot (training over the full variance grid).
UTIL_LEVELS = {"None": 0.0, "Small": 0.15, "Medium": 0.5, "Large": 0.9}
RSSI_LEVELS = {"Regular": -60.0, "Weak": -85.0}


@dataclass(frozen=True)
class VarianceSnapshot:
    co_cpu_util: float = 0.0
    co_mem_util: float = 0.0
    rssi_wlan_dbm: float = -60.0
    rssi_p2p_dbm: float = -60.0

    def __post_init__(self):
        for name in ("co_cpu_util", "co_mem_util", "rssi_wlan_dbm", "rssi_p2p_dbm"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("co_cpu_util", "co_mem_util"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("rssi_wlan_dbm", "rssi_p2p_dbm"):
            if getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be <= 0 dBm")

    def as_features(self) -> tuple:
        return (self.co_cpu_util, self.co_mem_util, self.rssi_wlan_dbm, self.rssi_p2p_dbm)


@dataclass(frozen=True)
class Constant:
    snapshot: VarianceSnapshot


@dataclass(frozen=True)
class Trace:
    """Cyclic trace; each row is held for ``period`` consecutive steps."""

    rows: tuple
    period: int = 1

    def __post_init__(self):
        if not self.rows:
            raise ValueError("trace must contain at least one row")
        if self.period < 1:
            raise ValueError("trace period must be >= 1")


@dataclass(frozen=True)
class GaussianRssi:
    mean_dbm: float
    stddev_dbm: float
    interface: str = "WLAN"
    base: VarianceSnapshot = VarianceSnapshot()

    def __post_init__(self):
        if self.interface not in ("WLAN", "P2P"):
            raise ValueError(f"unknown interface {self.interface!r}")
        if self.stddev_dbm < 0:
            raise ValueError("stddev_dbm must be >= 0")


Generator = Union[Constant, Trace, GaussianRssi]


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    generator: Generator
    description: str = ""

    @property
    def is_static(self) -> bool:
        return isinstance(self.generator, Constant)


def step_scenario(scenario: ScenarioSpec, step_index: int, seed: int = 0) -> VarianceSnapshot:
    """Snapshot of ``scenario`` at ``step_index``.

    The result is a pure function of its arguments: Gaussian draws use a
    generator keyed by ``(seed, step_index)`` so the order in which steps are
    requested does not matter.
    """
    if step_index < 0:
        raise ValueError("step_index must be >= 0")
    gen = scenario.generator
    if isinstance(gen, Constant):
        return gen.snapshot
    if isinstance(gen, Trace):
        return gen.rows[(step_index // gen.period) % len(gen.rows)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step_index,)))
    rssi = float(np.clip(rng.normal(gen.mean_dbm, gen.stddev_dbm), RSSI_MIN_DBM, RSSI_MAX_DBM))
    if gen.interface == "WLAN":
        return replace(gen.base, rssi_wlan_dbm=rssi)
    return replace(gen.base, rssi_p2p_dbm=rssi)


def variance_grid() -> list:
    """One constant scenario per runtime-variance cell (4 x 4 x 2 x 2 = 64)."""
    cells = []
    for cpu, mem, wlan, p2p in product(UTIL_LEVELS, UTIL_LEVELS, RSSI_LEVELS, RSSI_LEVELS):
        snap = VarianceSnapshot(UTIL_LEVELS[cpu], UTIL_LEVELS[mem], RSSI_LEVELS[wlan], RSSI_LEVELS[p2p])
        cells.append(ScenarioSpec(f"grid:{cpu}/{mem}/{wlan}/{p2p}", Constant(snap)))
    return cells


def read_trace_csv(text: str, rssi_wlan_dbm: float = -60.0, rssi_p2p_dbm: float = -60.0) -> tuple:
    """Parse a ``step,co_cpu_util,co_mem_util`` trace into snapshots ordered by step."""
    reader = csv.DictReader(io.StringIO(text))
    missing = {"step", "co_cpu_util", "co_mem_util"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"trace is missing columns: {sorted(missing)}")
    rows = sorted(reader, key=lambda r: int(r["step"]))
    return tuple(
        VarianceSnapshot(float(r["co_cpu_util"]), float(r["co_mem_util"]), rssi_wlan_dbm, rssi_p2p_dbm)
        for r in rows
    )


def write_trace_csv(rows: Iterable[VarianceSnapshot]) -> str:
    """Inverse of :func:`read_trace_csv` up to six significant digits."""
    out = io.StringIO()
    out.write("step,co_cpu_util,co_mem_util\n")
    for i, snap in enumerate(rows):
        out.write(f"{i},{snap.co_cpu_util:.6g},{snap.co_mem_util:.6g}\n")
    return out.getvalue()


def snapshots(scenario: ScenarioSpec, steps: int, seed: int = 0) -> Sequence[VarianceSnapshot]:
    return [step_scenario(scenario, k, seed) for k in range(steps)]
