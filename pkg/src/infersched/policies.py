"""Scheduling policies evaluated against the learned agent.

Fixed single-target baselines, the brute-force oracle, the greedy agent,
and two prediction-based comparators (per-action linear regression and
k-nearest neighbours over raw features).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .agent import DEFAULT_HP, Hyperparams, QTable, observe_state, reward_array
from .envsim import Simulator
from .profiles import Action, NnProfile, WorldConfig
from .scenarios import ScenarioSpec, VarianceSnapshot, step_scenario, variance_grid

FEATURE_NAMES = (
    "conv_layers", "fc_layers", "rc_layers", "mac_count_millions",
    "co_cpu_util", "co_mem_util", "rssi_wlan_dbm", "rssi_p2p_dbm",
)


class RewardModel:
    """Simulator plus reward evaluation, cached per (NN, snapshot)."""

    def __init__(self, world: WorldConfig, hp: Hyperparams = DEFAULT_HP, simulator: Optional[Simulator] = None):
        self.world = world
        self.hp = hp
        self.sim = simulator if simulator is not None else Simulator(world)
        self._rewards: dict = {}
        self._supported: dict = {}

    @property
    def actions(self) -> list:
        return self.sim.actions

    def rewards(self, nn: NnProfile, snap: VarianceSnapshot) -> np.ndarray:
        key = self.sim.key(nn, snap)
        r = self._rewards.get(key)
        if r is None:
            r = reward_array(*self.sim.arrays(nn, snap), nn, self.hp)
            self._rewards[key] = r
        return r

    def ranking(self, nn: NnProfile, snap: VarianceSnapshot) -> np.ndarray:
        """Rewards with actions that lack an accuracy entry for ``nn`` pushed to -inf.

        Such targets have no deployable model, so the oracle skips them even
        though their reward of -0 can exceed every feasible reward.
        """
        r = self.rewards(nn, snap)
        supported = self._supported.get(nn.name)
        if supported is None:
            supported = np.array([nn.accuracy(*a.accuracy_key) is not None for a in self.actions])
            self._supported[nn.name] = supported
        if supported.all() or not supported.any():
            return r
        return np.where(supported, r, -np.inf)


_MODELS: dict = {}


def reward_model(world: WorldConfig, hp: Hyperparams = DEFAULT_HP) -> RewardModel:
    """Shared :class:`RewardModel` for ``world``, keyed by object identity."""
    key = (id(world), hp)
    entry = _MODELS.get(key)
    if entry is None or entry.world is not world:
        entry = RewardModel(world, hp)
        _MODELS[key] = entry
    return entry


def oracle_index(world: WorldConfig, nn: NnProfile, snap: VarianceSnapshot, hp: Hyperparams = DEFAULT_HP) -> int:
    return int(np.argmax(reward_model(world, hp).ranking(nn, snap)))


def oracle_decide(world: WorldConfig, nn: NnProfile, snap: VarianceSnapshot, hp: Hyperparams = DEFAULT_HP) -> Action:
    """Action with the highest reward under ``snap``; ties go to the lowest index."""
    return reward_model(world, hp).actions[oracle_index(world, nn, snap, hp)]


def reward_margin(rewards: np.ndarray) -> float:
    """Relative reward gap between the best and the runner-up action."""
    if len(rewards) < 2:
        return math.inf
    top2 = np.sort(rewards)[-2:]
    best, second = top2[1], top2[0]
    if best == second:
        return 0.0
    return float((best - second) / abs(best)) if best != 0 else math.inf


# ---------------------------------------------------------------------------
# policies


class Policy:
    """Maps (world, NN, snapshot) to an action. ``decide`` is deterministic.

    Subclasses carry a ``name`` used in reports and on the command line.
    """

    def decide(self, world: WorldConfig, nn: NnProfile, snap: VarianceSnapshot) -> Action:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {getattr(self, 'name', '?')}>"


@dataclass(frozen=True, repr=False)
class FunctionPolicy(Policy):
    name: str
    fn: Callable

    def decide(self, world, nn, snap):
        return self.fn(world, nn, snap)


@dataclass(frozen=True, repr=False)
class OraclePolicy(Policy):
    hp: Hyperparams = DEFAULT_HP
    name: str = "oracle"

    def decide(self, world, nn, snap):
        return oracle_decide(world, nn, snap, self.hp)


@dataclass(frozen=True, repr=False)
class AgentPolicy(Policy):
    """Greedy (epsilon = 0) lookup in a trained Q-table."""

    q: QTable
    name: str = "agent"

    def decide(self, world, nn, snap):
        return self.q.greedy(observe_state(nn, snap))


def edge_cpu_action(world: WorldConfig) -> Optional[Action]:
    cpu = world.edge.processor("CPU")
    if cpu is None or "FP32" not in cpu.supported_precisions:
        return None
    return Action("edge", "CPU", cpu.top_step, "FP32")


def _edge_best(hp: Hyperparams) -> Callable:
    def decide(world, nn, snap):
        model = reward_model(world, hp)
        local = np.array([not a.is_remote for a in model.actions])
        r = np.where(local, model.ranking(nn, snap), -np.inf)
        return model.actions[int(np.argmax(r))]

    return decide


def fixed_policies(world: WorldConfig, hp: Hyperparams = DEFAULT_HP) -> list:
    """The single-target baselines available in ``world``.

    ``edge-cpu`` always runs FP32 on the edge CPU at its top V/F step,
    ``edge-best`` picks the highest-reward local action, ``cloud`` and
    ``connected-edge`` always offload. Baselines whose platform is missing
    are left out with a warning.
    """
    policies = []
    cpu_top = edge_cpu_action(world)
    if cpu_top is None:
        warnings.warn("world has no FP32-capable edge CPU; edge-cpu baseline omitted", stacklevel=2)
    else:
        policies.append(FunctionPolicy("edge-cpu", lambda w, nn, snap, a=cpu_top: a))
    policies.append(FunctionPolicy("edge-best", _edge_best(hp)))
    for platform, name in (("cloud", "cloud"), ("connected_edge", "connected-edge")):
        if world.remote(platform) is None:
            warnings.warn(f"world has no {platform}; {name} baseline omitted", stacklevel=2)
        else:
            policies.append(FunctionPolicy(name, lambda w, nn, snap, a=Action(platform): a))
    return policies


# ---------------------------------------------------------------------------
# prediction-based comparators


def features(nn: NnProfile, snap: VarianceSnapshot) -> np.ndarray:
    """Raw (pre-discretisation) features the agent's state is derived from."""
    return np.array(
        [nn.conv_layers, nn.fc_layers, nn.rc_layers, nn.mac_count_millions, *snap.as_features()],
        dtype=float,
    )


@dataclass(frozen=True)
class TrainingSample:
    """One measured execution: features, the action index, and its cost."""

    features: np.ndarray
    action_index: int
    latency_s: float
    energy_j: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.features)) and math.isfinite(self.latency_s) and math.isfinite(self.energy_j)):
            raise ValueError("training sample values must be finite")


@dataclass(frozen=True)
class LabeledSample:
    """Features paired with the oracle's action index."""

    features: np.ndarray
    label: int


class TooFewSamplesError(ValueError):
    pass


def _snapshots(scenarios: Sequence[ScenarioSpec], steps: int, seed: int) -> list:
    snaps = []
    for sc in scenarios:
        n = 1 if sc.is_static else steps
        snaps.extend(step_scenario(sc, k, seed) for k in range(n))
    return snaps


def collect_samples(
    world: WorldConfig, scenarios: Sequence[ScenarioSpec], nns=None, steps: int = 1, seed: int = 0
) -> list:
    """One :class:`TrainingSample` per (snapshot, NN, action).

    Static scenarios contribute a single snapshot; dynamic ones ``steps``.
    """
    sim = reward_model(world).sim
    nns = list(nns) if nns is not None else list(world.nns)
    out = []
    for snap in _snapshots(scenarios, steps, seed):
        for nn in nns:
            x = features(nn, snap)
            lat, energy, _ = sim.arrays(nn, snap)
            out.extend(TrainingSample(x, i, float(lat[i]), float(energy[i])) for i in range(len(lat)))
    return out


def oracle_samples(
    world: WorldConfig, scenarios: Sequence[ScenarioSpec], nns=None, steps: int = 1, seed: int = 0,
    hp: Hyperparams = DEFAULT_HP,
) -> list:
    nns = list(nns) if nns is not None else list(world.nns)
    return [
        LabeledSample(features(nn, snap), oracle_index(world, nn, snap, hp))
        for snap in _snapshots(scenarios, steps, seed)
        for nn in nns
    ]


def _lstsq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normal-equation solve, falling back to the pseudo-inverse when singular."""
    xtx = x.T @ x
    try:
        if np.linalg.cond(xtx) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned")
        return np.linalg.solve(xtx, x.T @ y)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(x) @ y


@dataclass(frozen=True, repr=False)
class LinearRegressionPolicy(Policy):
    """Per-action OLS predictors of latency and energy.

    ``coef_latency[i]`` and ``coef_energy[i]`` hold the intercept followed
    by one weight per raw feature for action ``i``.
    """

    actions: tuple
    coef_latency: np.ndarray
    coef_energy: np.ndarray
    name: str = "lr"

    def predict(self, nn: NnProfile, snap: VarianceSnapshot) -> tuple:
        x = np.concatenate(([1.0], features(nn, snap)))
        return self.coef_latency @ x, self.coef_energy @ x

    def decide(self, world, nn, snap):
        lat, energy = self.predict(nn, snap)
        acc = np.array([nn.accuracy(*a.accuracy_key) or 0.0 for a in self.actions])
        acc_ok = acc >= nn.accuracy_requirement
        # preference: meets QoS and accuracy, then accuracy only, then anything
        for mask in (acc_ok & (lat < nn.qos_target_s), acc_ok, np.ones_like(acc_ok)):
            if mask.any():
                return self.actions[int(np.argmin(np.where(mask, energy, np.inf)))]
        raise AssertionError("unreachable")


def fit_lr(samples: Sequence[TrainingSample], actions: Sequence[Action], name: str = "lr") -> LinearRegressionPolicy:
    """Fit one latency and one energy model per action by least squares."""
    actions = tuple(actions)
    if not samples:
        raise TooFewSamplesError("no training samples")
    dim = len(samples[0].features) + 1
    if len(samples) < dim:
        raise TooFewSamplesError(f"need at least {dim} samples, got {len(samples)}")
    x = np.array([np.concatenate(([1.0], s.features)) for s in samples])
    idx = np.array([s.action_index for s in samples])
    lat = np.array([s.latency_s for s in samples])
    energy = np.array([s.energy_j for s in samples])
    coef_l = np.zeros((len(actions), dim))
    coef_e = np.zeros((len(actions), dim))
    for i in range(len(actions)):
        rows = idx == i
        if not rows.any():
            # never observed: predict an infinite cost so it is never chosen
            coef_l[i, 0] = coef_e[i, 0] = np.inf
            continue
        coef_l[i] = _lstsq(x[rows], lat[rows])
        coef_e[i] = _lstsq(x[rows], energy[rows])
    return LinearRegressionPolicy(actions, coef_l, coef_e, name)


@dataclass(frozen=True, repr=False)
class KnnPolicy(Policy):
    actions: tuple
    points: np.ndarray  # z-scored training features
    labels: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    k: int
    name: str = "knn"

    def classify(self, x: np.ndarray) -> int:
        z = (np.asarray(x, dtype=float) - self.mean) / self.scale
        d = np.sqrt(((self.points - z) ** 2).sum(axis=1))
        nearest = np.argsort(d, kind="stable")[: self.k]
        votes = np.bincount(self.labels[nearest], minlength=len(self.actions))
        return int(np.argmax(votes))  # ties -> smallest action index

    def decide(self, world, nn, snap):
        return self.actions[self.classify(features(nn, snap))]


def fit_knn(samples: Sequence[LabeledSample], actions: Sequence[Action], k: int = 5, name: str = "knn") -> KnnPolicy:
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    if len(samples) < k:
        raise TooFewSamplesError(f"need at least k={k} samples, got {len(samples)}")
    x = np.array([s.features for s in samples], dtype=float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return KnnPolicy(tuple(actions), (x - mean) / scale, labels, mean, scale, k, name)


def fit_comparators(
    world: WorldConfig, scenarios: Optional[Sequence[ScenarioSpec]] = None, k: int = 5,
    hp: Hyperparams = DEFAULT_HP,
) -> tuple:
    """LR and KNN comparators fitted on static scenarios.

    By default these are the world's own static scenarios, or the variance
    grid when the world defines none.
    """
    if scenarios is None:
        scenarios = [s for s in world.scenarios if s.is_static] or variance_grid()
    scenarios = list(scenarios)
    actions = reward_model(world, hp).actions
    lr = fit_lr(collect_samples(world, scenarios), actions)
    knn = fit_knn(oracle_samples(world, scenarios, hp=hp), actions, k)
    return lr, knn
