"""Tabular Q-learning scheduler.

The agent observes a discretised state (NN shape plus runtime variance),
picks an execution target epsilon-greedily from its Q-table, and learns
from the reward of the simulated outcome.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .envsim import ExecutionOutcome, Simulator
from .profiles import Action, NnProfile, WorldConfig
from .scenarios import GaussianRssi, ScenarioSpec, VarianceSnapshot, step_scenario

log = logging.getLogger(__name__)

CONV_BINS = ("Small", "Medium", "Large", "Larger")
FC_BINS = ("Small", "Large")
RC_BINS = ("Small", "Large")
MAC_BINS = ("Small", "Medium", "Large")
UTIL_BINS = ("None", "Small", "Medium", "Large")
RSSI_BINS = ("Regular", "Weak")

CONV_EDGES = (30, 50, 90)
LAYER_EDGE = 10
MAC_EDGES_MILLIONS = (1000.0, 2000.0)
UTIL_EDGES = (0.25, 0.75)
RSSI_WEAK_DBM = -80.0

# (field name, bin labels) in mixed-radix order, most significant first
STATE_FIELDS = (
    ("s_conv", CONV_BINS),
    ("s_fc", FC_BINS),
    ("s_rc", RC_BINS),
    ("s_mac", MAC_BINS),
    ("s_co_cpu", UTIL_BINS),
    ("s_co_mem", UTIL_BINS),
    ("s_rssi_w", RSSI_BINS),
    ("s_rssi_p", RSSI_BINS),
)
RADIX = tuple(len(bins) for _, bins in STATE_FIELDS)
N_STATES = int(np.prod(RADIX))

ARRIVAL_MODELS = ("round_robin", "fixed", "random")


@dataclass(frozen=True)
class DiscreteState:
    s_conv: str
    s_fc: str
    s_rc: str
    s_mac: str
    s_co_cpu: str
    s_co_mem: str
    s_rssi_w: str
    s_rssi_p: str

    def __post_init__(self):
        for name, bins in STATE_FIELDS:
            if getattr(self, name) not in bins:
                raise ValueError(f"{name}={getattr(self, name)!r} is not one of {bins}")

    @property
    def index(self) -> int:
        idx = 0
        for (name, bins), radix in zip(STATE_FIELDS, RADIX):
            idx = idx * radix + bins.index(getattr(self, name))
        return idx

    @classmethod
    def from_index(cls, index: int) -> "DiscreteState":
        if not 0 <= index < N_STATES:
            raise IndexError(f"state index {index} outside [0, {N_STATES})")
        digits = []
        for radix in reversed(RADIX):
            index, d = divmod(index, radix)
            digits.append(d)
        labels = [bins[d] for (_, bins), d in zip(STATE_FIELDS, reversed(digits))]
        return cls(*labels)


def all_states() -> list:
    return [DiscreteState(*labels) for labels in product(*(bins for _, bins in STATE_FIELDS))]


def _bin(value: float, edges: Sequence[float]) -> int:
    for i, edge in enumerate(edges):
        if value < edge:
            return i
    return len(edges)


def _util_bin(u: float) -> str:
    if u <= 0.0:
        return "None"
    return UTIL_BINS[1 + _bin(u, UTIL_EDGES)]


def _rssi_bin(dbm: float) -> str:
    return "Regular" if dbm > RSSI_WEAK_DBM else "Weak"


def observe_state(nn: NnProfile, snap: VarianceSnapshot) -> DiscreteState:
    return DiscreteState(
        s_conv=CONV_BINS[_bin(nn.conv_layers, CONV_EDGES)],
        s_fc=FC_BINS[int(nn.fc_layers >= LAYER_EDGE)],
        s_rc=RC_BINS[int(nn.rc_layers >= LAYER_EDGE)],
        s_mac=MAC_BINS[_bin(nn.mac_count_millions, MAC_EDGES_MILLIONS)],
        s_co_cpu=_util_bin(snap.co_cpu_util),
        s_co_mem=_util_bin(snap.co_mem_util),
        s_rssi_w=_rssi_bin(snap.rssi_wlan_dbm),
        s_rssi_p=_rssi_bin(snap.rssi_p2p_dbm),
    )


# ---------------------------------------------------------------------------
# reward


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.9
    discount: float = 0.1
    epsilon: float = 0.1
    alpha: float = 0.1
    beta: float = 0.1
    # Reward units. The default uses joules, seconds and accuracy fractions
    # as they are. ``normalized_units`` divides latency by the NN's QoS
    # target and energy by ``energy_scale_j``.
    normalized_units: bool = False
    energy_scale_j: float = 1.0
    # The latency term adds +alpha*L when QoS is met, which favours slower
    # targets inside the budget; this flips its sign for sensitivity studies.
    negate_latency_term: bool = False

    def __post_init__(self):
        # 0 is accepted as a degenerate "frozen table" setting
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in [0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.energy_scale_j <= 0:
            raise ValueError("energy_scale_j must be > 0")

    def replace(self, **changes) -> "Hyperparams":
        return Hyperparams(**{**asdict(self), **changes})


DEFAULT_HP = Hyperparams()


def reward_array(latency_s, energy_j, accuracy, nn: NnProfile, hp: Hyperparams = DEFAULT_HP):
    """Vectorised reward over arrays of outcomes for one NN."""
    latency_s = np.asarray(latency_s, dtype=float)
    energy_j = np.asarray(energy_j, dtype=float)
    accuracy = np.asarray(accuracy, dtype=float)
    if hp.normalized_units:
        lat_term = latency_s / nn.qos_target_s
        energy_term = energy_j / hp.energy_scale_j
    else:
        lat_term = latency_s
        energy_term = energy_j
    sign = -1.0 if hp.negate_latency_term else 1.0
    met = -energy_term + sign * hp.alpha * lat_term + hp.beta * accuracy
    missed = -energy_term + hp.beta * accuracy
    reward = np.where(latency_s < nn.qos_target_s, met, missed)
    return np.where(accuracy < nn.accuracy_requirement, -accuracy, reward)


def compute_reward(outcome: ExecutionOutcome, nn: NnProfile, hp: Hyperparams = DEFAULT_HP) -> float:
    if outcome.accuracy < nn.accuracy_requirement:
        return -outcome.accuracy
    if hp.normalized_units:
        lat_term = outcome.latency_s / nn.qos_target_s
        energy_term = outcome.energy_j / hp.energy_scale_j
    else:
        lat_term = outcome.latency_s
        energy_term = outcome.energy_j
    if outcome.latency_s < nn.qos_target_s:
        sign = -1.0 if hp.negate_latency_term else 1.0
        return -energy_term + sign * hp.alpha * lat_term + hp.beta * outcome.accuracy
    return -energy_term + hp.beta * outcome.accuracy


# ---------------------------------------------------------------------------
# Q-table

QTAB_MAGIC = b"QTAB 1\n"


class QTableFormatError(ValueError):
    pass


StateKey = Union[DiscreteState, int]
ActionKey = Union[Action, int]


@dataclass(eq=False)
class QTable:
    """Dense Q-values and visit counts, one row per discrete state.

    Persisted format (little endian throughout)::

        b"QTAB 1\\n"
        one line of JSON: {"actions": [labels], "n_actions", "n_states", "hyperparams"}
        n_states * n_actions float64 values, row major by state index
        n_states * n_actions uint32 visit counts, same order
    """

    values: np.ndarray
    visits: np.ndarray
    action_set: tuple
    hp: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        self.action_set = tuple(self.action_set)
        shape = (N_STATES, len(self.action_set))
        if not self.action_set:
            raise ValueError("action_set must be nonempty")
        if self.values.shape != shape or self.visits.shape != shape:
            raise ValueError(f"values and visits must have shape {shape}")
        self._index = {a: i for i, a in enumerate(self.action_set)}

    @classmethod
    def random(cls, actions: Sequence[Action], rng: np.random.Generator, hp: Hyperparams = DEFAULT_HP) -> "QTable":
        n = len(actions)
        return cls(rng.uniform(-0.01, 0.01, size=(N_STATES, n)), np.zeros((N_STATES, n), dtype=np.int64), actions, hp)

    @property
    def n_actions(self) -> int:
        return len(self.action_set)

    def state_index(self, s: StateKey) -> int:
        return s.index if isinstance(s, DiscreteState) else int(s)

    def action_index(self, a: ActionKey) -> int:
        if isinstance(a, Action):
            try:
                return self._index[a]
            except KeyError:
                raise KeyError(f"action {a.label} is not in this table's action set") from None
        if not 0 <= a < self.n_actions:
            raise IndexError(f"action index {a} outside [0, {self.n_actions})")
        return int(a)

    def __getitem__(self, key) -> float:
        s, a = key
        return float(self.values[self.state_index(s), self.action_index(a)])

    def __setitem__(self, key, value: float):
        s, a = key
        self.values[self.state_index(s), self.action_index(a)] = value

    def greedy_index(self, s: StateKey) -> int:
        return int(np.argmax(self.values[self.state_index(s)]))

    def greedy(self, s: StateKey) -> Action:
        return self.action_set[self.greedy_index(s)]

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy(), self.action_set, self.hp)

    def to_bytes(self) -> bytes:
        header = {
            "actions": [a.label for a in self.action_set],
            "hyperparams": asdict(self.hp),
            "n_actions": self.n_actions,
            "n_states": N_STATES,
        }
        if self.visits.max(initial=0) > np.iinfo(np.uint32).max:
            raise OverflowError("visit count does not fit the persisted uint32 field")
        return b"".join(
            [
                QTAB_MAGIC,
                json.dumps(header, sort_keys=True).encode() + b"\n",
                np.ascontiguousarray(self.values, dtype="<f8").tobytes(),
                np.ascontiguousarray(self.visits, dtype="<u4").tobytes(),
            ]
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "QTable":
        if not blob.startswith(QTAB_MAGIC):
            raise QTableFormatError("not a Q-table file (bad magic)")
        end = blob.find(b"\n", len(QTAB_MAGIC))
        if end < 0:
            raise QTableFormatError("truncated header")
        try:
            header = json.loads(blob[len(QTAB_MAGIC):end])
            actions = [Action.from_label(label) for label in header["actions"]]
            hp = Hyperparams(**header["hyperparams"])
            n_states, n_actions = int(header["n_states"]), int(header["n_actions"])
        except (ValueError, KeyError, TypeError) as exc:
            raise QTableFormatError(f"bad header: {exc}") from None
        if n_states != N_STATES or n_actions != len(actions):
            raise QTableFormatError("header shape does not match")
        count = n_states * n_actions
        body = blob[end + 1:]
        if len(body) != count * 12:
            raise QTableFormatError(f"expected {count * 12} payload bytes, found {len(body)}")
        values = np.frombuffer(body, dtype="<f8", count=count).reshape(n_states, n_actions)
        visits = np.frombuffer(body, dtype="<u4", count=count, offset=count * 8).reshape(n_states, n_actions)
        return cls(values.astype(np.float64), visits.astype(np.int64), actions, hp)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "QTable":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# learning


def select_index(q: QTable, s: StateKey, hp: Hyperparams, rng: np.random.Generator) -> tuple:
    """Epsilon-greedy choice as ``(action index, explored)``."""
    if hp.epsilon > 0.0 and rng.random() < hp.epsilon:
        return int(rng.integers(q.n_actions)), True
    return int(np.argmax(q.values[q.state_index(s)])), False


def select_action(q: QTable, s: StateKey, hp: Hyperparams, rng: np.random.Generator) -> tuple:
    """Epsilon-greedy choice; returns ``(action, explored)``."""
    i, explored = select_index(q, s, hp, rng)
    return q.action_set[i], explored


def update_q(q: QTable, s: StateKey, a: ActionKey, r: float, s_next: StateKey, hp: Hyperparams) -> None:
    si, ai = q.state_index(s), q.action_index(a)
    target = r + hp.discount * q.values[q.state_index(s_next)].max()
    q.values[si, ai] += hp.learning_rate * (target - q.values[si, ai])
    q.visits[si, ai] += 1


@dataclass
class RewardHistory:
    """Per-episode reward traces of one training run.

    Both arrays have shape ``(episodes, pairs)`` with one column per
    (scenario, NN) pair. ``collected`` holds the reward actually received,
    exploration included. ``greedy`` holds the reward the greedy policy would
    receive on the same request once the episode's updates are in; it is the
    trace convergence is judged on, since exploration keeps ``collected``
    noisy forever.
    """

    collected: np.ndarray
    greedy: np.ndarray
    pairs: list

    def __len__(self):
        return self.collected.shape[0]

    @property
    def samples(self) -> int:
        return int(self.collected.size)

    @property
    def rewards(self) -> np.ndarray:
        """Mean collected reward per episode."""
        return self.collected.mean(axis=1)

    @property
    def greedy_mean(self) -> np.ndarray:
        return self.greedy.mean(axis=1)


@dataclass(frozen=True)
class _Request:
    scenario: int
    nn: NnProfile
    step: int


class _RequestStream:
    """Yields one episode of requests at a time, one per (scenario, NN) pair."""

    def __init__(self, n_scenarios: int, nns: Sequence[NnProfile], arrival: str, rng: np.random.Generator):
        self.pairs = [(s, nn) for s in range(n_scenarios) for nn in nns]
        self.arrival = arrival
        self.rng = rng
        self.steps = [0] * n_scenarios
        self._slot = {(s, nn.name): i for i, (s, nn) in enumerate(self.pairs)}

    def slot(self, req: "_Request") -> int:
        return self._slot[(req.scenario, req.nn.name)]

    def next_episode(self) -> list:
        order = self.pairs
        if self.arrival == "random":
            order = [self.pairs[i] for i in self.rng.permutation(len(self.pairs))]
        out = []
        for s, nn in order:
            out.append(_Request(s, nn, self.steps[s]))
            self.steps[s] += 1
        return out


def _resolve_scenarios(scenario) -> list:
    if isinstance(scenario, ScenarioSpec):
        return [scenario]
    scenarios = list(scenario)
    if not scenarios:
        raise ValueError("need at least one scenario")
    return scenarios


def train(
    world: WorldConfig,
    scenario: Union[ScenarioSpec, Sequence[ScenarioSpec]],
    nns: Optional[Sequence[NnProfile]] = None,
    episodes: int = 100,
    hp: Hyperparams = DEFAULT_HP,
    rng: Optional[np.random.Generator] = None,
    *,
    init: Optional[QTable] = None,
    arrival: str = "round_robin",
    scenario_seed: Optional[int] = None,
    simulator: Optional[Simulator] = None,
) -> tuple:
    """Run Q-learning for ``episodes`` episodes and return ``(QTable, RewardHistory)``.

    One episode issues one inference for every (scenario, NN) pair, so
    ``episodes`` is also the number of samples per pair. Each scenario keeps
    its own step counter. The next state S' is the state of the next request
    in arrival order; with ``arrival="fixed"`` it keeps the current NN.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if arrival not in ARRIVAL_MODELS:
        raise ValueError(f"arrival must be one of {ARRIVAL_MODELS}")
    rng = rng if rng is not None else np.random.default_rng(world.seed)
    scenarios = _resolve_scenarios(scenario)
    nns = list(nns) if nns is not None else list(world.nns)
    if not nns:
        raise ValueError("need at least one NN")
    sim = simulator if simulator is not None else Simulator(world)
    if init is not None:
        if tuple(init.action_set) != tuple(sim.actions):
            raise ValueError("initial Q-table was built for a different action set")
        q = init.copy()
    else:
        q = QTable.random(sim.actions, rng, hp)
    if scenario_seed is None:
        scenario_seed = int(rng.integers(2**63))

    cache: dict = {}

    def describe(req: _Request) -> tuple:
        """(state index, reward per action) of one request."""
        sc = scenarios[req.scenario]
        snap = step_scenario(sc, req.step, scenario_seed)
        key = (req.nn.name, snap)
        out = cache.get(key)
        if out is None:
            out = (observe_state(req.nn, snap).index, reward_array(*sim.arrays(req.nn, snap), req.nn, hp))
            if not isinstance(sc.generator, GaussianRssi):  # continuous draws never repeat
                cache[key] = out
        return out

    stream = _RequestStream(len(scenarios), nns, arrival, rng)
    current = [(req, *describe(req)) for req in stream.next_episode()]
    collected = np.empty((episodes, len(stream.pairs)))
    greedy = np.empty((episodes, len(stream.pairs)))
    for ep in range(episodes):
        upcoming = [(req, *describe(req)) for req in stream.next_episode()] if ep + 1 < episodes else None
        for j, (req, s, r_all) in enumerate(current):
            ai, _ = select_index(q, s, hp, rng)
            r = float(r_all[ai])
            if arrival == "fixed":
                s_next = describe(_Request(req.scenario, req.nn, req.step + 1))[0]
            elif j + 1 < len(current):
                s_next = current[j + 1][1]
            elif upcoming is not None:
                s_next = upcoming[0][1]
            else:
                # last request of the run: S' is the next arrival in order
                first = current[0][0]
                s_next = describe(_Request(first.scenario, first.nn, stream.steps[first.scenario]))[0]
            update_q(q, s, ai, r, s_next, hp)
            collected[ep, stream.slot(req)] = r
        for req, s, r_all in current:
            greedy[ep, stream.slot(req)] = r_all[int(np.argmax(q.values[s]))]
        if upcoming is not None:
            current = upcoming
    history = RewardHistory(collected, greedy, [(scenarios[i].id, nn.name) for i, nn in stream.pairs])
    log.info("trained %d episodes, %d samples", episodes, history.samples)
    return q, history


# ---------------------------------------------------------------------------
# convergence and transfer


def detect_convergence(history, window: int = 10, tol: float = 0.05) -> Optional[int]:
    """Earliest episode after which the rolling mean reward stays put.

    The rolling mean at episode ``e`` averages episodes ``e - window`` to
    ``e`` inclusive, so it is first defined at ``e = window``. Episode ``e``
    is the convergence point when every later rolling mean stays within
    ``tol * scale`` of it and at least ``window`` later episodes exist to
    confirm this. ``scale`` is the largest rolling-mean magnitude of the
    series, which equals ``|mean(e)|`` for a flat series and stays well
    conditioned when the rewards cross zero. Returns ``None`` when no such
    episode exists.

    ``history`` is a plain sequence of per-episode rewards or a
    :class:`RewardHistory`, in which case its mean greedy reward per
    episode is used.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    if isinstance(history, RewardHistory):
        history = history.greedy_mean
    h = np.asarray(history, dtype=float)
    n = len(h)
    if n < 2 * window + 1:
        return None
    csum = np.concatenate(([0.0], np.cumsum(h)))
    means = (csum[window + 1:] - csum[:-window - 1]) / (window + 1)  # means[i] is episode i + window
    suf_max = np.maximum.accumulate(means[::-1])[::-1]
    suf_min = np.minimum.accumulate(means[::-1])[::-1]
    scale = np.abs(means).max()
    for i in range(len(means) - window):  # leave `window` confirming episodes after e
        m = means[i]
        spread = max(suf_max[i + 1] - m, m - suf_min[i + 1])
        if spread <= tol * scale:
            return i + window
    return None


def _vf_positions(actions: Sequence[Action]) -> dict:
    """(processor, precision) -> number of V/F steps present in ``actions``."""
    counts: dict = {}
    for a in actions:
        if not a.is_remote:
            key = (a.processor, a.precision)
            counts[key] = max(counts.get(key, 0), a.vf_index + 1)
    return counts


def _relative_position(i: int, n: int) -> float:
    return i / (n - 1) if n > 1 else 0.0


def transfer_init(
    source: QTable, target_actions: Sequence[Action], rng: Optional[np.random.Generator] = None
) -> QTable:
    """Initial Q-table for a new action set, seeded from a trained ``source``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    target_actions = list(target_actions)
    q = QTable.random(target_actions, rng, source.hp)
    src_steps = _vf_positions(source.action_set)
    tgt_steps = _vf_positions(target_actions)
    copied = 0
    for i, a in enumerate(target_actions):
        j = match_action(a, source.action_set, src_steps, tgt_steps)
        if j is not None:
            q.values[:, i] = source.values[:, j]
            copied += 1
    log.info("transfer: %d of %d actions seeded from source", copied, len(target_actions))
    return q


def match_action(a: Action, source_actions: Sequence[Action], src_steps: dict, tgt_steps: dict) -> Optional[int]:
    """Index of the source action corresponding to target action ``a``, if any.

    Remote actions match on platform. Local actions match on processor kind
    and precision, then on the nearest relative V/F position; ties go to the
    slower step. ``src_steps``/``tgt_steps`` map (processor, precision) to
    the number of V/F steps on each side.
    """
    if a.is_remote:
        return next((j for j, b in enumerate(source_actions) if b.platform == a.platform), None)
    key = (a.processor, a.precision)
    if key not in src_steps:
        return None
    pos = _relative_position(a.vf_index, tgt_steps[key])
    n_src = src_steps[key]
    best, best_d = None, None
    for j, b in enumerate(source_actions):
        if b.is_remote or (b.processor, b.precision) != key:
            continue
        d = abs(_relative_position(b.vf_index, n_src) - pos)
        if best is None or d < best_d - 1e-12 or (abs(d - best_d) <= 1e-12 and b.vf_index < source_actions[best].vf_index):
            best, best_d = j, d
    return best
