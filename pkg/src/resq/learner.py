"""Heuristic multi-agent tabular Q-learning (ResQ) and its plain Q-learning ablation.

Two table layouts are supported:

``factorized``
    one table per agent keyed by ``(own cell, matched-victim cell)``, where the
    matched victim comes from :func:`greedy_match` on the current world. Each
    agent learns from its own share of the team reward (``reward="agent"``);
    ``reward="team"`` hands every agent the full team reward instead. This is
    the scalable default.
``joint``
    one table per agent over ``(global state, joint action)``. Exponential in
    the number of agents, so it is restricted to toy instances.

Action selection is epsilon-greedy. On the greedy branch each agent, in id
order, keeps every action whose Q-value is within ``tie_tol`` of its best and
picks the one whose hypothetical move leaves the smallest team heuristic
distance (moves of earlier agents already applied). Ties keep the *last* such
action in canonical order. With the heuristic off (plain Q-learning) only
exact ties are candidates and the last one wins.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import NoVictims, StateMismatch
from .grid import ACTIONS, WAITING, Action, Cell, GridConfig, StepOutcome, WorldState, apply_joint_action, is_terminal, move

FACTORIZED = "factorized"
JOINT = "joint"

# size limits for the joint table
JOINT_MAX_AGENTS = 3
JOINT_MAX_SIDE = 6


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int | None = None  # None: first 10% of the run
    tie_tol: float = 0.1  # only used with the heuristic
    mode: str = FACTORIZED
    heuristic_enabled: bool = True
    reward: str = "agent"  # "agent": own share r_t^i; "team": shared team reward

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not (0 <= self.epsilon_end <= self.epsilon_start <= 1):
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay_episodes is not None and self.epsilon_decay_episodes < 0:
            raise ValueError("epsilon_decay_episodes must be >= 0")
        if self.tie_tol < 0:
            raise ValueError("tie_tol must be >= 0")
        if self.mode not in (FACTORIZED, JOINT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.reward not in ("agent", "team"):
            raise ValueError(f"unknown reward signal {self.reward!r}")

    def epsilon(self, episode: int, episodes: int) -> float:
        """Linear decay from epsilon_start to epsilon_end, then flat."""
        span = self.epsilon_decay_episodes
        if span is None:
            span = max(1, episodes // 10)
        if span == 0 or episode >= span:
            return self.epsilon_end
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * episode / span


RESQ = LearnerConfig()
PLAIN_Q = LearnerConfig(heuristic_enabled=False)


# --- heuristic distance -------------------------------------------------------


class Matching(NamedTuple):
    pairs: tuple  # (agent index, victim index, distance), one per agent
    total_distance: int
    # cost of the one-to-one part found by the scan (leftover agents excluded)
    assigned_distance: int

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(v for _, v, _ in self.pairs)


def _distances(agent_cells, victim_cells) -> np.ndarray:
    a = np.asarray(agent_cells, dtype=np.int64).reshape(-1, 2)
    v = np.asarray(victim_cells, dtype=np.int64).reshape(-1, 2)
    return np.abs(a[:, None, 0] - v[None, :, 0]) + np.abs(a[:, None, 1] - v[None, :, 1])


def greedy_match(agent_cells: Sequence, victim_cells: Sequence) -> Matching:
    """Pair agents with victims by scanning all distances in ascending order.

    Equal distances are taken lower agent first, then lower victim. A pair is
    kept when both members are still free. Agents left over once every victim
    is taken share their nearest victim.
    """
    n_v = len(victim_cells)
    if n_v == 0:
        raise NoVictims("greedy matching needs at least one victim")
    n_a = len(agent_cells)
    if n_a == 0:
        return Matching((), 0, 0)
    d = _distances(agent_cells, victim_cells)
    flat = d.ravel()
    # stable sort of the row-major layout gives the (agent, victim) tie order
    order = np.argsort(flat, kind="stable").tolist()
    flat = flat.tolist()

    target = [-1] * n_a
    taken = [False] * n_v
    need = min(n_a, n_v)
    assigned = 0
    assigned_distance = 0
    for idx in order:
        a, v = divmod(idx, n_v)
        if target[a] < 0 and not taken[v]:
            target[a] = v
            taken[v] = True
            assigned_distance += flat[idx]
            assigned += 1
            if assigned == need:
                break
    total = assigned_distance
    if n_a > n_v:
        for a in range(n_a):
            if target[a] < 0:
                v = int(np.argmin(d[a]))
                target[a] = v
                total += flat[a * n_v + v]
    pairs = tuple((a, target[a], flat[a * n_v + target[a]]) for a in range(n_a))
    return Matching(pairs, int(total), int(assigned_distance))


def _waiting_cells(world: WorldState) -> list[Cell]:
    return [v.cell for v in world.victims if v.status == WAITING]


def heuristic_distance(world: WorldState) -> int:
    waiting = _waiting_cells(world)
    if not waiting:
        return 0
    return greedy_match(world.agent_cells, waiting).total_distance


@lru_cache(maxsize=16)
def local_keys(world: WorldState) -> tuple:
    """Per-agent factorized key ``(own cell, matched-victim cell)``; empty when terminal."""
    waiting = _waiting_cells(world)
    if not waiting:
        return ()
    cells = world.agent_cells
    match = greedy_match(cells, waiting)
    return tuple((cells[a], waiting[v]) for a, v, _ in match.pairs)


def state_key(world: WorldState) -> tuple:
    return world.digest()


# --- the table ----------------------------------------------------------------


class QTable:
    """Tabular action values; entries never written read as ``init`` (1)."""

    def __init__(self, mode: str, n_agents: int, init: float = 1.0):
        if mode not in (FACTORIZED, JOINT):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == JOINT and n_agents > JOINT_MAX_AGENTS:
            raise ValueError(f"joint tables support at most {JOINT_MAX_AGENTS} agents")
        self.mode = mode
        self.n_agents = n_agents
        self.init = float(init)
        self.width = len(ACTIONS) if mode == FACTORIZED else len(ACTIONS) ** n_agents
        self.tables: list[dict] = [{} for _ in range(n_agents)]
        self._fresh = (self.init,) * self.width

    def values(self, agent: int, key) -> Sequence[float]:
        """Action values at ``key`` without creating an entry."""
        return self.tables[agent].get(key, self._fresh)

    def row(self, agent: int, key) -> list[float]:
        table = self.tables[agent]
        row = table.get(key)
        if row is None:
            row = table[key] = [self.init] * self.width
        return row

    def get(self, agent: int, key, action: int) -> float:
        return self.values(agent, key)[action]

    def set(self, agent: int, key, action: int, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("Q-values must stay finite")
        self.row(agent, key)[action] = float(value)

    def __len__(self) -> int:
        return sum(len(t) for t in self.tables)

    def all_finite(self) -> bool:
        return all(math.isfinite(x) for t in self.tables for row in t.values() for x in row)

    # serialization (factorized only): "(r,c)|(rv,cv)|Action" -> value, per agent
    def to_json(self) -> str:
        if self.mode != FACTORIZED:
            raise ValueError("only factorized tables are serializable")
        agents = []
        for table in self.tables:
            entries = {}
            for (cell, victim), row in sorted(table.items()):
                for a in ACTIONS:
                    entries[f"({cell[0]},{cell[1]})|({victim[0]},{victim[1]})|{a.name}"] = row[a]
            agents.append(entries)
        return json.dumps({"mode": self.mode, "init": self.init, "agents": agents}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "QTable":
        doc = json.loads(text)
        if doc.get("mode") != FACTORIZED:
            raise ValueError("only factorized tables are serializable")
        table = cls(FACTORIZED, len(doc["agents"]), doc.get("init", 1.0))
        for i, entries in enumerate(doc["agents"]):
            for text_key, value in entries.items():
                m = _KEY.fullmatch(text_key)
                if m is None:
                    raise ValueError(f"bad table key {text_key!r}")
                r, c, rv, cv = (int(g) for g in m.groups()[:4])
                table.set(i, (Cell(r, c), Cell(rv, cv)), Action[m.group(5)], value)
        return table


_KEY = re.compile(r"\((-?\d+),(-?\d+)\)\|\((-?\d+),(-?\d+)\)\|(Up|Down|Right|Left)")


# --- action selection -----------------------------------------------------------


def _pick(candidates: list[Action], i: int, cells: list, waiting: list, grid: GridConfig, heuristic: bool) -> Action:
    if len(candidates) == 1 or not heuristic:
        return candidates[-1]
    best = math.inf
    found = candidates[-1]
    here = cells[i]
    for a in candidates:
        cells[i] = move(here, a, grid)[0]
        d = greedy_match(cells, waiting).total_distance
        if d <= best:
            best, found = d, a
    cells[i] = here
    return found


def _candidates(q: Sequence[float], tie_tol: float) -> list[Action]:
    top = max(q)
    return [a for a in ACTIONS if q[a] >= top - tie_tol]


def _joint_index(joint: Sequence[int]) -> int:
    idx = 0
    for a in joint:
        idx = idx * len(ACTIONS) + int(a)
    return idx


def heuristic_action_selection(
    world: WorldState,
    qtable: QTable,
    config: LearnerConfig,
    grid: GridConfig,
    rng: np.random.Generator | None = None,
    epsilon: float = 0.0,
) -> tuple[Action, ...]:
    if qtable.mode != config.mode:
        raise ValueError(f"table mode {qtable.mode!r} does not match config mode {config.mode!r}")
    n = len(world.agents)
    if epsilon > 0 and rng.random() < epsilon:
        return tuple(ACTIONS[k] for k in rng.integers(0, len(ACTIONS), size=n))

    waiting = _waiting_cells(world)
    cells = list(world.agent_cells)
    if not waiting:
        return (Action.Up,) * n
    joint: list[Action] = []
    # the tolerance only widens what the heuristic gets to score
    tol = config.tie_tol if config.heuristic_enabled else 0.0
    if config.mode == FACTORIZED:
        keys = local_keys(world)
        for i in range(n):
            cands = _candidates(qtable.values(i, keys[i]), tol)
            choice = _pick(cands, i, cells, waiting, grid, config.heuristic_enabled)
            cells[i] = move(cells[i], choice, grid)[0]
            joint.append(choice)
    else:
        s = state_key(world)
        shape = (len(ACTIONS),) * n
        for i in range(n):
            q = np.asarray(qtable.values(i, s)).reshape(shape)[tuple(joint)]
            per_action = q.reshape(len(ACTIONS), -1).max(axis=1).tolist()
            cands = _candidates(per_action, tol)
            choice = _pick(cands, i, cells, waiting, grid, config.heuristic_enabled)
            cells[i] = move(cells[i], choice, grid)[0]
            joint.append(choice)
    return tuple(joint)


# --- learning ---------------------------------------------------------------------


def _check_outcome(pre: WorldState, joint: Sequence[Action], outcome: StepOutcome, grid: GridConfig) -> None:
    nxt = outcome.next
    if nxt.t != pre.t + 1 or len(nxt.agents) != len(pre.agents) or len(joint) != len(pre.agents):
        raise StateMismatch("outcome does not follow from the given state")
    for before, after, a in zip(pre.agents, nxt.agents, joint):
        if before.id != after.id or move(before.cell, a, grid)[0] != after.cell:
            raise StateMismatch(f"agent {before.id} did not move as {Action(a).name}")


def q_update(
    qtable: QTable,
    pre_world: WorldState,
    joint: Sequence[Action],
    outcome: StepOutcome,
    config: LearnerConfig,
    grid: GridConfig,
) -> QTable:
    """One temporal-difference backup per agent (in place).

    Each agent learns from its own reward share unless ``config.reward`` is
    ``"team"``, in which case every agent sees the team reward.
    """
    _check_outcome(pre_world, joint, outcome, grid)
    if config.reward == "team" or not outcome.agent_rewards:
        rewards = (outcome.team_reward,) * len(joint)
    else:
        rewards = outcome.agent_rewards
    nxt = outcome.next
    terminal = not any(v.status == WAITING for v in nxt.victims)
    alpha, gamma = config.alpha, config.gamma

    if qtable.mode == FACTORIZED:
        keys = local_keys(pre_world)
        next_keys = () if terminal else local_keys(nxt)
        for i, a in enumerate(joint):
            row = qtable.row(i, keys[i])
            future = 0.0 if terminal else max(qtable.values(i, next_keys[i]))
            row[a] += alpha * (rewards[i] + gamma * future - row[a])
        return qtable

    s = state_key(pre_world)
    idx = _joint_index(joint)
    if terminal:
        future = 0.0
    else:
        # cooperative greedy joint action at the next state
        best = heuristic_action_selection(nxt, qtable, config, grid)
        s2, idx2 = state_key(nxt), _joint_index(best)
        future = sum(qtable.values(j, s2)[idx2] for j in range(qtable.n_agents))
    for i in range(qtable.n_agents):
        row = qtable.row(i, s)
        row[idx] = (1 - alpha) * row[idx] + alpha * (rewards[i] + gamma * future)
    return qtable


WorldFactory = Callable[[np.random.Generator], WorldState]


def train(
    factory: WorldFactory | WorldState,
    grid: GridConfig,
    config: LearnerConfig,
    episodes: int,
    rng: np.random.Generator,
    qtable: QTable | None = None,
) -> tuple[QTable, list[tuple[float, int]]]:
    """Run ``episodes`` learning episodes; returns the table and (reward, steps) per episode.

    ``factory`` is either a fixed start state or a callable drawing one from ``rng``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    make = factory if callable(factory) else (lambda _rng: factory)
    curve: list[tuple[float, int]] = []
    for e in range(episodes):
        world = make(rng)
        if qtable is None:
            if config.mode == JOINT and max(grid.rows, grid.cols) > JOINT_MAX_SIDE:
                raise ValueError(f"joint tables support grids up to {JOINT_MAX_SIDE}x{JOINT_MAX_SIDE}")
            qtable = QTable(config.mode, len(world.agents))
        eps = config.epsilon(e, episodes)
        total = 0.0
        while not is_terminal(world, grid):
            joint = heuristic_action_selection(world, qtable, config, grid, rng, eps)
            out = apply_joint_action(world, joint, grid)
            q_update(qtable, world, joint, out, config, grid)
            total += out.team_reward
            world = out.next
        curve.append((total, world.t))
    return qtable, curve


class GreedyLearnedPolicy:
    """Frozen table played with epsilon = 0."""

    deterministic = True

    def __init__(self, qtable: QTable, config: LearnerConfig, grid: GridConfig):
        self.qtable = qtable
        self.config = config
        self.grid = grid

    def __call__(self, world: WorldState, rng=None) -> tuple[Action, ...]:
        return heuristic_action_selection(world, self.qtable, self.config, self.grid)
