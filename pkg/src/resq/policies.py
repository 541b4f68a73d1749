"""Baseline scheduling policies.

Every policy maps a :class:`~resq.grid.WorldState` to a joint action: one
:class:`~resq.grid.Action` per agent, in agent order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence, NoWaitingVictims, StaleTable
from .grid import (
    ACTIONS,
    DELTAS,
    WAITING,
    Action,
    GridConfig,
    WorldState,
    apply_joint_action,
    is_terminal,
    manhattan,
    move,
)

JointAction = tuple  # tuple[Action, ...], agent-id order


def random_walk(world: WorldState, rng: np.random.Generator) -> JointAction:
    draws = rng.integers(0, len(ACTIONS), size=len(world.agents))
    return tuple(ACTIONS[k] for k in draws)


def _step_toward(cell, target, config: GridConfig | None = None) -> Action:
    if target[0] < cell[0]:
        return Action.Up
    if target[0] > cell[0]:
        return Action.Down
    if target[1] > cell[1]:
        return Action.Right
    if target[1] < cell[1]:
        return Action.Left
    # already on the target: step off (first in-bounds move) and come back
    if config is not None:
        for a in ACTIONS:
            if not move(cell, a, config)[1]:
                return a
    return Action.Up


def nearest_victim(cell, world: WorldState):
    """Nearest waiting victim by manhattan distance; ties go to the earlier victim."""
    best = None
    best_d = None
    for v in world.victims:
        if v.status != WAITING:
            continue
        d = manhattan(cell, v.cell)
        if best_d is None or d < best_d:
            best, best_d = v, d
    if best is None:
        raise NoWaitingVictims("nothing left to rescue")
    return best


def greedy_best_first(world: WorldState, config: GridConfig | None = None) -> JointAction:
    """Every agent heads for its own nearest victim, closing the row gap first."""
    return tuple(_step_toward(a.cell, nearest_victim(a.cell, world).cell, config) for a in world.agents)


# --- rule-based search ------------------------------------------------------


@dataclass
class CellValueTable:
    """Running average of team reward observed in each cell."""

    sums: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, rows: int, cols: int) -> "CellValueTable":
        return cls(np.zeros((rows, cols)), np.zeros((rows, cols), dtype=np.int64))

    def record(self, cell, reward: float) -> None:
        self.sums[cell] += reward
        self.counts[cell] += 1

    @property
    def values(self) -> np.ndarray:
        out = np.zeros_like(self.sums)
        seen = self.counts > 0
        out[seen] = self.sums[seen] / self.counts[seen]
        return out

    def value(self, cell) -> float:
        n = self.counts[cell]
        return float(self.sums[cell] / n) if n else 0.0

    def to_json(self) -> str:
        return json.dumps({"values": self.values.tolist(), "counts": self.counts.tolist()})


def train_cell_values(config: GridConfig, world: WorldState, episodes: int, rng: np.random.Generator) -> CellValueTable:
    """Average per-cell team reward over random-walk episodes started from ``world``."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    table = CellValueTable.empty(config.rows, config.cols)
    for _ in range(episodes):
        state = world
        while not is_terminal(state, config):
            out = apply_joint_action(state, random_walk(state, rng), config)
            for cell in {a.cell for a in out.next.agents}:
                table.record(cell, out.team_reward)
            state = out.next
    return table


def action_scores(cell, table: CellValueTable, config: GridConfig) -> dict[Action, float]:
    """Score every in-bounds move as V(here) / (V(here) + V(there)).

    Moves whose denominator is zero are left out.
    """
    here = table.value(cell)
    scores = {}
    for a in ACTIONS:
        nxt, off = move(cell, a, config)
        if off:
            continue
        denom = here + table.value(nxt)
        if denom != 0:
            scores[a] = here / denom
    return scores


def rule_based(world: WorldState, table: CellValueTable, config: GridConfig) -> JointAction:
    joint = []
    for agent in world.agents:
        scores = action_scores(agent.cell, table, config)
        if scores:
            # max() keeps the first of equal scores, i.e. canonical order
            joint.append(max(scores, key=scores.__getitem__))
        else:
            joint.append(next((a for a in ACTIONS if not move(agent.cell, a, config)[1]), Action.Up))
    return tuple(joint)


# --- value iteration --------------------------------------------------------


def victim_key(world: WorldState) -> frozenset:
    return frozenset((v.id, v.cell) for v in world.victims if v.status == WAITING)


@dataclass
class ValueTable:
    values: np.ndarray  # victim cells hold rescue_reward
    victim_key: frozenset
    gamma: float
    sweeps: int = 0
    # values used for bootstrapping: victim cells are terminal (0)
    backup: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.backup is None:
            self.backup = self.values

    def to_json(self) -> str:
        return json.dumps({"values": self.values.tolist(), "gamma": self.gamma, "sweeps": self.sweeps})


def _transitions(config: GridConfig):
    """Per action: flat next-cell index and off-grid mask for every cell."""
    rows, cols = config.rows, config.cols
    r, c = np.divmod(np.arange(rows * cols), cols)
    out = []
    for dr, dc in DELTAS:
        nr, nc = r + dr, c + dc
        off = (nr < 0) | (nr >= rows) | (nc < 0) | (nc >= cols)
        nxt = np.where(off, r * cols + c, nr * cols + nc)
        out.append((nxt, off))
    return out


def _one_step_rewards(config: GridConfig, victims: np.ndarray, transitions) -> list[np.ndarray]:
    rewards = []
    for nxt, off in transitions:
        r = np.full(victims.shape, config.step_cost)
        r = r + np.where(off, config.offgrid_penalty, 0.0)
        r = r + np.where(~off & victims[nxt], config.rescue_reward, 0.0)
        rewards.append(r)
    return rewards


def value_iteration_solve(
    world: WorldState,
    config: GridConfig,
    gamma: float = 0.95,
    tol: float = 1e-6,
    max_sweeps: int = 10_000,
) -> ValueTable:
    """Solve V(s) = max_a [r(s, a) + gamma V(s')] for one agent over all cells.

    Waiting-victim cells are absorbing: entering one pays ``rescue_reward``
    and ends the (single-agent) episode.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    key = victim_key(world)
    if not key:
        raise NoWaitingVictims("value iteration needs at least one waiting victim")

    n = config.rows * config.cols
    victims = np.zeros(n, dtype=bool)
    for _, cell in key:
        victims[cell[0] * config.cols + cell[1]] = True
    transitions = _transitions(config)
    rewards = _one_step_rewards(config, victims, transitions)

    v = np.zeros(n)
    for sweep in range(1, max_sweeps + 1):
        q = np.stack([r + gamma * v[nxt] for r, (nxt, _) in zip(rewards, transitions)])
        new = np.where(victims, 0.0, q.max(axis=0))
        delta = np.abs(new - v).max()
        v = new
        if delta < tol:
            break
    else:
        raise NonConvergence(f"no convergence within {max_sweeps} sweeps (last change {delta:g})")

    shown = np.where(victims, config.rescue_reward, v).reshape(config.rows, config.cols)
    return ValueTable(shown, key, gamma, sweep, v.reshape(config.rows, config.cols))


def value_iteration_policy(world: WorldState, table: ValueTable, config: GridConfig) -> JointAction:
    """Follow the table uphill; each move is scored by its one-step backup."""
    if victim_key(world) != table.victim_key:
        raise StaleTable("waiting victims changed since the table was solved")
    waiting = {cell for _, cell in table.victim_key}
    joint = []
    for agent in world.agents:
        best, best_q = None, None
        for a in ACTIONS:
            nxt, off = move(agent.cell, a, config)
            if off:
                continue
            q = config.step_cost + (config.rescue_reward if nxt in waiting else 0.0) + table.gamma * table.backup[nxt]
            if best_q is None or q > best_q:
                best, best_q = a, q
        joint.append(best if best is not None else Action.Up)
    return tuple(joint)


class ValueIterationAgent:
    """Value-iteration controller that re-solves whenever a victim is rescued."""

    deterministic = True

    def __init__(self, config: GridConfig, gamma: float = 0.95, tol: float = 1e-6):
        self.config = config
        self.gamma = gamma
        self.tol = tol
        self.table: ValueTable | None = None

    def __call__(self, world: WorldState, rng=None) -> JointAction:
        if self.table is None or self.table.victim_key != victim_key(world):
            self.table = value_iteration_solve(world, self.config, self.gamma, self.tol)
        return value_iteration_policy(world, self.table, self.config)
