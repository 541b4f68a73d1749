"""Deterministic multi-agent grid world.

Volunteers (agents) move one cell per step; a waiting victim is rescued the
moment any agent ends a step on its cell. Moves that would leave the grid are
turned into penalised no-ops. States are immutable: stepping returns a new
:class:`WorldState`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .errors import ArityMismatch, EmptyPopulation, OutOfBounds, TerminalState


class Action(enum.IntEnum):
    """The four moves, in canonical order (also the tie-break order)."""

    Up = 0
    Down = 1
    Right = 2
    Left = 3


ACTIONS: tuple[Action, ...] = tuple(Action)

# (d_row, d_col); row 0 is the top (north) edge
DELTAS: tuple[tuple[int, int], ...] = ((-1, 0), (1, 0), (0, 1), (0, -1))

WAITING = "waiting"
RESCUED = "rescued"


class Cell(NamedTuple):
    row: int
    col: int


class Agent(NamedTuple):
    id: int | str
    cell: Cell


class Victim(NamedTuple):
    id: int | str
    cell: Cell
    status: str = WAITING


@dataclass(frozen=True)
class GridConfig:
    rows: int = 25
    cols: int = 25
    step_cap: int = 500
    rescue_reward: float = 10.0
    offgrid_penalty: float = -1.0
    step_cost: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if not self.rescue_reward > 0:
            raise ValueError("rescue_reward must be positive")
        if self.offgrid_penalty > 0:
            raise ValueError("offgrid_penalty must be <= 0")
        if self.step_cost > 0:
            raise ValueError("step_cost must be <= 0")

    def contains(self, cell) -> bool:
        return 0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols


@dataclass(frozen=True)
class WorldState:
    t: int
    agents: tuple[Agent, ...]
    victims: tuple[Victim, ...]

    def __post_init__(self):
        if len({a.id for a in self.agents}) != len(self.agents):
            raise ValueError("agent ids must be unique")
        if len({v.id for v in self.victims}) != len(self.victims):
            raise ValueError("victim ids must be unique")

    @property
    def agent_cells(self) -> tuple[Cell, ...]:
        return tuple(a.cell for a in self.agents)

    @property
    def waiting(self) -> tuple[Victim, ...]:
        return tuple(v for v in self.victims if v.status == WAITING)

    @property
    def n_waiting(self) -> int:
        return sum(1 for v in self.victims if v.status == WAITING)

    def digest(self) -> tuple:
        """Hashable summary: agent cells plus waiting victims (time excluded)."""
        return (self.agent_cells, tuple((v.id, v.cell) for v in self.waiting))


@dataclass(frozen=True)
class StepOutcome:
    next: WorldState
    team_reward: float
    rescued_ids: tuple = field(default_factory=tuple)
    offgrid_agents: tuple = field(default_factory=tuple)
    # per-agent split of team_reward: own step cost and off-grid penalty, plus
    # an equal share of each rescue made on the agent's cell
    agent_rewards: tuple = field(default_factory=tuple)


def _check_cell(config: GridConfig, cell) -> Cell:
    cell = Cell(int(cell[0]), int(cell[1]))
    if not config.contains(cell):
        raise OutOfBounds(cell)
    return cell


def new_world(config: GridConfig, agent_cells: Sequence, victim_cells: Sequence) -> WorldState:
    """Build the t=0 state; ids are list positions. Co-location is allowed."""
    if not agent_cells or not victim_cells:
        raise EmptyPopulation("need at least one agent and one victim")
    agents = tuple(Agent(i, _check_cell(config, c)) for i, c in enumerate(agent_cells))
    victims = tuple(Victim(j, _check_cell(config, c)) for j, c in enumerate(victim_cells))
    return WorldState(0, agents, victims)


def move(cell: Cell, action: Action, config: GridConfig) -> tuple[Cell, bool]:
    """Return ``(new_cell, went_offgrid)``; an off-grid move leaves the agent in place."""
    dr, dc = DELTAS[action]
    r, c = cell[0] + dr, cell[1] + dc
    if 0 <= r < config.rows and 0 <= c < config.cols:
        return Cell(r, c), False
    return cell, True


def apply_joint_action(world: WorldState, joint: Sequence[Action], config: GridConfig) -> StepOutcome:
    if len(joint) != len(world.agents):
        raise ArityMismatch(f"{len(joint)} actions for {len(world.agents)} agents")
    if not any(v.status == WAITING for v in world.victims):
        raise TerminalState("no waiting victims remain")

    agents = []
    offgrid = []
    for agent, action in zip(world.agents, joint):
        cell, off = move(agent.cell, action, config)
        if off:
            offgrid.append(agent.id)
        agents.append(Agent(agent.id, cell))

    occupied = {a.cell for a in agents}
    rescued = [v for v in world.victims if v.status == WAITING and v.cell in occupied]
    off = set(offgrid)
    shares = [config.step_cost + (config.offgrid_penalty if a.id in off else 0.0) for a in agents]
    if rescued:
        hit = {v.id for v in rescued}
        victims = tuple(Victim(v.id, v.cell, RESCUED) if v.id in hit else v for v in world.victims)
        for v in rescued:
            finders = [k for k, a in enumerate(agents) if a.cell == v.cell]
            for k in finders:
                shares[k] += config.rescue_reward / len(finders)
        rescued = [v.id for v in rescued]
    else:
        # nothing changed, share the immutable tuple
        victims = world.victims

    reward = (
        config.rescue_reward * len(rescued)
        + config.offgrid_penalty * len(offgrid)
        + config.step_cost * len(agents)
    )
    nxt = WorldState(world.t + 1, tuple(agents), victims)
    return StepOutcome(nxt, reward, tuple(rescued), tuple(offgrid), tuple(shares))


def is_terminal(world: WorldState, config: GridConfig) -> bool:
    return world.t >= config.step_cap or not any(v.status == WAITING for v in world.victims)


def manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
