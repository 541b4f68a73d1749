"""Exact volunteer-victim assignment.

Cost matrices are oriented rows = victims, columns = volunteers, so
``c[i, j]`` is the distance between victim ``i`` and volunteer ``j``. Each
volunteer serves at most one victim per round; the smaller side is matched
completely into the larger one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyPopulation, TooLarge
from .grid import WorldState, manhattan

BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]  # (volunteer, victim), sorted
    total_cost: float


def _as_costs(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if c.size and (not np.all(np.isfinite(c)) or np.any(c < 0)):
        raise ValueError("costs must be finite and nonnegative")
    return c


def _total(c: np.ndarray, pairs) -> float:
    # fsum is exactly rounded, so equal pair sets give bit-equal totals
    return math.fsum(c[vic, vol] for vol, vic in pairs)


def cost_matrix(world: WorldState) -> np.ndarray:
    victims = world.waiting
    if not world.agents or not victims:
        raise EmptyPopulation("need at least one agent and one waiting victim")
    return np.array([[manhattan(v.cell, a.cell) for a in world.agents] for v in victims], dtype=float)


def brute_force_assign(c) -> Assignment:
    c = _as_costs(c)
    n, m = c.shape
    if max(n, m) > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force is limited to {BRUTE_FORCE_LIMIT} per side, got {c.shape}")
    if n == 0 or m == 0:
        return Assignment((), 0.0)

    if n <= m:
        # victim i -> volunteer perm[i]
        perms = np.array(list(itertools.permutations(range(m), n)), dtype=np.intp)
        costs = c[np.arange(n), perms].sum(axis=1)
        as_pairs = lambda p: tuple(sorted((int(vol), i) for i, vol in enumerate(p)))
    else:
        # volunteer j -> victim perm[j]
        perms = np.array(list(itertools.permutations(range(n), m)), dtype=np.intp)
        costs = c[perms, np.arange(m)].sum(axis=1)
        as_pairs = lambda p: tuple((j, int(vic)) for j, vic in enumerate(p))

    # screen in floating point, then settle near-ties exactly
    best = costs.min()
    slack = 1e-9 * max(1.0, abs(best))
    candidates = [as_pairs(perms[k]) for k in np.flatnonzero(costs <= best + slack)]
    scored = sorted((_total(c, pairs), pairs) for pairs in candidates)
    total, pairs = scored[0]
    return Assignment(pairs, total)


def hungarian_assign(c) -> Assignment:
    """Optimal min-cost matching of the smaller side into the larger one."""
    c = _as_costs(c)
    if c.size == 0:
        return Assignment((), 0.0)
    rows, cols = linear_sum_assignment(c)
    pairs = tuple(sorted((int(vol), int(vic)) for vic, vol in zip(rows, cols)))
    return Assignment(pairs, _total(c, pairs))


def assign_world(world: WorldState) -> Assignment:
    return hungarian_assign(cost_matrix(world))
