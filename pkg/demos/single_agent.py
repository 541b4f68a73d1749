"""One volunteer, one victim: watch ResQ learn the shortest path.

Trains the heuristic learner on a 5x5 grid from random start cells, then
walks the greedy policy from every cell and compares the path length with
the Manhattan distance and with value iteration.

    python demos/single_agent.py
"""

from dataclasses import replace

import numpy as np

from resq.grid import GridConfig, apply_joint_action, is_terminal, manhattan, new_world
from resq.learner import RESQ, GreedyLearnedPolicy, train
from resq.policies import ValueIterationAgent, value_iteration_solve

grid = GridConfig(rows=5, cols=5)
victim = (2, 3)
starts = [divmod(k, 5) for k in range(25) if divmod(k, 5) != victim]


def random_start(rng):
    return new_world(grid, [starts[int(rng.integers(len(starts)))]], [victim])


def path_length(policy, start):
    world = new_world(grid, [start], [victim])
    steps = 0
    while not is_terminal(world, grid):
        world = apply_joint_action(world, policy(world), grid).next
        steps += 1
    return steps


learner = replace(RESQ, epsilon_end=0.0)
qtable, curve = train(random_start, grid, learner, 500, np.random.default_rng(0))
print(f"trained 500 episodes, {len(qtable)} table rows; last 5 episode lengths: {[s for _, s in curve[-5:]]}")

resq = GreedyLearnedPolicy(qtable, learner, grid)
print("\nsteps to the victim at", victim, "(ResQ / value iteration / Manhattan):")
for r in range(5):
    row = []
    for c in range(5):
        if (r, c) == victim:
            row.append("   V   ")
            continue
        row.append(f"{path_length(resq, (r, c))}/{path_length(ValueIterationAgent(grid), (r, c))}/{manhattan((r, c), victim)}".center(7))
    print(" ".join(row))

table = value_iteration_solve(new_world(grid, [(0, 0)], [victim]), grid)
print(f"\nvalue-iteration table (converged in {table.sweeps} sweeps):")
print(np.array2string(table.values, precision=2, suppress_small=True))
