"""From geocoded reports to a policy comparison.

Builds a small scenario in the Houston bounding box, maps it onto the 25x25
grid, applies a second hourly snapshot and compares a few policies on the
first snapshot.

    python demos/houston_snapshot.py
"""

import json
import tempfile
from pathlib import Path

from resq.assignment import assign_world
from resq.geo import apply_snapshot, parse_scenario, scenario_to_dict, snapshot_to_world
from resq.grid import GridConfig
from resq.harness import ExperimentConfig, run_experiment
from resq.learner import greedy_match

CSV = """timestamp,role,id,lat,lon
2017-08-28T00:00:00Z,volunteer,boat-1,29.7604,-95.3698
2017-08-28T00:00:00Z,volunteer,boat-2,29.95,-95.60
2017-08-28T00:00:00Z,volunteer,truck-1,29.55,-95.20
2017-08-28T00:00:00Z,victim,r-101,29.80,-95.40
2017-08-28T00:00:00Z,victim,r-102,29.65,-95.25
2017-08-28T00:00:00Z,victim,r-103,30.05,-95.70
2017-08-28T00:00:00Z,victim,r-104,29.48,-95.15
2017-08-28T00:00:00Z,victim,r-105,29.90,-95.30
2017-08-28T01:00:00Z,victim,r-106,29.70,-95.80
2017-08-28T01:00:00Z,volunteer,boat-2,29.90,-95.50
"""

grid = GridConfig()
scenario = parse_scenario(CSV)
first = snapshot_to_world(scenario.snapshots[0], scenario.bounds, grid)
print("hour 0 on the grid:")
for a in first.agents:
    print(f"  volunteer {a.id:8s} -> cell {tuple(a.cell)}")
for v in first.victims:
    print(f"  victim    {v.id:8s} -> cell {tuple(v.cell)}")

later = apply_snapshot(first, scenario.snapshots[1], scenario.bounds, grid)
print(f"\nafter the 01:00 update: {len(later.agents)} volunteers, {later.n_waiting} waiting victims;"
      f" boat-2 moved to {tuple(later.agents[1].cell)}")

# one round of exact assignment vs the greedy matching the learner uses
waiting = [v.cell for v in first.waiting]
exact = assign_world(first)
greedy = greedy_match(first.agent_cells, waiting)
print(f"\nexact first-round assignment cost {exact.total_cost:g}, greedy matching {greedy.assigned_distance}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "scenario.json"
    path.write_text(json.dumps(scenario_to_dict(scenario)))
    cfg = ExperimentConfig(scenario=str(path), policies=("resq", "rl", "greedy", "vi", "random"),
                           train_episodes=300, eval_episodes=200)
    print("\npolicy comparison on the 00:00 snapshot:")
    for s in sorted(run_experiment(cfg), key=lambda s: -s.reward_rate):
        print(f"  {s.policy:7s} reward rate {s.reward_rate:7.3f}   avg steps {s.avg_time:6.1f}")
