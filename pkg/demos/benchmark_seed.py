"""One seed of the synthetic benchmark, with learning-curve summaries.

25x25 grid, 5 volunteers, 19 victims. Trains both learners for 1000
episodes and evaluates every policy. Takes under a minute on one core.

    python demos/benchmark_seed.py [seed]
"""

import sys

from resq.harness import ExperimentConfig, convergence_episode, moving_average, run_experiment

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = ExperimentConfig(placement_seed=seed, seed=seed)
summaries = run_experiment(cfg)

print(f"seed {seed}: {cfg.agents} volunteers, {cfg.victims} victims on {cfg.grid.rows}x{cfg.grid.cols}\n")
print(f"{'policy':8s} {'reward rate':>11s} {'cost':>8s} {'avg steps':>10s}")
for s in sorted(summaries, key=lambda s: -s.reward_rate):
    cost = f"{s.rescuing_cost:.4f}" if s.rescuing_cost is not None else "-"
    print(f"{s.policy:8s} {s.reward_rate:11.3f} {cost:>8s} {s.avg_time:10.1f}")

print("\nlearning curves (100-episode moving average of episode reward):")
for s in summaries:
    if not s.learning_curve:
        continue
    ma = moving_average([r for r, _ in s.learning_curve], 100)
    marks = ", ".join(f"ep {k}: {ma[k - 1]:.1f}" for k in (50, 100, 200, 500, 1000))
    print(f"  {s.policy:5s} {marks}; within 5% of final from episode {convergence_episode(s.learning_curve)}")
