"""Episode execution, reward-rate metrics, experiment orchestration and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, EmptyRun, ZeroRate
from .geo import parse_scenario, snapshot_to_world
from .grid import GridConfig, WorldState, apply_joint_action, is_terminal, new_world
from .learner import GreedyLearnedPolicy, LearnerConfig, train
from .policies import ValueIterationAgent, greedy_best_first, random_walk, rule_based, train_cell_values

log = logging.getLogger(__name__)

POLICIES = ("resq", "rl", "greedy", "rule", "vi", "random")
LEARNERS = ("resq", "rl")
SUMMARY_FIELDS = ("policy", "episodes", "avg_time", "avg_reward", "reward_rate", "rescuing_cost")


@dataclass
class EpisodeRecord:
    steps: int
    total_reward: float
    rescued: int
    trajectory: list | None = None


@dataclass
class RunSummary:
    policy: str
    episodes: int
    avg_time: float
    avg_reward: float
    reward_rate: float
    rescuing_cost: float | None  # None when the reward rate is not positive
    learning_curve: list | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_FIELDS}


Policy = Callable[[WorldState, np.random.Generator], Sequence]


def run_episode(world0: WorldState, policy: Policy, config: GridConfig, rng: np.random.Generator, record_trajectory: bool = False) -> EpisodeRecord:
    """Play ``policy`` from ``world0`` until every victim is rescued or the step cap hits."""
    if is_terminal(world0, config):
        raise ValueError("start state is already terminal")
    world = world0
    total = 0.0
    rescued = 0
    trajectory = [] if record_trajectory else None
    while not is_terminal(world, config):
        joint = policy(world, rng)
        out = apply_joint_action(world, joint, config)
        if trajectory is not None:
            trajectory.append((world.digest(), tuple(joint), out.team_reward))
        total += out.team_reward
        rescued += len(out.rescued_ids)
        world = out.next
    return EpisodeRecord(world.t, total, rescued, trajectory)


def reward_rate(records: Sequence[EpisodeRecord]) -> float:
    """Total reward over total time steps (a ratio of sums, not a mean of ratios)."""
    if not records:
        raise EmptyRun("no episodes")
    steps = sum(r.steps for r in records)
    if steps <= 0:
        raise EmptyRun("episodes contain no time steps")
    return math.fsum(r.total_reward for r in records) / steps


def rescuing_cost(rate: float) -> float:
    if not rate > 0:
        raise ZeroRate(f"rescuing cost needs a positive reward rate, got {rate}")
    return 1.0 / rate


def summarize(policy: str, records: Sequence[EpisodeRecord], learning_curve=None) -> RunSummary:
    rate = reward_rate(records)
    n = len(records)
    return RunSummary(
        policy=policy,
        episodes=n,
        avg_time=sum(r.steps for r in records) / n,
        avg_reward=math.fsum(r.total_reward for r in records) / n,
        reward_rate=rate,
        rescuing_cost=rescuing_cost(rate) if rate > 0 else None,
        learning_curve=learning_curve,
    )


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    x = np.asarray(values, dtype=float)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def convergence_episode(curve: Sequence[tuple[float, int]], window: int = 100, tol: float = 0.05) -> int:
    """First episode (1-based) whose trailing ``window``-episode mean reward is
    within ``tol`` (relative) of the mean over the final ``window`` episodes."""
    if not curve:
        raise EmptyRun("empty learning curve")
    rewards = [r for r, _ in curve]
    final = float(np.mean(rewards[-window:]))
    ma = moving_average(rewards, window)
    close = np.abs(ma - final) <= tol * abs(final)
    return int(np.argmax(close)) + 1


# --- experiment configuration ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = GridConfig()
    scenario: str | None = None
    snapshot: int = 0
    agents: int = 5
    victims: int = 19
    placement_seed: int = 42
    policies: tuple[str, ...] = POLICIES
    train_episodes: int = 1000
    eval_episodes: int = 2000
    rule_episodes: int = 100
    seed: int = 7
    learner: LearnerConfig = LearnerConfig()
    vi_gamma: float = 0.95

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | os.PathLike | None = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("$", "config must be a JSON object")
        known = {"grid", "rewards", "scenario", "snapshot", "synthetic", "policies", "train_episodes",
                 "eval_episodes", "rule_episodes", "seed", "step_cap", "learner", "vi_gamma"}
        for key in doc:
            if key not in known:
                raise ConfigError(f"$.{key}", "unknown field")

        def section(name, allowed):
            value = doc.get(name) or {}
            if not isinstance(value, dict):
                raise ConfigError(f"$.{name}", "expected an object")
            for key in value:
                if key not in allowed:
                    raise ConfigError(f"$.{name}.{key}", "unknown field")
            return value

        def integer(path, value, low):
            if isinstance(value, bool) or not isinstance(value, int) or value < low:
                raise ConfigError(path, f"expected an integer >= {low}")
            return value

        def number(path, value):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(path, "expected a number")
            return float(value)

        grid_doc = section("grid", {"rows", "cols"})
        rewards = section("rewards", {"rescue_reward", "offgrid_penalty", "step_cost"})
        grid_kwargs = {k: integer(f"$.grid.{k}", v, 1) for k, v in grid_doc.items()}
        grid_kwargs.update({k: number(f"$.rewards.{k}", v) for k, v in rewards.items()})
        if "step_cap" in doc:
            grid_kwargs["step_cap"] = integer("$.step_cap", doc["step_cap"], 1)
        try:
            grid = GridConfig(**grid_kwargs)
        except ValueError as exc:
            raise ConfigError("$.grid", str(exc)) from None

        kwargs: dict = {"grid": grid}
        scenario = doc.get("scenario")
        if scenario is not None:
            if not isinstance(scenario, str):
                raise ConfigError("$.scenario", "expected a path or null")
            if base_dir is not None and not os.path.isabs(scenario):
                scenario = os.path.join(base_dir, scenario)
            kwargs["scenario"] = scenario
        if "snapshot" in doc:
            kwargs["snapshot"] = integer("$.snapshot", doc["snapshot"], 0)
        synthetic = section("synthetic", {"agents", "victims", "placement_seed"})
        for key, low in (("agents", 1), ("victims", 1), ("placement_seed", 0)):
            if key in synthetic:
                kwargs[key] = integer(f"$.synthetic.{key}", synthetic[key], low)
        if scenario is None and kwargs.get("agents", cls.agents) + kwargs.get("victims", cls.victims) > grid.rows * grid.cols:
            raise ConfigError("$.synthetic", "more entities than grid cells")

        if "policies" in doc:
            policies = doc["policies"]
            if not isinstance(policies, list) or not policies:
                raise ConfigError("$.policies", "expected a non-empty list")
            for i, name in enumerate(policies):
                if name not in POLICIES:
                    raise ConfigError(f"$.policies[{i}]", f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
            if len(set(policies)) != len(policies):
                raise ConfigError("$.policies", "duplicate policy")
            kwargs["policies"] = tuple(policies)
        for key in ("train_episodes", "eval_episodes", "rule_episodes"):
            if key in doc:
                kwargs[key] = integer(f"$.{key}", doc[key], 1)
        if "seed" in doc:
            kwargs["seed"] = integer("$.seed", doc["seed"], 0)
        if "vi_gamma" in doc:
            gamma = number("$.vi_gamma", doc["vi_gamma"])
            if not 0 <= gamma < 1:
                raise ConfigError("$.vi_gamma", "must lie in [0, 1)")
            kwargs["vi_gamma"] = gamma
        learner = section("learner", {"alpha", "gamma", "epsilon_start", "epsilon_end", "epsilon_decay_episodes", "tie_tol"})
        try:
            kwargs["learner"] = LearnerConfig(**learner)
        except (TypeError, ValueError) as exc:
            raise ConfigError("$.learner", str(exc)) from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def synthetic_world(grid: GridConfig, agents: int, victims: int, placement_seed: int) -> WorldState:
    """Agents and victims on distinct cells drawn uniformly without replacement."""
    rng = np.random.default_rng(placement_seed)
    flat = rng.choice(grid.rows * grid.cols, size=agents + victims, replace=False)
    cells = [divmod(int(k), grid.cols) for k in flat]
    return new_world(grid, cells[:agents], cells[agents:])


def start_world(cfg: ExperimentConfig) -> WorldState:
    if cfg.scenario is None:
        return synthetic_world(cfg.grid, cfg.agents, cfg.victims, cfg.placement_seed)
    scenario = parse_scenario(Path(cfg.scenario).read_text(encoding="utf-8"))
    if not scenario.snapshots:
        raise ConfigError("$.scenario", "scenario has no snapshots")
    if cfg.snapshot >= len(scenario.snapshots):
        raise ConfigError("$.snapshot", f"scenario has {len(scenario.snapshots)} snapshots")
    grid = cfg.grid
    if (grid.rows, grid.cols) != scenario.grid:
        raise ConfigError("$.grid", f"scenario is laid out on a {scenario.grid[0]}x{scenario.grid[1]} grid")
    return snapshot_to_world(scenario.snapshots[cfg.snapshot], scenario.bounds, grid, clamp=False)


# --- evaluation ----------------------------------------------------------------------


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Per-episode stream, shared by every policy of an experiment."""
    return np.random.default_rng([seed, episode])


def _run_chunk(args) -> list[EpisodeRecord]:
    world0, policy, grid, seed, episodes = args
    return [run_episode(world0, policy, grid, episode_rng(seed, k)) for k in episodes]


def eval_workers() -> int:
    raw = os.environ.get("RESQ_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("RESQ_THREADS", f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("RESQ_THREADS", f"expected a positive integer, got {raw!r}")
    return n


def evaluate(world0: WorldState, policy: Policy, grid: GridConfig, episodes: int, seed: int, workers: int = 1) -> list[EpisodeRecord]:
    """Evaluate ``policy`` for ``episodes`` episodes from ``world0``.

    A policy flagged ``deterministic`` replays the same episode every time from
    a fixed start, so it is played once and the record repeated.
    """
    if getattr(policy, "deterministic", False):
        record = run_episode(world0, policy, grid, episode_rng(seed, 0))
        return [EpisodeRecord(record.steps, record.total_reward, record.rescued) for _ in range(episodes)]
    if workers <= 1 or episodes < 2 * workers:
        return _run_chunk((world0, policy, grid, seed, range(episodes)))
    chunks = [range(k, episodes, workers) for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(world0, policy, grid, seed, c) for c in chunks]))
    records: list[EpisodeRecord | None] = [None] * episodes
    for chunk, part in zip(chunks, parts):
        for k, rec in zip(chunk, part):
            records[k] = rec
    return records


class _Stateless:
    """Adapts a policy function to the ``policy(world, rng)`` calling convention."""

    def __init__(self, fn, deterministic: bool, *args):
        self.fn = fn
        self.deterministic = deterministic
        self.args = args

    def __call__(self, world, rng):
        if self.deterministic:
            return self.fn(world, *self.args)
        return self.fn(world, rng, *self.args)


def build_policy(name: str, cfg: ExperimentConfig, world0: WorldState, rng: np.random.Generator):
    """Return ``(policy, learning_curve)``; trains the policy first when it needs it."""
    grid = cfg.grid
    if name == "random":
        return _Stateless(random_walk, False), None
    if name == "greedy":
        return _Stateless(greedy_best_first, True, grid), None
    if name == "rule":
        table = train_cell_values(grid, world0, cfg.rule_episodes, rng)
        return _Stateless(rule_based, True, table, grid), None
    if name == "vi":
        return ValueIterationAgent(grid, cfg.vi_gamma), None
    if name in LEARNERS:
        learner = LearnerConfig(**{**asdict(cfg.learner), "heuristic_enabled": name == "resq"})
        qtable, curve = train(world0, grid, learner, cfg.train_episodes, rng)
        return GreedyLearnedPolicy(qtable, learner, grid), curve
    raise ConfigError("$.policies", f"unknown policy {name!r}")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[RunSummary]:
    """Train what needs training, then evaluate every policy from the same start state and seeds."""
    world0 = start_world(cfg)
    workers = eval_workers() if workers is None else workers
    summaries = []
    for k, name in enumerate(cfg.policies):
        # training stream depends on the policy name only, not on list position
        train_rng = np.random.default_rng([cfg.seed, POLICIES.index(name), 1])
        policy, curve = build_policy(name, cfg, world0, train_rng)
        records = evaluate(world0, policy, cfg.grid, cfg.eval_episodes, cfg.seed, workers)
        summaries.append(summarize(name, records, curve))
        log.info("%s: reward_rate=%.4f avg_time=%.2f", name, summaries[-1].reward_rate, summaries[-1].avg_time)
    return summaries


# --- reports ------------------------------------------------------------------------


def _csv_value(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def summary_csv(summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for s in summaries:
        writer.writerow([_csv_value(v) for v in s.row().values()])
    return buf.getvalue()


def learning_curve_svg(curve: Sequence[tuple[float, int]], title: str, width: int = 640, height: int = 320) -> str:
    rewards = [r for r, _ in curve]
    lo, hi = min(rewards), max(rewards)
    span = (hi - lo) or 1.0
    pad = 40
    n = max(len(rewards) - 1, 1)
    points = " ".join(
        f"{pad + (width - 2 * pad) * i / n:.2f},{height - pad - (height - 2 * pad) * (r - lo) / span:.2f}"
        for i, r in enumerate(rewards)
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<title>{title}</title>\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">episode (1-{len(rewards)})</text>\n'
        f'<text x="{pad}" y="{pad - 8}" font-size="12">reward {lo:g} .. {hi:g}</text>\n'
        f'<polyline fill="none" stroke="steelblue" stroke-width="1" points="{points}"/>\n'
        "</svg>\n"
    )


def emit_report(summaries: Sequence[RunSummary], out_dir: str | os.PathLike) -> list[Path]:
    """Write summary.csv, summary.json and one learning-curve SVG per trained learner."""
    if not summaries:
        raise EmptyRun("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "summary.json"]
    written[0].write_text(summary_csv(summaries), encoding="utf-8")
    written[1].write_text(json.dumps([s.row() for s in summaries], indent=2) + "\n", encoding="utf-8")
    for s in summaries:
        if s.learning_curve:
            path = out / f"learning_curve_{s.policy}.svg"
            path.write_text(learning_curve_svg(s.learning_curve, f"{s.policy} training reward"), encoding="utf-8")
            written.append(path)
    return written
