"""Command-line entry point: ``resq {convert,compare,train,oracle-check}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Human-readable text goes to stdout; artifacts are written only to files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .assignment import BRUTE_FORCE_LIMIT, brute_force_assign, hungarian_assign
from .errors import ConfigError, ResQError
from .geo import geo_to_cell, parse_scenario, scenario_to_dict
from .harness import POLICIES, ExperimentConfig, emit_report, run_experiment, start_world
from .learner import LearnerConfig, greedy_match, train

# brute force over 8! permutations per instance is too slow for a CLI check
ORACLE_MAX_SIZE = BRUTE_FORCE_LIMIT - 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def default_config_path() -> Path:
    return Path(str(resources.files("resq") / "data" / "default.json"))


# --- convert --------------------------------------------------------------------------


def cmd_convert(args) -> int:
    source = args.csv or args.json
    text = Path(source).read_text(encoding="utf-8")
    scenario = parse_scenario(text)
    rows, cols = scenario.grid
    snapshots = []
    for snap in scenario.snapshots:
        sides = []
        for side in (snap.volunteers, snap.victims):
            # validate every point; with --clamp, store the clamped coordinates
            out = []
            for entity_id, p in side:
                geo_to_cell(scenario.bounds, rows, cols, p, clamp=args.clamp)
                out.append((entity_id, scenario.bounds.clamp(p) if args.clamp else p))
            sides.append(tuple(out))
        snapshots.append(replace(snap, volunteers=sides[0], victims=sides[1]))
    scenario = replace(scenario, snapshots=tuple(snapshots))
    Path(args.out).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8")
    for k, snap in enumerate(scenario.snapshots, start=1):
        print(f"snapshot {k}: {len(snap.volunteers)} volunteers, {len(snap.victims)} victims")
    return 0


# --- compare --------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(summaries) -> str:
    rows = sorted((s.row() for s in summaries), key=lambda r: -r["reward_rate"])
    header = list(rows[0].keys())
    cells = [header] + [[_fmt(r[k]) for k in header] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfg = ExperimentConfig.load(args.config or default_config_path())
    summaries = run_experiment(cfg)
    emit_report(summaries, args.out)
    print(format_table(summaries))
    print(f"reports written to {args.out}")
    return 0


# --- train ----------------------------------------------------------------------------


def curve_path(qtable_path: str | Path) -> Path:
    p = Path(qtable_path)
    return p.with_name(p.stem + "_curve.csv")


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    world0 = start_world(cfg)
    learner = LearnerConfig(**{**asdict(cfg.learner), "heuristic_enabled": args.policy == "resq"})
    rng = np.random.default_rng([cfg.seed, POLICIES.index(args.policy), 1])
    qtable, curve = train(world0, cfg.grid, learner, cfg.train_episodes, rng)
    out = Path(args.out)
    out.write_text(qtable.to_json() + "\n", encoding="utf-8")
    curve_out = Path(args.curve) if args.curve else curve_path(out)
    with curve_out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "reward", "steps"])
        for k, (reward, steps) in enumerate(curve, start=1):
            writer.writerow([k, repr(float(reward)), steps])
    last = curve[-1]
    print(f"trained {args.policy} for {len(curve)} episodes; last episode reward {last[0]:g} in {last[1]} steps")
    print(f"q-table: {out} ({len(qtable)} states)")
    print(f"curve: {curve_out}")
    return 0


# --- oracle-check ---------------------------------------------------------------------


def cmd_oracle_check(args) -> int:
    n, k = args.size, args.instances
    if not 1 <= n <= ORACLE_MAX_SIZE:
        raise UsageError(f"--size must lie in 1..{ORACLE_MAX_SIZE} for the brute-force arm")
    if k < 1:
        raise UsageError("--instances must be >= 1")
    rng = np.random.default_rng(args.seed)
    agree = 0
    max_gap = 0
    for _ in range(k):
        agents = rng.integers(0, 25, size=(n, 2))
        victims = rng.integers(0, 25, size=(n, 2))
        # rows = victims, columns = volunteers
        c = np.abs(victims[:, None, :] - agents[None, :, :]).sum(axis=2)
        exact = brute_force_assign(c)
        fast = hungarian_assign(c)
        if fast.total_cost == exact.total_cost:
            agree += 1
        greedy = greedy_match(agents.tolist(), victims.tolist()).total_distance
        max_gap = max(max_gap, greedy - int(exact.total_cost))
    print(f"hungarian==bruteforce: {agree}/{k}")
    print(f"max greedy-match optimality gap: {max_gap}")
    return 0 if agree == k else 2


# --- wiring ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resq", description="Rescue scheduling experiments on a grid world.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="turn a CSV/JSON scenario into canonical scenario JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", metavar="PATH")
    src.add_argument("--json", metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--clamp", action="store_true", help="clamp out-of-region points to the nearest edge")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("compare", help="train and evaluate every configured policy")
    p.add_argument("--config", metavar="PATH", help="experiment config (default: bundled benchmark)")
    p.add_argument("--out", default="results", metavar="DIR")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="train one learner and save its table and curve")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--policy", required=True, choices=("resq", "rl"))
    p.add_argument("--out", required=True, metavar="QTABLE_PATH")
    p.add_argument("--curve", metavar="PATH", help="curve CSV (default: <out stem>_curve.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oracle-check", help="cross-check the Hungarian solver against brute force")
    p.add_argument("--size", type=int, default=5, metavar="N")
    p.add_argument("--instances", type=int, default=1000, metavar="K")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"resq {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ResQError, OSError, ValueError) as exc:
        print(f"resq {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
